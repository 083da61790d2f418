//! Infill criteria: expected improvement below a threshold, its product over
//! objectives (mEI), expected hypervolume improvement, and the Monte-Carlo
//! batch criteria q-mEI and mq-EI.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_dim, Error, Result};
use crate::gp::{JointSampler, MultiSurrogate, Prediction};
use crate::pareto::{Design, EmpiricalFront};
use crate::rng::stream;

/// Default Monte-Carlo sample count for the batch criteria.
pub const DEFAULT_N_MC: usize = 10_000;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn norm_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "mEI", alias = "mei")]
    Mei,
    #[serde(rename = "EHI", alias = "ehi")]
    Ehi,
    #[serde(rename = "q-mEI", alias = "qmei")]
    QMei,
    #[serde(rename = "mq-EI", alias = "mqei")]
    MqEi,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Mei => "mEI",
            Criterion::Ehi => "EHI",
            Criterion::QMei => "q-mEI",
            Criterion::MqEi => "mq-EI",
        }
    }
}

/// Expected improvement `E[(threshold - Y)+]` for `Y ~ N(mean, sd²)`.
pub fn ei(mean: f64, sd: f64, threshold: f64) -> f64 {
    ei_parts(mean, sd, threshold).0
}

/// EI with its partial derivatives in `mean` and `sd`.
pub(crate) fn ei_parts(mean: f64, sd: f64, threshold: f64) -> (f64, f64, f64) {
    let diff = threshold - mean;
    if !(sd > 0.0) {
        return if diff > 0.0 { (diff, -1.0, 0.0) } else { (0.0, 0.0, 0.0) };
    }
    let u = diff / sd;
    let cdf = norm_cdf(u);
    let pdf = norm_pdf(u);
    let value = (diff * cdf + sd * pdf).max(0.0);
    (value, -cdf, pdf)
}

fn check_reference(models: &MultiSurrogate, x: &[f64], r: &[f64]) -> Result<()> {
    check_dim(models.n_objectives(), r.len())?;
    check_dim(models.dim(), x.len())?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("reference point must be finite".into()));
    }
    Ok(())
}

/// Product of per-objective EIs below `r`.
pub fn mei(models: &MultiSurrogate, x: &[f64], r: &[f64]) -> Result<f64> {
    check_reference(models, x, r)?;
    Ok(mei_of(&models.predict(x), r))
}

pub(crate) fn mei_of(preds: &[Prediction], r: &[f64]) -> f64 {
    preds.iter().zip(r).map(|(p, rj)| ei(p.mean, p.sd, *rj)).product()
}

/// mEI and its gradient with respect to `x`.
pub fn mei_with_gradient(models: &MultiSurrogate, x: &[f64], r: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_reference(models, x, r)?;
    let d = x.len();
    let parts: Vec<_> = models
        .models
        .iter()
        .zip(r)
        .map(|(model, rj)| {
            let p = model.predict_with_gradient(x);
            let (e, de_dmean, de_dsd) = ei_parts(p.mean, p.sd, *rj);
            let grad: Vec<f64> = (0..d).map(|c| de_dmean * p.d_mean[c] + de_dsd * p.d_sd[c]).collect();
            (e, grad)
        })
        .collect();
    let value: f64 = parts.iter().map(|(e, _)| e).product();
    let mut grad = vec![0.0; d];
    for (j, (_, gj)) in parts.iter().enumerate() {
        let others: f64 = parts.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, (e, _))| e).product();
        for c in 0..d {
            grad[c] += others * gj[c];
        }
    }
    Ok((value, grad))
}

pub fn mei_gradient(models: &MultiSurrogate, x: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    Ok(mei_with_gradient(models, x, r)?.1)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Expected hypervolume improvement of the front up to `r`. Exact for two
/// objectives; Monte-Carlo (10^5 samples, fixed seed) otherwise.
pub fn ehi(models: &MultiSurrogate, x: &[f64], r: &[f64], front: &EmpiricalFront) -> Result<f64> {
    check_reference(models, x, r)?;
    let preds = models.predict(x);
    if r.len() == 2 {
        Ok(ehi_exact_2d(&preds, r, front))
    } else {
        Ok(ehi_mc(&preds, r, front, 100_000, 0x0e41).value)
    }
}

/// Exact two-objective EHI from marginal predictions.
pub fn ehi_exact_2d(preds: &[Prediction], r: &[f64], front: &EmpiricalFront) -> f64 {
    let mut relevant: Vec<(f64, f64)> =
        front.points.iter().filter(|p| p[0] < r[0] && p[1] < r[1]).map(|p| (p[0], p[1])).collect();
    relevant.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let g1 = |z: f64| ei(preds[0].mean, preds[0].sd, z);
    let g2 = |z: f64| ei(preds[1].mean, preds[1].sd, z);
    if relevant.is_empty() {
        return g1(r[0]) * g2(r[1]);
    }
    // vertical strips of the non-dominated part of the box below r
    let mut total = g1(relevant[0].0) * g2(r[1]);
    for i in 0..relevant.len() {
        let lo = relevant[i].0;
        let hi = relevant.get(i + 1).map_or(r[0], |p| p.0);
        if hi > lo {
            total += (g1(hi) - g1(lo)) * g2(relevant[i].1);
        }
    }
    total.max(0.0)
}

/// Monte-Carlo EHI for any number of objectives, integrating
/// `P(Y ≤ z)` over the part of the box below `r` not dominated by the front.
pub fn ehi_mc(preds: &[Prediction], r: &[f64], front: &EmpiricalFront, n: usize, seed: u64) -> McEstimate {
    use rand::Rng;
    let m = r.len();
    let lower: Vec<f64> = preds.iter().zip(r).map(|(p, rj)| (p.mean - 8.0 * p.sd).min(*rj)).collect();
    let volume: f64 = lower.iter().zip(r).map(|(l, u)| u - l).product();
    if !(volume > 0.0) {
        return McEstimate { value: 0.0, std_error: 0.0 };
    }
    let mut rng = stream(seed, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut z = vec![0.0; m];
    for _ in 0..n {
        for j in 0..m {
            z[j] = lower[j] + (r[j] - lower[j]) * rng.random::<f64>();
        }
        let covered = front.points.iter().any(|p| p.iter().zip(&z).all(|(a, b)| a <= b));
        let w = if covered {
            0.0
        } else {
            preds
                .iter()
                .zip(&z)
                .map(|(p, zj)| if p.sd > 0.0 { norm_cdf((zj - p.mean) / p.sd) } else if *zj >= p.mean { 1.0 } else { 0.0 })
                .product::<f64>()
                * volume
        };
        sum += w;
        sum_sq += w * w;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    McEstimate { value: mean, std_error: (var / nf).sqrt() }
}

/// Frozen standard normals shared across batch evaluations (common random
/// numbers). Layout: sample-major, then objective, then batch slot.
#[derive(Clone, Debug)]
pub struct McSampler {
    n_mc: usize,
    m: usize,
    q: usize,
    z: Vec<f64>,
}

/// Per-sample, per-point, per-objective improvements `(R_j − Ỹ_j)+`.
#[derive(Clone, Debug)]
pub struct BatchPosteriorDraws {
    /// `improvements[k][i][j]`, batch points in canonical order.
    pub improvements: Vec<Vec<Vec<f64>>>,
    /// The batch in canonical (sorted, deduplicated) order.
    pub points: Vec<Design>,
}

impl BatchPosteriorDraws {
    pub fn n_samples(&self) -> usize {
        self.improvements.len()
    }

    /// q-mEI integrand of sample `k`.
    pub fn qmei_sample(&self, k: usize) -> f64 {
        self.improvements[k].iter().map(|imp| imp.iter().product::<f64>()).fold(0.0, f64::max)
    }

    /// Per-objective batch maxima of sample `k`.
    pub fn objective_maxima(&self, k: usize) -> Vec<f64> {
        let m = self.improvements[k][0].len();
        (0..m).map(|j| self.improvements[k].iter().map(|imp| imp[j]).fold(0.0, f64::max)).collect()
    }

    pub fn qmei(&self) -> McEstimate {
        mean_and_se((0..self.n_samples()).map(|k| self.qmei_sample(k)))
    }

    pub fn mqei(&self) -> McEstimate {
        let n = self.n_samples();
        let m = self.improvements[0][0].len();
        let per_obj: Vec<McEstimate> =
            (0..m).map(|j| mean_and_se((0..n).map(|k| self.objective_maxima(k)[j]))).collect();
        product_estimate(&per_obj)
    }
}

/// Product of independent estimates with a delta-method standard error.
fn product_estimate(per_obj: &[McEstimate]) -> McEstimate {
    let value: f64 = per_obj.iter().map(|e| e.value).product();
    let var: f64 = (0..per_obj.len())
        .map(|j| {
            let others: f64 = per_obj.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, e)| e.value).product();
            (others * per_obj[j].std_error).powi(2)
        })
        .sum();
    McEstimate { value, std_error: var.sqrt() }
}

/// Running mean and spread; constant samples give an exact mean and zero
/// spread.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn estimate(&self) -> McEstimate {
        let nf = self.n as f64;
        let var = if self.n > 1 { (self.m2 / (nf - 1.0)).max(0.0) } else { 0.0 };
        McEstimate { value: self.mean, std_error: (var / nf).sqrt() }
    }
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> McEstimate {
    let mut acc = Welford::default();
    values.for_each(|v| acc.push(v));
    acc.estimate()
}

/// Sorts a batch lexicographically and drops repeated points.
pub fn canonical_batch(batch: &[Design]) -> Vec<Design> {
    let mut points = batch.to_vec();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    points.dedup();
    points
}

impl McSampler {
    pub fn new(n_mc: usize, m: usize, q: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0x3c);
        let z = (0..n_mc.max(1) * m * q).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { n_mc: n_mc.max(1), m, q, z }
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    /// Joint posterior improvements at the batch, using the frozen normals.
    pub fn draws(&self, models: &MultiSurrogate, batch: &[Design], r: &[f64]) -> Result<BatchPosteriorDraws> {
        if batch.is_empty() {
            return Err(Error::EmptySet("batch"));
        }
        check_dim(self.m, models.n_objectives())?;
        check_dim(self.m, r.len())?;
        let points = canonical_batch(batch);
        if points.len() > self.q {
            return Err(Error::Config(format!("batch of {} points exceeds sampler size {}", points.len(), self.q)));
        }
        let samplers = models.models.iter().map(|g| JointSampler::new(g, &points)).collect::<Result<Vec<_>>>()?;
        let p = points.len();
        let mut improvements = vec![vec![vec![0.0; self.m]; p]; self.n_mc];
        for (k, sample) in improvements.iter_mut().enumerate() {
            for (j, sampler) in samplers.iter().enumerate() {
                let offset = (k * self.m + j) * self.q;
                let y = sampler.draw(&self.z[offset..offset + self.q]);
                for (i, yi) in y.iter().enumerate() {
                    sample[i][j] = (r[j] - yi).max(0.0);
                }
            }
        }
        Ok(BatchPosteriorDraws { improvements, points })
    }

    /// q-mEI estimate without materializing the draws.
    pub fn qmei(&self, models: &MultiSurrogate, batch: &[Design], r: &[f64]) -> Result<McEstimate> {
        let (samplers, points) = self.prepare(models, batch, r)?;
        let p = points.len();
        let mut prod = vec![1.0; p];
        let mut y = vec![0.0; p];
        let mut scratch = Vec::with_capacity(p);
        let mut acc = Welford::default();
        for k in 0..self.n_mc {
            prod.iter_mut().for_each(|v| *v = 1.0);
            for (j, sampler) in samplers.iter().enumerate() {
                let offset = (k * self.m + j) * self.q;
                sampler.draw_into(&self.z[offset..offset + self.q], &mut scratch, &mut y);
                for i in 0..p {
                    prod[i] *= (r[j] - y[i]).max(0.0);
                }
            }
            acc.push(prod.iter().cloned().fold(0.0, f64::max));
        }
        Ok(acc.estimate())
    }

    /// mq-EI estimate without materializing the draws; same value as
    /// [`BatchPosteriorDraws::mqei`].
    pub fn mqei(&self, models: &MultiSurrogate, batch: &[Design], r: &[f64]) -> Result<McEstimate> {
        let (samplers, points) = self.prepare(models, batch, r)?;
        let p = points.len();
        let mut y = vec![0.0; p];
        let mut scratch = Vec::with_capacity(p);
        let mut acc = vec![Welford::default(); self.m];
        for k in 0..self.n_mc {
            for (j, sampler) in samplers.iter().enumerate() {
                let offset = (k * self.m + j) * self.q;
                sampler.draw_into(&self.z[offset..offset + self.q], &mut scratch, &mut y);
                acc[j].push(y.iter().map(|yi| (r[j] - yi).max(0.0)).fold(0.0, f64::max));
            }
        }
        let per_obj: Vec<McEstimate> = acc.iter().map(Welford::estimate).collect();
        Ok(product_estimate(&per_obj))
    }

    fn prepare(&self, models: &MultiSurrogate, batch: &[Design], r: &[f64]) -> Result<(Vec<JointSampler>, Vec<Design>)> {
        if batch.is_empty() {
            return Err(Error::EmptySet("batch"));
        }
        check_dim(self.m, models.n_objectives())?;
        check_dim(self.m, r.len())?;
        let points = canonical_batch(batch);
        if points.len() > self.q {
            return Err(Error::Config(format!("batch of {} points exceeds sampler size {}", points.len(), self.q)));
        }
        let samplers = models.models.iter().map(|g| JointSampler::new(g, &points)).collect::<Result<Vec<_>>>()?;
        Ok((samplers, points))
    }
}

/// q-mEI: expected maximum over the batch of the product of improvements.
pub fn qmei_mc(models: &MultiSurrogate, batch: &[Design], r: &[f64], n_mc: usize, seed: u64) -> Result<McEstimate> {
    McSampler::new(n_mc, models.n_objectives(), batch.len(), seed).qmei(models, batch, r)
}

/// mq-EI: product over objectives of the expected batch-maximum improvement.
pub fn mqei_mc(models: &MultiSurrogate, batch: &[Design], r: &[f64], n_mc: usize, seed: u64) -> Result<McEstimate> {
    McSampler::new(n_mc, models.n_objectives(), batch.len(), seed).mqei(models, batch, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelParams, SurrogateModel};
    use crate::pareto::hypervolume;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn model(xs: &[f64], ys: &[f64], ls: f64, var: f64, mean: f64) -> SurrogateModel {
        let xs: Vec<Design> = xs.iter().map(|x| Design(vec![*x])).collect();
        let p = KernelParams { lengthscales: vec![ls], signal_variance: var, nugget: 0.0, constant_mean: mean };
        SurrogateModel::with_params(&xs, ys, p).unwrap()
    }

    fn pair() -> MultiSurrogate {
        MultiSurrogate {
            models: vec![
                model(&[0.0, 0.5, 1.0], &[0.1, 0.3, 0.8], 0.3, 0.5, 0.3),
                model(&[0.0, 0.5, 1.0], &[0.9, 0.4, 0.2], 0.4, 0.4, 0.5),
            ],
        }
    }

    #[test]
    fn ei_examples() {
        assert_eq!(ei(0.5, 0.0, 1.0), 0.5);
        assert!((ei(0.0, 1.0, 0.0) - 0.398_942_280_4).abs() < 1e-9);
        assert!((ei(0.0, 1.0, 1.0) - 1.083_315_470_9).abs() < 1e-6);
        assert_eq!(ei(2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn ei_far_tail_is_small_and_nonnegative() {
        assert!(ei(0.0, 1.0, -40.0) >= 0.0);
        assert!(ei(0.0, 1.0, -40.0) < 1e-300);
    }

    proptest! {
        #[test]
        fn ei_monotonicity(mean in -3.0f64..3.0, sd in 0.0f64..3.0, thr in -3.0f64..3.0, dm in 0.0f64..1.0, ds in 0.0f64..1.0) {
            let base = ei(mean, sd, thr);
            prop_assert!(base >= (thr - mean).max(0.0) - 1e-12);
            prop_assert!(ei(mean + dm, sd, thr) <= base + 1e-12);
            prop_assert!(ei(mean, sd + ds, thr) >= base - 1e-12);
        }
    }

    #[test]
    fn mei_zero_factor() {
        let m = pair();
        // at a training input the first objective is exactly 0.3 ≥ R1
        assert_eq!(mei(&m, &[0.5], &[0.2, 10.0]).unwrap(), 0.0);
    }

    #[test]
    fn mei_standard_normal_pair() {
        let p = [Prediction { mean: 0.0, sd: 1.0 }, Prediction { mean: 0.0, sd: 1.0 }];
        assert!((mei_of(&p, &[1.0, 1.0]) - 1.083_315_470_9f64.powi(2)).abs() < 1e-6);
    }

    #[test]
    fn mei_gradient_matches_finite_differences() {
        let m = pair();
        let r = [0.35, 0.5];
        let h = 1e-5;
        let mut rng = stream(3, 0);
        for _ in 0..50 {
            let x: f64 = rng.random();
            let g = mei_gradient(&m, &[x], &r).unwrap()[0];
            let fd = (mei(&m, &[x + h], &r).unwrap() - mei(&m, &[x - h], &r).unwrap()) / (2.0 * h);
            assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-6), "{g} vs {fd}");
        }
    }

    #[test]
    fn mei_gradient_symmetric_axis() {
        let g1 = model(&[0.2, 0.8], &[1.0, 1.0], 0.3, 1.0, 0.0);
        let g2 = model(&[0.2, 0.8], &[0.5, 0.5], 0.3, 1.0, 0.0);
        let m = MultiSurrogate { models: vec![g1, g2] };
        let g = mei_gradient(&m, &[0.5], &[0.8, 0.4]).unwrap();
        assert!(g[0].abs() < 1e-6);
    }

    #[test]
    fn mei_gradient_zero_on_dead_region() {
        // flat models: every prediction is deterministic above R
        let flat = |c: f64| {
            let xs = vec![Design(vec![0.0]), Design(vec![1.0])];
            SurrogateModel::fit(&xs, &[c, c], &Default::default()).unwrap()
        };
        let m = MultiSurrogate { models: vec![flat(2.0), flat(2.0)] };
        assert_eq!(mei(&m, &[0.4], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(mei_gradient(&m, &[0.4], &[1.0, 1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn ehi_equals_mei_when_reference_not_dominated() {
        let m = pair();
        let front = EmpiricalFront::extract(&[vec![0.1, 0.9].into(), vec![0.3, 0.4].into(), vec![0.8, 0.2].into()]).unwrap();
        let r = [0.25, 0.45];
        let x = [0.33];
        assert!((ehi(&m, &x, &r, &front).unwrap() - mei(&m, &x, &r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ehi_zero_when_fully_dominated() {
        let p = [Prediction { mean: 2.0, sd: 1e-3 }, Prediction { mean: 2.0, sd: 1e-3 }];
        let front = EmpiricalFront::extract(&[vec![0.0, 0.0].into()]).unwrap();
        assert!(ehi_exact_2d(&p, &[3.0, 3.0], &front) < 1e-12);
    }

    #[test]
    fn ehi_matches_hypervolume_oracle() {
        let mut rng = stream(17, 0);
        for _ in 0..5 {
            let pts: Vec<crate::ObjectiveVector> =
                (0..6).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()].into()).collect();
            let front = EmpiricalFront::extract(&pts).unwrap();
            let r = [1.1, 1.1];
            let preds = [
                Prediction { mean: rng.random::<f64>(), sd: 0.1 + 0.3 * rng.random::<f64>() },
                Prediction { mean: rng.random::<f64>(), sd: 0.1 + 0.3 * rng.random::<f64>() },
            ];
            let exact = ehi_exact_2d(&preds, &r, &front);
            let base = hypervolume(&front, &r);
            let mut draws = stream(18, 0);
            let n = 100_000;
            let gains: Vec<f64> = (0..n)
                .map(|_| {
                    let z1: f64 = StandardNormal.sample(&mut draws);
                    let z2: f64 = StandardNormal.sample(&mut draws);
                    let y = vec![preds[0].mean + preds[0].sd * z1, preds[1].mean + preds[1].sd * z2];
                    let mut all = front.points.clone();
                    all.push(y.into());
                    hypervolume(&EmpiricalFront::extract(&all).unwrap(), &r) - base
                })
                .collect();
            let est = mean_and_se(gains.into_iter());
            assert!((exact - est.value).abs() < 3.0 * est.std_error.max(1e-12), "{exact} vs {est:?}");
            // the generic integration path agrees too
            let mc = ehi_mc(&preds, &r, &front, 200_000, 5);
            assert!((exact - mc.value).abs() < 3.0 * mc.std_error.max(1e-12), "{exact} vs {mc:?}");
        }
    }

    #[test]
    fn q1_batch_matches_mei() {
        let m = pair();
        let r = [0.35, 0.5];
        let x = Design(vec![0.27]);
        let est = qmei_mc(&m, &[x.clone()], &r, 20_000, 4).unwrap();
        let exact = mei(&m, &x, &r).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn repeated_point_batches_reduce_to_mei() {
        let m = pair();
        let r = [0.35, 0.5];
        let x = Design(vec![0.71]);
        let exact = mei(&m, &x, &r).unwrap();
        let q = qmei_mc(&m, &[x.clone(), x.clone()], &r, 20_000, 5).unwrap();
        let mq = mqei_mc(&m, &[x.clone(), x.clone()], &r, 20_000, 5).unwrap();
        assert!((q.value - exact).abs() < 3.0 * q.std_error);
        assert!((mq.value - exact).abs() < 3.0 * mq.std_error);
    }

    #[test]
    fn training_batch_is_null() {
        let m = pair();
        // observations (0.1,0.9), (0.3,0.4), (0.8,0.2) do not dominate R
        let r = [0.2, 0.3];
        let est = qmei_mc(&m, &[Design(vec![0.0]), Design(vec![0.5])], &r, 1000, 6).unwrap();
        assert_eq!(est.value, 0.0);
        let x2 = Design(vec![0.2]);
        let mixed = qmei_mc(&m, &[Design(vec![0.5]), x2.clone()], &r, 20_000, 7).unwrap();
        let exact = mei(&m, &x2, &r).unwrap();
        assert!((mixed.value - exact).abs() < 3.0 * mixed.std_error);
    }

    #[test]
    fn mqei_counterexample_is_exact() {
        let m = pair();
        // y=(0.1,0.9) at x=0, y'=(0.8,0.2) at x=1, R=(0.5,0.5)
        let r = [0.5, 0.5];
        let est = mqei_mc(&m, &[Design(vec![0.0]), Design(vec![1.0])], &r, 100, 8).unwrap();
        assert_eq!(est.value, (0.5 - 0.1) * (0.5 - 0.2));
        assert_eq!(est.std_error, 0.0);
        assert_eq!(qmei_mc(&m, &[Design(vec![0.0]), Design(vec![1.0])], &r, 100, 8).unwrap().value, 0.0);
    }

    #[test]
    fn batch_criteria_are_permutation_symmetric() {
        let m = pair();
        let r = [0.35, 0.5];
        let a = Design(vec![0.2]);
        let b = Design(vec![0.8]);
        let s = McSampler::new(2000, 2, 2, 9);
        assert_eq!(s.qmei(&m, &[a.clone(), b.clone()], &r).unwrap(), s.qmei(&m, &[b.clone(), a.clone()], &r).unwrap());
        assert_eq!(s.mqei(&m, &[a.clone(), b.clone()], &r).unwrap(), s.mqei(&m, &[b, a], &r).unwrap());
    }

    #[test]
    fn pathwise_product_of_maxima_dominates() {
        let m = pair();
        let r = [0.35, 0.5];
        let s = McSampler::new(5000, 2, 3, 10);
        let batch = [Design(vec![0.15]), Design(vec![0.66]), Design(vec![0.9])];
        let draws = s.draws(&m, &batch, &r).unwrap();
        for k in 0..draws.n_samples() {
            let prod: f64 = draws.objective_maxima(k).iter().product();
            assert!(draws.qmei_sample(k) <= prod);
        }
        let q = draws.qmei();
        let mq = draws.mqei();
        assert!(mq.value >= q.value - 3.0 * (q.std_error.powi(2) + mq.std_error.powi(2)).sqrt());
        assert_eq!(q, s.qmei(&m, &batch, &r).unwrap());
        assert_eq!(mq, s.mqei(&m, &batch, &r).unwrap());
    }
}
