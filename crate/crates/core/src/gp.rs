//! Gaussian-process surrogates, one independent model per objective.
//!
//! Kernel: anisotropic Matérn-5/2 with a constant mean. The mean and the
//! signal variance are profiled out of the likelihood; lengthscales are
//! found by multistart projected gradient ascent in log space. The nugget is
//! numerical jitter only: observations are treated as exact, so predictions
//! at a training input return the observed value with zero spread.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pareto::{BoxDomain, Design};
use crate::rng::{mix64, stream};
use crate::search::lhs;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Nugget ratios (relative to the signal variance) tried in turn when the
/// kernel matrix fails to factorize.
const NUGGET_LADDER: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Jitter ratios for joint posterior covariances.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    /// Absolute variance added to the kernel diagonal.
    pub nugget: f64,
    pub constant_mean: f64,
}

impl KernelParams {
    fn validate(&self, d: usize) -> Result<()> {
        check_dim(d, self.lengthscales.len())?;
        if self.lengthscales.iter().any(|l| !(*l > 0.0) || !l.is_finite())
            || !(self.signal_variance > 0.0)
            || !(self.nugget >= 0.0)
            || !self.constant_mean.is_finite()
        {
            return Err(Error::Config(format!("invalid kernel parameters {self:?}")));
        }
        Ok(())
    }
}

/// Matérn-5/2 correlation at scaled distance `r`.
fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// `(5/3)(1 + √5 r) e^{-√5 r}`, the common factor of all kernel derivatives.
fn matern52_slope(r: f64) -> f64 {
    let s = SQRT5 * r;
    5.0 / 3.0 * (1.0 + s) * (-s).exp()
}

fn scaled_distance(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter().zip(b).zip(lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
}

fn correlation_matrix(xs: &[Design], lengthscales: &[f64]) -> DMatrix<f64> {
    let n = xs.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in 0..i {
            let v = matern52(scaled_distance(&xs[i], &xs[j], lengthscales));
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Hyperparameter search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_starts: usize,
    /// Gradient-ascent iterations per start.
    pub max_iters: usize,
    pub seed: u64,
    /// Lengthscale bounds as multiples of the domain width.
    pub lengthscale_bounds: (f64, f64),
    /// Per-dimension domain widths; the data range is used when absent.
    pub widths: Option<Vec<f64>>,
    /// Log-normal prior `(loc, scale)` on each lengthscale divided by its
    /// width; the location used is `loc + ln(d) / 2`. When set, the fit
    /// maximizes the posterior density instead of the likelihood, which
    /// keeps tiny designs off the short-lengthscale plateau.
    pub lengthscale_prior: Option<(f64, f64)>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 10,
            max_iters: 60,
            seed: 0,
            lengthscale_bounds: (0.01, 10.0),
            widths: None,
            lengthscale_prior: Some((std::f64::consts::SQRT_2, 3f64.sqrt())),
        }
    }
}

impl FitConfig {
    pub fn for_domain(domain: &BoxDomain, seed: u64) -> Self {
        Self { widths: Some(domain.widths()), seed, ..Self::default() }
    }
}

/// Posterior mean and standard deviation at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

/// Prediction together with its spatial gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionGradient {
    pub mean: f64,
    pub sd: f64,
    pub d_mean: Vec<f64>,
    pub d_sd: Vec<f64>,
}

/// A fitted GP for one objective.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    inputs: Vec<Design>,
    outputs: Vec<f64>,
    params: KernelParams,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

/// Result of factorizing `σ²(R + τI)` at fixed lengthscales.
struct Profile {
    chol: Cholesky<f64, Dyn>,
    mean: f64,
    variance: f64,
    nugget_ratio: f64,
    log_likelihood: f64,
}

fn profile(xs: &[Design], ys: &DVector<f64>, lengthscales: &[f64]) -> Option<Profile> {
    let n = xs.len();
    let base = correlation_matrix(xs, lengthscales);
    for &tau in &NUGGET_LADDER {
        let mut c = base.clone();
        for i in 0..n {
            c[(i, i)] += tau;
        }
        let Some(chol) = Cholesky::new(c) else { continue };
        let ones = DVector::from_element(n, 1.0);
        let c_inv_1 = chol.solve(&ones);
        let c_inv_y = chol.solve(ys);
        let mean = c_inv_y.sum() / c_inv_1.sum();
        let resid = ys.add_scalar(-mean);
        let alpha = chol.solve(&resid);
        let variance = (resid.dot(&alpha) / n as f64).max(f64::MIN_POSITIVE);
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let nf = n as f64;
        let log_likelihood =
            -0.5 * nf * (variance.ln() + 1.0 + (2.0 * std::f64::consts::PI).ln()) - 0.5 * log_det;
        if !log_likelihood.is_finite() || !mean.is_finite() {
            return None;
        }
        return Some(Profile { chol, mean, variance, nugget_ratio: tau, log_likelihood });
    }
    None
}

/// Gradient of the profiled log-likelihood with respect to log-lengthscales.
fn profile_gradient(xs: &[Design], ys: &DVector<f64>, lengthscales: &[f64], p: &Profile) -> Vec<f64> {
    let n = xs.len();
    let d = lengthscales.len();
    let c_inv = p.chol.inverse();
    let alpha = p.chol.solve(&ys.add_scalar(-p.mean));
    let mut grad = vec![0.0; d];
    for i in 0..n {
        for j in 0..i {
            let r = scaled_distance(&xs[i], &xs[j], lengthscales);
            let slope = matern52_slope(r);
            let weight = alpha[i] * alpha[j] / p.variance - c_inv[(i, j)];
            for (k, g) in grad.iter_mut().enumerate() {
                let delta = (xs[i][k] - xs[j][k]) / lengthscales[k];
                // symmetric pair (i,j) and (j,i), times the 1/2 in front
                *g += weight * slope * delta * delta;
            }
        }
    }
    grad
}

impl SurrogateModel {
    /// Fits a model by maximum likelihood.
    pub fn fit(xs: &[Design], ys: &[f64], config: &FitConfig) -> Result<Self> {
        let (xs, ys) = dedup_training(xs, ys)?;
        let d = xs[0].len();
        let widths: Vec<f64> = match &config.widths {
            Some(w) => {
                check_dim(d, w.len())?;
                w.clone()
            }
            None => (0..d)
                .map(|k| {
                    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x[k]), hi.max(x[k]))
                    });
                    if hi > lo { hi - lo } else { 1.0 }
                })
                .collect(),
        };
        let y_vec = DVector::from_column_slice(&ys);
        let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if y_max - y_min <= 1e-14 * y_max.abs().max(1.0) {
            // flat data: the likelihood has no maximum in the variance
            let params = KernelParams {
                lengthscales: widths.clone(),
                signal_variance: 1e-12 * y_max.abs().max(1.0).powi(2),
                nugget: 0.0,
                constant_mean: ys[0],
            };
            return Self::with_params(&xs, &ys, params);
        }

        let (lo_mult, hi_mult) = config.lengthscale_bounds;
        let lower: Vec<f64> = widths.iter().map(|w| (lo_mult * w).ln()).collect();
        let upper: Vec<f64> = widths.iter().map(|w| (hi_mult * w).ln()).collect();
        let log_box = BoxDomain::new(lower.clone(), upper.clone())?;
        let starts = lhs(config.n_starts.max(1), &log_box, mix64(config.seed, 0x6770));

        let prior = config.lengthscale_prior.map(|(loc, scale)| LogPrior {
            loc: loc + 0.5 * (d as f64).ln(),
            scale,
            log_widths: widths.iter().map(|w| w.ln()).collect(),
        });

        let mut best: Option<(Vec<f64>, Profile, f64)> = None;
        for start in starts {
            let Some((theta, prof, obj)) =
                ascend(&xs, &y_vec, start.0, &lower, &upper, prior.as_ref(), config.max_iters)
            else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((_, _, b)) => obj > *b,
            };
            if better {
                best = Some((theta, prof, obj));
            }
        }
        let (theta, prof, _) = best.ok_or_else(|| {
            Error::Conditioning("kernel matrix singular at every nugget level".into())
        })?;
        let lengthscales: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let params = KernelParams {
            lengthscales,
            signal_variance: prof.variance,
            nugget: prof.nugget_ratio * prof.variance,
            constant_mean: prof.mean,
        };
        let mut model = Self::with_params(&xs, &ys, params)?;
        model.log_likelihood = prof.log_likelihood;
        Ok(model)
    }

    /// Builds the posterior for fixed hyperparameters. The nugget is
    /// escalated along the jitter ladder if the matrix does not factorize.
    pub fn with_params(xs: &[Design], ys: &[f64], params: KernelParams) -> Result<Self> {
        let (xs, ys) = dedup_training(xs, ys)?;
        params.validate(xs[0].len())?;
        let n = xs.len();
        let base = correlation_matrix(&xs, &params.lengthscales) * params.signal_variance;
        let mut params = params;
        let ladder = std::iter::once(params.nugget)
            .chain(NUGGET_LADDER.iter().map(|t| t * params.signal_variance).filter(|v| *v > params.nugget));
        for nugget in ladder.collect::<Vec<_>>() {
            let mut k = base.clone();
            for i in 0..n {
                k[(i, i)] += nugget;
            }
            if let Some(chol) = Cholesky::new(k) {
                params.nugget = nugget;
                let resid = DVector::from_iterator(n, ys.iter().map(|y| y - params.constant_mean));
                let alpha = chol.solve(&resid);
                let l = chol.unpack();
                let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let log_likelihood = -0.5 * resid.dot(&alpha)
                    - 0.5 * log_det
                    - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                return Ok(Self { inputs: xs, outputs: ys, params, chol: l, alpha, log_likelihood });
            }
        }
        Err(Error::Conditioning("kernel matrix singular after nugget escalation".into()))
    }

    pub fn inputs(&self) -> &[Design] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Lower-triangular factor of the training kernel matrix.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// The training kernel matrix, nugget included.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let mut k = correlation_matrix(&self.inputs, &self.params.lengthscales) * self.params.signal_variance;
        for i in 0..k.nrows() {
            k[(i, i)] += self.params.nugget;
        }
        k
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.params.signal_variance * matern52(scaled_distance(a, b, &self.params.lengthscales))
    }

    fn training_index(&self, x: &[f64]) -> Option<usize> {
        self.inputs.iter().position(|t| t[..] == *x)
    }

    fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|t| self.kernel(x, t)))
    }

    fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve_lower_triangular(b).expect("non-singular factor")
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        if let Some(i) = self.training_index(x) {
            return Prediction { mean: self.outputs[i], sd: 0.0 };
        }
        let k = self.cross_covariance(x);
        let mean = self.params.constant_mean + k.dot(&self.alpha);
        let v = self.solve_lower(&k);
        let var = (self.params.signal_variance - v.norm_squared()).max(0.0);
        Prediction { mean, sd: var.sqrt() }
    }

    /// Prediction and its gradient with respect to `x`.
    pub fn predict_with_gradient(&self, x: &[f64]) -> PredictionGradient {
        let d = self.dim();
        let n = self.inputs.len();
        let k = self.cross_covariance(x);
        // dk[i][c] = ∂k(x, x_i)/∂x_c
        let mut dk = DMatrix::zeros(n, d);
        for (i, t) in self.inputs.iter().enumerate() {
            let r = scaled_distance(x, t, &self.params.lengthscales);
            let slope = self.params.signal_variance * matern52_slope(r);
            for c in 0..d {
                let l = self.params.lengthscales[c];
                dk[(i, c)] = -slope * (x[c] - t[c]) / (l * l);
            }
        }
        let d_mean: Vec<f64> = (0..d).map(|c| dk.column(c).dot(&self.alpha)).collect();
        let v = self.solve_lower(&k);
        let k_inv_k = self.chol.tr_solve_lower_triangular(&v).expect("non-singular factor");
        let var = (self.params.signal_variance - v.norm_squared()).max(0.0);
        let sd = var.sqrt();
        let (mean, sd) = match self.training_index(x) {
            Some(i) => (self.outputs[i], 0.0),
            None => (self.params.constant_mean + k.dot(&self.alpha), sd),
        };
        let d_sd: Vec<f64> = (0..d)
            .map(|c| if sd > 0.0 { -dk.column(c).dot(&k_inv_k) / sd } else { 0.0 })
            .collect();
        PredictionGradient { mean, sd, d_mean, d_sd }
    }

    /// Joint posterior mean and covariance at `points`. Points equal to a
    /// training input are deterministic.
    pub fn posterior_joint(&self, points: &[Design]) -> (DVector<f64>, DMatrix<f64>) {
        let p = points.len();
        let n = self.inputs.len();
        let mut kxp = DMatrix::zeros(n, p);
        for (c, x) in points.iter().enumerate() {
            for (i, t) in self.inputs.iter().enumerate() {
                kxp[(i, c)] = self.kernel(x, t);
            }
        }
        let mut mean = kxp.tr_mul(&self.alpha).add_scalar(self.params.constant_mean);
        let v = self.chol.solve_lower_triangular(&kxp).expect("non-singular factor");
        let mut cov = v.tr_mul(&v) * -1.0;
        for a in 0..p {
            cov[(a, a)] += self.params.signal_variance;
            for b in 0..a {
                let k = self.kernel(&points[a], &points[b]);
                cov[(a, b)] += k;
                cov[(b, a)] += k;
            }
        }
        for (a, x) in points.iter().enumerate() {
            if let Some(i) = self.training_index(x) {
                mean[a] = self.outputs[i];
                cov.row_mut(a).fill(0.0);
                cov.column_mut(a).fill(0.0);
            }
        }
        (mean, cov)
    }

    /// Draws `n_sims` joint posterior samples at `points` (rows are draws).
    pub fn simulate_conditional(&self, points: &[Design], n_sims: usize, seed: u64) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(Error::EmptySet("simulation points"));
        }
        let sampler = JointSampler::new(self, points)?;
        let mut rng = stream(seed, 0);
        let mut out = DMatrix::zeros(n_sims, points.len());
        let mut z = vec![0.0; sampler.n_free()];
        for k in 0..n_sims {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let draw = sampler.draw(&z);
            for (c, v) in draw.iter().enumerate() {
                out[(k, c)] = *v;
            }
        }
        Ok(out)
    }

    /// Same hyperparameters, one more observation. The factor is extended by
    /// a rank-one update instead of refactorizing.
    pub fn append(&self, x: Design, y: f64) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        if let Some(i) = self.training_index(&x) {
            if self.outputs[i] == y {
                return Ok(self.clone());
            }
            return Err(Error::Data(format!("conflicting outputs at duplicate input {:?}", x.0)));
        }
        let n = self.inputs.len();
        let k = self.cross_covariance(&x);
        let l12 = self.solve_lower(&k);
        let pivot = self.params.signal_variance + self.params.nugget - l12.norm_squared();
        if !(pivot > 0.0) {
            let mut xs = self.inputs.clone();
            let mut ys = self.outputs.clone();
            xs.push(x);
            ys.push(y);
            return Self::with_params(&xs, &ys, self.params.clone());
        }
        let mut chol = self.chol.clone().resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            chol[(n, j)] = l12[j];
        }
        chol[(n, n)] = pivot.sqrt();
        let mut inputs = self.inputs.clone();
        let mut outputs = self.outputs.clone();
        inputs.push(x);
        outputs.push(y);
        let resid = DVector::from_iterator(n + 1, outputs.iter().map(|v| v - self.params.constant_mean));
        let w = chol.solve_lower_triangular(&resid).expect("non-singular factor");
        let alpha = chol.tr_solve_lower_triangular(&w).expect("non-singular factor");
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_likelihood =
            -0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * (n + 1) as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self { inputs, outputs, params: self.params.clone(), chol, alpha, log_likelihood })
    }
}

/// Log-density of the lengthscale prior in log-lengthscale coordinates.
struct LogPrior {
    loc: f64,
    scale: f64,
    log_widths: Vec<f64>,
}

impl LogPrior {
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let var = self.scale * self.scale;
        let mut value = 0.0;
        let grad = theta
            .iter()
            .zip(&self.log_widths)
            .map(|(t, lw)| {
                let z = t - lw - self.loc;
                value -= 0.5 * z * z / var;
                -z / var
            })
            .collect();
        (value, grad)
    }
}

/// Projected gradient ascent on the profiled log-likelihood plus the
/// optional log-prior. Returns the point, its profile and its objective.
fn ascend(
    xs: &[Design],
    ys: &DVector<f64>,
    start: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    prior: Option<&LogPrior>,
    max_iters: usize,
) -> Option<(Vec<f64>, Profile, f64)> {
    let project = |t: &mut Vec<f64>| {
        for (k, v) in t.iter_mut().enumerate() {
            *v = v.clamp(lower[k], upper[k]);
        }
    };
    let eval = |t: &[f64]| {
        let ls: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        profile(xs, ys, &ls).map(|p| {
            let mut g = profile_gradient(xs, ys, &ls, &p);
            let mut obj = p.log_likelihood;
            if let Some(prior) = prior {
                let (v, pg) = prior.eval(t);
                obj += v;
                g.iter_mut().zip(pg).for_each(|(a, b)| *a += b);
            }
            (p, g, obj)
        })
    };
    let mut theta = start;
    project(&mut theta);
    let (mut prof, mut grad, mut obj) = eval(&theta)?;
    let mut step = 0.5;
    for _ in 0..max_iters {
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < 1e-8 {
            break;
        }
        let mut accepted = false;
        while step > 1e-6 {
            let mut trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g / gmax).collect();
            project(&mut trial);
            let moved: f64 = trial.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved < 1e-9 {
                break;
            }
            if let Some((p, g, o)) = eval(&trial) {
                if o > obj {
                    let gain = o - obj;
                    theta = trial;
                    prof = p;
                    grad = g;
                    obj = o;
                    accepted = gain > 1e-9;
                    step = (step * 2.0).min(2.0);
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((theta, prof, obj))
}

fn dedup_training(xs: &[Design], ys: &[f64]) -> Result<(Vec<Design>, Vec<f64>)> {
    check_dim(xs.len(), ys.len())?;
    let first = xs.first().ok_or(Error::EmptySet("training inputs"))?;
    let d = first.len();
    let mut out_x: Vec<Design> = Vec::with_capacity(xs.len());
    let mut out_y: Vec<f64> = Vec::with_capacity(ys.len());
    for (x, y) in xs.iter().zip(ys) {
        check_dim(d, x.len())?;
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite training data".into()));
        }
        match out_x.iter().position(|t| t == x) {
            Some(i) if out_y[i] == *y => {}
            Some(_) => return Err(Error::Data(format!("conflicting outputs at duplicate input {:?}", x.0))),
            None => {
                out_x.push(x.clone());
                out_y.push(*y);
            }
        }
    }
    if out_x.len() < 2 {
        return Err(Error::Data("at least two distinct inputs are required".into()));
    }
    Ok((out_x, out_y))
}

/// Maps standard-normal vectors to joint posterior draws at a fixed point
/// set. Duplicate points share one column; training inputs are fixed.
#[derive(Clone, Debug)]
pub struct JointSampler {
    mean: DVector<f64>,
    /// Row-major lower factor over the free (non-deterministic) unique points.
    factor: Vec<f64>,
    n_free: usize,
    /// For each requested point, its unique-point index.
    column_of: Vec<usize>,
    /// Unique-point index → free index (None for deterministic points).
    free_of: Vec<Option<usize>>,
}

impl JointSampler {
    pub fn new(model: &SurrogateModel, points: &[Design]) -> Result<Self> {
        let mut unique: Vec<Design> = Vec::new();
        let mut column_of = Vec::with_capacity(points.len());
        for x in points {
            check_dim(model.dim(), x.len())?;
            match unique.iter().position(|u| u == x) {
                Some(i) => column_of.push(i),
                None => {
                    column_of.push(unique.len());
                    unique.push(x.clone());
                }
            }
        }
        let (mean, cov) = model.posterior_joint(&unique);
        let mut free_of = Vec::with_capacity(unique.len());
        let mut free = Vec::new();
        for (i, x) in unique.iter().enumerate() {
            if model.training_index(x).is_some() {
                free_of.push(None);
            } else {
                free_of.push(Some(free.len()));
                free.push(i);
            }
        }
        let n_free = free.len();
        let sub: Vec<f64> = (0..n_free * n_free).map(|k| cov[(free[k / n_free], free[k % n_free])]).collect();
        let factor = factor_psd(&sub, n_free, model.params.signal_variance)?;
        Ok(Self { mean, factor, n_free, column_of, free_of })
    }

    /// Number of standard normals consumed by one draw.
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Allocation-free [`JointSampler::draw`]; `scratch` holds the correlated
    /// free components and `out` receives one value per requested point.
    pub fn draw_into(&self, z: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        let f = self.n_free;
        scratch.clear();
        scratch.extend((0..f).map(|a| self.factor[a * f..a * f + a + 1].iter().zip(z).map(|(l, v)| l * v).sum::<f64>()));
        for (o, &u) in out.iter_mut().zip(&self.column_of) {
            *o = self.mean[u] + self.free_of[u].map_or(0.0, |fi| scratch[fi]);
        }
    }

    /// One joint draw at the requested points from `z ~ N(0, I)`.
    pub fn draw(&self, z: &[f64]) -> Vec<f64> {
        let f = self.n_free;
        let correlated: Vec<f64> = (0..f)
            .map(|a| self.factor[a * f..a * f + a + 1].iter().zip(z).map(|(l, v)| l * v).sum())
            .collect();
        self.column_of
            .iter()
            .map(|&u| self.mean[u] + self.free_of[u].map_or(0.0, |fi| correlated[fi]))
            .collect()
    }

    /// Posterior means at the requested points.
    pub fn means(&self) -> Vec<f64> {
        self.column_of.iter().map(|&u| self.mean[u]).collect()
    }
}

/// Row-major lower factor `L` with `L Lᵀ ≈ cov` for a positive
/// semi-definite `cov` (row-major, `n × n`).
///
/// Pivots that vanish to rounding level are clamped to zero, so rank-deficient
/// covariances factor in one pass. Clearly negative pivots trigger jitter
/// escalation.
pub(crate) fn factor_psd(cov: &[f64], n: usize, scale: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let diag_max = (0..n).map(|i| cov[i * n + i]).fold(0.0f64, f64::max).max(scale * 1e-300);
    let clamp_tol = 1e-10 * diag_max;
    let neg_tol = 1e-8 * diag_max;
    'ladder: for &ratio in &JITTER_LADDER {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = l[i * n..i * n + j].iter().zip(&l[j * n..j * n + j]).map(|(a, b)| a * b).sum();
                let mut s = cov[i * n + j] - dot;
                if i == j {
                    s += ratio * diag_max;
                    if s < -neg_tol {
                        continue 'ladder;
                    }
                    l[i * n + i] = if s > clamp_tol { s.sqrt() } else { 0.0 };
                } else {
                    let pivot = l[j * n + j];
                    l[i * n + j] = if pivot > 0.0 { s / pivot } else { 0.0 };
                }
            }
        }
        return Ok(l);
    }
    Err(Error::Conditioning("joint posterior covariance not positive definite after jitter escalation".into()))
}

/// One independent surrogate per objective, sharing the same inputs.
#[derive(Clone, Debug)]
pub struct MultiSurrogate {
    pub models: Vec<SurrogateModel>,
}

impl MultiSurrogate {
    /// Fits one model per objective column; `ys[i][j]` is objective `j` at
    /// design `i`. Objective `j` uses the seed stream `j` of `config.seed`.
    pub fn fit(xs: &[Design], ys: &[Vec<f64>], config: &FitConfig) -> Result<Self> {
        check_dim(xs.len(), ys.len())?;
        let m = ys.first().ok_or(Error::EmptySet("observations"))?.len();
        let models = (0..m)
            .map(|j| {
                let col: Vec<f64> = ys.iter().map(|y| y[j]).collect();
                let cfg = FitConfig { seed: mix64(config.seed, j as u64), ..config.clone() };
                SurrogateModel::fit(xs, &col, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn n_objectives(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<Prediction> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }

    pub fn inputs(&self) -> &[Design] {
        self.models[0].inputs()
    }

    /// Kriging-believer update: appends the posterior mean at `x` to every
    /// model with fixed hyperparameters.
    pub fn believe(&self, x: &Design) -> Result<Self> {
        let models = self
            .models
            .iter()
            .map(|m| {
                let y = m.predict(x).mean;
                m.append(x.clone(), y)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn design(v: &[f64]) -> Design {
        Design(v.to_vec())
    }

    fn fixed_model(n: usize, d: usize, seed: u64, nugget: f64) -> SurrogateModel {
        let mut rng = stream(seed, 0);
        let xs: Vec<Design> = (0..n).map(|_| Design((0..d).map(|_| rng.random()).collect())).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| (3.0 * v).sin()).sum()).collect();
        let params = KernelParams { lengthscales: vec![0.4; d], signal_variance: 1.3, nugget, constant_mean: 0.2 };
        SurrogateModel::with_params(&xs, &ys, params).unwrap()
    }

    #[test]
    fn factor_reconstructs_kernel_matrix() {
        let m = fixed_model(12, 2, 1, 1e-8);
        let k = m.kernel_matrix();
        let l = m.cholesky_factor();
        let rec = l * l.transpose();
        assert!((rec - &k).norm() <= 1e-8 * k.norm());
    }

    #[test]
    fn constant_outputs_give_constant_mean() {
        let xs = vec![design(&[0.0]), design(&[0.4]), design(&[0.9])];
        let m = SurrogateModel::fit(&xs, &[2.5, 2.5, 2.5], &FitConfig::default()).unwrap();
        for x in [0.0, 0.1, 0.55, 1.0] {
            assert!((m.predict(&[x]).mean - 2.5).abs() < 1e-12);
        }
        for x in &xs {
            assert!(m.predict(x).sd < 1e-6);
        }
    }

    #[test]
    fn two_points_fit() {
        let xs = vec![design(&[0.1]), design(&[0.8])];
        let m = SurrogateModel::fit(&xs, &[1.0, -1.0], &FitConfig::default()).unwrap();
        assert!(m.log_likelihood().is_finite());
    }

    #[test]
    fn rejects_bad_training_sets() {
        let xs = vec![design(&[0.1]), design(&[0.1])];
        assert!(matches!(SurrogateModel::fit(&xs, &[1.0, 2.0], &FitConfig::default()), Err(Error::Data(_))));
        assert!(matches!(SurrogateModel::fit(&xs, &[1.0, 1.0], &FitConfig::default()), Err(Error::Data(_))));
        let xs3 = vec![design(&[0.1]), design(&[0.1]), design(&[0.5])];
        assert!(SurrogateModel::fit(&xs3, &[1.0, 1.0, 0.0], &FitConfig::default()).is_ok());
    }

    #[test]
    fn interpolates_training_data() {
        let m = fixed_model(10, 2, 2, 0.0);
        for (x, y) in m.inputs().iter().zip(m.outputs()) {
            let p = m.predict(x);
            assert!((p.mean - y).abs() < 1e-6 && p.sd < 1e-6);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let m = fixed_model(10, 2, 3, 0.0);
        let p = m.predict(&[50.0, 50.0]);
        assert!((p.mean - 0.2).abs() < 1e-3);
        assert!((p.sd - 1.3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn predict_matches_dense_inverse() {
        let m = fixed_model(15, 3, 4, 1e-6);
        let k_inv = m.kernel_matrix().try_inverse().unwrap();
        let mut rng = stream(9, 9);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let k = DVector::from_iterator(15, m.inputs().iter().map(|t| {
                let r = scaled_distance(&x, t, &[0.4, 0.4, 0.4]);
                1.3 * matern52(r)
            }));
            let y = DVector::from_iterator(15, m.outputs().iter().map(|v| v - 0.2));
            let mean = 0.2 + (k.transpose() * &k_inv * y)[0];
            let var = 1.3 - (k.transpose() * &k_inv * &k)[0];
            let p = m.predict(&x);
            assert!((p.mean - mean).abs() < 1e-8, "{} {}", p.mean, mean);
            assert!((p.sd - var.max(0.0).sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = fixed_model(12, 2, 5, 1e-8);
        let mut rng = stream(6, 6);
        let h = 1e-6;
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            let g = m.predict_with_gradient(&x);
            for c in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let (pp, pm) = (m.predict(&xp), m.predict(&xm));
                let fd_mean = (pp.mean - pm.mean) / (2.0 * h);
                let fd_sd = (pp.sd - pm.sd) / (2.0 * h);
                assert!((g.d_mean[c] - fd_mean).abs() < 1e-5 * fd_mean.abs().max(1.0));
                assert!((g.d_sd[c] - fd_sd).abs() < 1e-5 * fd_sd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let mut rng = stream(8, 0);
        let xs: Vec<Design> = (0..10).map(|_| Design(vec![rng.random(), rng.random()])).collect();
        let ys = DVector::from_iterator(10, xs.iter().map(|x| (4.0 * x[0]).cos() + x[1]));
        let ls = [0.3, 0.7];
        let p = profile(&xs, &ys, &ls).unwrap();
        let g = profile_gradient(&xs, &ys, &ls, &p);
        for k in 0..2 {
            let h: f64 = 1e-6;
            let mut up = ls;
            let mut dn = ls;
            up[k] *= h.exp();
            dn[k] *= (-h).exp();
            let fd = (profile(&xs, &ys, &up).unwrap().log_likelihood - profile(&xs, &ys, &dn).unwrap().log_likelihood)
                / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-4 * fd.abs().max(1.0), "{} vs {}", g[k], fd);
        }
    }

    #[test]
    fn recovers_lengthscale_from_synthetic_draw() {
        let n = 200;
        let xs: Vec<Design> = (0..n).map(|i| Design(vec![(i as f64 + 0.5) / n as f64])).collect();
        let mut cov = DMatrix::from_fn(n, n, |i, j| matern52((xs[i][0] - xs[j][0]).abs() / 0.3));
        for i in 0..n {
            cov[(i, i)] += 1e-10;
        }
        let l = Cholesky::new(cov).unwrap().unpack();
        let mut rng = stream(21, 0);
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let y = l * z;
        let m = SurrogateModel::fit(&xs, y.as_slice(), &FitConfig::default()).unwrap();
        let ls = m.params().lengthscales[0];
        assert!(ls > 0.15 && ls < 0.6, "recovered lengthscale {ls}");
    }

    #[test]
    fn simulation_reproduces_training_data() {
        let m = fixed_model(8, 1, 10, 0.0);
        let sims = m.simulate_conditional(m.inputs(), 50, 3).unwrap();
        for k in 0..50 {
            for (c, y) in m.outputs().iter().enumerate() {
                assert!((sims[(k, c)] - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn simulation_duplicates_share_columns() {
        let m = fixed_model(8, 1, 11, 1e-8);
        let pts = vec![design(&[0.33]), design(&[0.33])];
        let sims = m.simulate_conditional(&pts, 20, 4).unwrap();
        for k in 0..20 {
            assert_eq!(sims[(k, 0)], sims[(k, 1)]);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = fixed_model(8, 1, 12, 1e-8);
        let pts = vec![design(&[0.2]), design(&[0.7])];
        assert_eq!(m.simulate_conditional(&pts, 10, 5).unwrap(), m.simulate_conditional(&pts, 10, 5).unwrap());
    }

    #[test]
    fn simulation_moments_match_posterior() {
        let m = fixed_model(8, 1, 13, 1e-8);
        let pts = vec![design(&[3.0]), design(&[0.45]), design(&[0.5])];
        let n = 100_000;
        let sims = m.simulate_conditional(&pts, n, 6).unwrap();
        let (mean, cov) = m.posterior_joint(&pts);
        let nf = n as f64;
        for a in 0..3 {
            let col = sims.column(a);
            let mu = col.mean();
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (nf - 1.0);
            let se_mean = (cov[(a, a)] / nf).sqrt();
            assert!((mu - mean[a]).abs() < 3.0 * se_mean, "mean {mu} vs {}", mean[a]);
            let se_var = cov[(a, a)] * (2.0 / (nf - 1.0)).sqrt();
            assert!((var - cov[(a, a)]).abs() < 3.0 * se_var);
            let p = m.predict(&pts[a]);
            assert!((var.sqrt() - p.sd).abs() < 3.0 * p.sd / (2.0 * nf).sqrt() * 1.5);
        }
        // cross covariance of the close pair
        let (ca, cb) = (sims.column(1), sims.column(2));
        let (ma, mb) = (ca.mean(), cb.mean());
        let prods: Vec<f64> = ca.iter().zip(cb.iter()).map(|(a, b)| (a - ma) * (b - mb)).collect();
        let c = prods.iter().sum::<f64>() / (nf - 1.0);
        let sd = (prods.iter().map(|v| (v - c).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        assert!((c - cov[(1, 2)]).abs() < 3.0 * sd / nf.sqrt());
    }

    #[test]
    fn append_matches_refactorization() {
        let m = fixed_model(10, 2, 14, 1e-8);
        let x = design(&[0.37, 0.61]);
        let appended = m.append(x.clone(), 0.25).unwrap();
        let mut xs = m.inputs().to_vec();
        let mut ys = m.outputs().to_vec();
        xs.push(x);
        ys.push(0.25);
        let fresh = SurrogateModel::with_params(&xs, &ys, m.params().clone()).unwrap();
        let mut rng = stream(15, 0);
        for _ in 0..20 {
            let z = [rng.random::<f64>(), rng.random::<f64>()];
            let (a, b) = (appended.predict(&z), fresh.predict(&z));
            assert!((a.mean - b.mean).abs() < 1e-8 && (a.sd - b.sd).abs() < 1e-8);
        }
    }

    #[test]
    fn training_sd_bounded_by_nugget() {
        let xs: Vec<Design> = (0..6).map(|i| design(&[i as f64 / 5.0])).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[0]).collect();
        let m = SurrogateModel::fit(&xs, &ys, &FitConfig::default()).unwrap();
        for x in &xs {
            let g = m.predict_with_gradient(x);
            assert!(g.sd <= m.params().nugget.sqrt() + 1e-6);
        }
    }
}
