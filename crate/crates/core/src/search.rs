//! Space-filling designs and inner maximization of infill criteria.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pareto::{BoxDomain, Design};
use crate::rng::{mix64, stream};

/// Random Latin hypercube of `n` points in `domain`.
pub fn lhs(n: usize, domain: &BoxDomain, seed: u64) -> Vec<Design> {
    let d = domain.dim();
    let mut rng = stream(seed, 0x1a5);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        columns.push(strata.iter().map(|&s| (s as f64 + rng.random::<f64>()) / n as f64).collect());
    }
    (0..n)
        .map(|i| {
            let u: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            domain.from_unit(&u)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub n_starts: usize,
    /// Candidate count; `None` means 1000·d (500·q·d for batches).
    pub n_raw: Option<usize>,
    pub local_budget: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { n_starts: 10, n_raw: None, local_budget: 200, seed: 0 }
    }
}

impl OptimizerConfig {
    /// Defaults for the batch path.
    pub fn batch() -> Self {
        Self { n_starts: 5, ..Self::default() }
    }
}

/// Strict "better" with ties going to the lexicographically smaller point.
fn better(value: f64, x: &[f64], best_value: f64, best_x: &[f64]) -> bool {
    if value > best_value {
        return true;
    }
    value == best_value && x.partial_cmp(best_x) == Some(std::cmp::Ordering::Less)
}

fn finite_or_min(v: f64) -> f64 {
    if v.is_nan() { f64::NEG_INFINITY } else { v }
}

/// Maximizes `criterion` over `domain`: space-filling candidates, then a
/// local refinement of the best `n_starts`. With `gradient` (value and
/// gradient) the refinement is projected gradient ascent; otherwise a
/// clamped Nelder-Mead simplex.
pub fn maximize(
    criterion: &dyn Fn(&[f64]) -> f64,
    gradient: Option<&dyn Fn(&[f64]) -> (f64, Vec<f64>)>,
    domain: &BoxDomain,
    config: &OptimizerConfig,
) -> (Design, f64) {
    let d = domain.dim();
    let n_raw = config.n_raw.unwrap_or(1000 * d).max(1);
    let candidates = lhs(n_raw, domain, mix64(config.seed, 1));
    let lower = domain.lower().to_vec();
    let upper = domain.upper().to_vec();
    let objective = |x: &[f64]| finite_or_min(criterion(x));
    let starts = top_candidates(candidates.into_iter().map(|c| c.0).collect(), &objective, config.n_starts);

    let mut best_x = starts[0].0.clone();
    let mut best_v = starts[0].1;
    for (x0, v0) in starts {
        let (x, v) = match gradient {
            Some(g) => gradient_ascent(&|x: &[f64]| {
                let (v, gr) = g(x);
                (finite_or_min(v), gr)
            }, x0, v0, &lower, &upper, config.local_budget),
            None => nelder_mead(&objective, x0, v0, &lower, &upper, config.local_budget),
        };
        if better(v, &x, best_v, &best_x) {
            best_x = x;
            best_v = v;
        }
    }
    (Design(best_x), best_v)
}

/// Maximizes a batch criterion over the product box `domain^q`. The
/// `fixed` designs are prepended to every evaluated batch and are not
/// searched over; `q` counts only the free points.
pub fn maximize_batch(
    criterion: &dyn Fn(&[Design]) -> f64,
    domain: &BoxDomain,
    q: usize,
    fixed: &[Design],
    config: &OptimizerConfig,
) -> (Vec<Design>, f64) {
    maximize_batch_from(criterion, domain, q, fixed, &[], config)
}

/// [`maximize_batch`] with extra starting batches (each of `q` free points)
/// that are always polished alongside the best random candidates.
pub fn maximize_batch_from(
    criterion: &dyn Fn(&[Design]) -> f64,
    domain: &BoxDomain,
    q: usize,
    fixed: &[Design],
    initial: &[Vec<Design>],
    config: &OptimizerConfig,
) -> (Vec<Design>, f64) {
    let d = domain.dim();
    let lower: Vec<f64> = domain.lower().iter().cycle().take(q * d).cloned().collect();
    let upper: Vec<f64> = domain.upper().iter().cycle().take(q * d).cloned().collect();
    let product = BoxDomain::new(lower.clone(), upper.clone()).expect("valid product box");
    let unflatten = |flat: &[f64]| -> Vec<Design> {
        fixed.iter().cloned().chain(flat.chunks(d).map(|c| Design(c.to_vec()))).collect()
    };
    let objective = |flat: &[f64]| finite_or_min(criterion(&unflatten(flat)));
    let n_raw = config.n_raw.unwrap_or(500 * q * d).max(1);
    let candidates = lhs(n_raw, &product, mix64(config.seed, 2));
    let mut starts = top_candidates(candidates.into_iter().map(|c| c.0).collect(), &objective, config.n_starts);
    for batch in initial.iter().filter(|b| b.len() == q) {
        let mut x0: Vec<f64> = batch.iter().flat_map(|p| p.iter().copied()).collect();
        clamp(&mut x0, &lower, &upper);
        let v0 = objective(&x0);
        starts.push((x0, v0));
    }
    let mut best_x = starts[0].0.clone();
    let mut best_v = starts[0].1;
    for (x0, v0) in starts {
        if better(v0, &x0, best_v, &best_x) {
            best_x = x0.clone();
            best_v = v0;
        }
        let (x, v) = nelder_mead(&objective, x0, v0, &lower, &upper, config.local_budget);
        if better(v, &x, best_v, &best_x) {
            best_x = x;
            best_v = v;
        }
    }
    (best_x.chunks(d).map(|c| Design(c.to_vec())).collect(), best_v)
}

fn top_candidates(candidates: Vec<Vec<f64>>, f: &dyn Fn(&[f64]) -> f64, k: usize) -> Vec<(Vec<f64>, f64)> {
    let mut scored: Vec<(Vec<f64>, f64)> = candidates.into_iter().map(|x| {
        let v = f(&x);
        (x, v)
    }).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal)));
    scored.truncate(k.max(1));
    scored
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lower[i], upper[i]);
    }
}

fn gradient_ascent(
    f: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    v0: f64,
    lower: &[f64],
    upper: &[f64],
    budget: usize,
) -> (Vec<f64>, f64) {
    let widths: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut x = x0;
    let (mut v, mut g) = f(&x);
    if v < v0 {
        v = v0;
    }
    let mut step = 0.05;
    let mut evals = 1;
    while evals < budget && step > 1e-10 {
        // scale gradient to unit max-norm in width-normalized coordinates
        let scaled: Vec<f64> = g.iter().zip(&widths).map(|(gi, w)| gi * w).collect();
        let norm = scaled.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let mut trial: Vec<f64> = x.iter().zip(&scaled).zip(&widths).map(|((xi, s), w)| xi + step * w * s / norm).collect();
        clamp(&mut trial, lower, upper);
        if trial == x {
            step *= 0.5;
            continue;
        }
        let (tv, tg) = f(&trial);
        evals += 1;
        if tv > v {
            x = trial;
            v = tv;
            g = tg;
            step = (step * 2.0).min(0.5);
        } else {
            step *= 0.5;
        }
    }
    (x, v)
}

fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: Vec<f64>,
    v0: f64,
    lower: &[f64],
    upper: &[f64],
    budget: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    // minimize the negative criterion
    let eval = |x: &[f64]| -f(x);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), -v0)];
    for i in 0..n {
        let w = upper[i] - lower[i];
        let mut p = x0.clone();
        p[i] += 0.05 * w;
        if p[i] > upper[i] {
            p[i] = x0[i] - 0.05 * w;
        }
        clamp(&mut p, lower, upper);
        let v = eval(&p);
        simplex.push((p, v));
    }
    let mut evals = n;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal)))
    };
    while evals < budget {
        order(&mut simplex);
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex.iter().skip(1).map(|(p, _)| {
            p.iter().zip(&simplex[0].0).zip(lower.iter().zip(upper)).map(|((a, b), (l, u))| ((a - b) / (u - l)).abs()).fold(0.0, f64::max)
        }).fold(0.0, f64::max);
        if size < 1e-9 || (spread.abs() < 1e-15 && size < 1e-6) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|(p, _)| p[k]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let towards = |t: f64| {
            let mut p: Vec<f64> = (0..n).map(|k| centroid[k] + t * (worst.0[k] - centroid[k])).collect();
            clamp(&mut p, lower, upper);
            p
        };
        let xr = towards(-1.0);
        let vr = eval(&xr);
        evals += 1;
        if vr < simplex[0].1 {
            let xe = towards(-2.0);
            let ve = eval(&xe);
            evals += 1;
            simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
        } else if vr < simplex[n - 1].1 {
            simplex[n] = (xr, vr);
        } else {
            let (xc, vc) = if vr < worst.1 {
                let p = towards(-0.5);
                let v = eval(&p);
                (p, v)
            } else {
                let p = towards(0.5);
                let v = eval(&p);
                (p, v)
            };
            evals += 1;
            if vc < worst.1.min(vr) {
                simplex[n] = (xc, vc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let mut p: Vec<f64> = s.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    clamp(&mut p, lower, upper);
                    s.1 = eval(&p);
                    s.0 = p;
                }
                evals += n;
            }
        }
    }
    order(&mut simplex);
    let (x, v) = simplex.swap_remove(0);
    (x, -v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn lhs_single_point_inside() {
        let dom = BoxDomain::new(vec![-1.0, 2.0], vec![1.0, 3.0]).unwrap();
        let pts = lhs(1, &dom, 3);
        assert_eq!(pts.len(), 1);
        assert!(dom.contains(&pts[0]));
    }

    #[test]
    fn lhs_stratifies_margins() {
        let dom = BoxDomain::unit(2);
        let pts = lhs(10, &dom, 4);
        for k in 0..2 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[k] * 10.0).floor() as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lhs_reproducible() {
        let dom = BoxDomain::unit(3);
        assert_eq!(lhs(7, &dom, 5), lhs(7, &dom, 5));
        assert_ne!(lhs(7, &dom, 5), lhs(7, &dom, 6));
    }

    #[test]
    fn maximize_quadratic_bowl() {
        let dom = BoxDomain::unit(2);
        let f = |x: &[f64]| -((x[0] - 0.3).powi(2) + (x[1] - 0.3).powi(2));
        let g = |x: &[f64]| (f(x), vec![-2.0 * (x[0] - 0.3), -2.0 * (x[1] - 0.3)]);
        let (x, _) = maximize(&f, Some(&g), &dom, &OptimizerConfig::default());
        assert!((x[0] - 0.3).abs() < 1e-4 && (x[1] - 0.3).abs() < 1e-4, "{x:?}");
        let (x, _) = maximize(&f, None, &dom, &OptimizerConfig::default());
        assert!((x[0] - 0.3).abs() < 1e-4 && (x[1] - 0.3).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn maximize_constant() {
        let dom = BoxDomain::unit(2);
        let (x, v) = maximize(&|_| 4.0, None, &dom, &OptimizerConfig::default());
        assert!(dom.contains(&x));
        assert_eq!(v, 4.0);
    }

    #[test]
    fn batch_with_one_point_matches_single() {
        let dom = BoxDomain::unit(1);
        let f = |x: &[f64]| (6.0 * x[0]).sin() * x[0];
        let (_, v1) = maximize(&f, None, &dom, &OptimizerConfig::default());
        let (b, vq) = maximize_batch(&|b: &[Design]| f(&b[0]), &dom, 1, &[], &OptimizerConfig::batch());
        assert_eq!(b.len(), 1);
        assert!((v1 - vq).abs() < 1e-6);
    }

    #[test]
    fn batch_fixed_points_are_kept() {
        let dom = BoxDomain::unit(1);
        let fixed = vec![Design(vec![0.25])];
        let seen_fixed = std::cell::Cell::new(true);
        let f = |b: &[Design]| {
            if b[0][0] != 0.25 {
                seen_fixed.set(false);
            }
            -(b[1][0] - 0.7).powi(2)
        };
        let (b, _) = maximize_batch(&f, &dom, 1, &fixed, &OptimizerConfig::batch());
        assert!(seen_fixed.get());
        assert!((b[0][0] - 0.7).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn maximize_beats_random_baseline(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 1.0f64..8.0, seed in 0u64..1000) {
            let dom = BoxDomain::unit(2);
            let f = |x: &[f64]| (c * x[0]).sin() * (c * x[1] + a).cos() - (x[0] - b).powi(2);
            let cfg = OptimizerConfig { seed, ..OptimizerConfig::default() };
            let (x, v) = maximize(&f, None, &dom, &cfg);
            prop_assert!(dom.contains(&x));
            let mut rng = stream(seed, 77);
            let baseline = (0..10_000).map(|_| f(&[rng.random(), rng.random()])).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= baseline - 1e-9, "{} < {}", v, baseline);
        }
    }
}
