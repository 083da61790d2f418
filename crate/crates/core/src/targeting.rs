//! Simulated Pareto fronts, Ideal/Nadir and center estimation, and the
//! adaptation of the user reference point.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gp::{JointSampler, MultiSurrogate};
use crate::pareto::{
    bounds_of, closest_point_on_broken_line, dominates_unchecked, BoxDomain, BrokenLine, Design, EmpiricalFront,
    ObjectiveVector,
};
use crate::rng::{mix64, stream};
use crate::search::lhs;
use rand_distr::{Distribution, StandardNormal};

/// Fronts of joint posterior draws over a shared discretization.
#[derive(Clone, Debug)]
pub struct SimulatedFronts {
    pub fronts: Vec<EmpiricalFront>,
    pub sim_points: Vec<Design>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontEstimates {
    pub ideal_hat: ObjectiveVector,
    pub nadir_hat: ObjectiveVector,
    pub center_hat: ObjectiveVector,
}

/// Draws `n_sims` joint posterior samples of every objective over a Latin
/// hypercube of `n_points` designs plus the evaluated designs, and keeps the
/// non-dominated set of each draw.
pub fn simulate_fronts(
    models: &MultiSurrogate,
    domain: &BoxDomain,
    n_sims: usize,
    n_points: usize,
    seed: u64,
) -> Result<SimulatedFronts> {
    check_dim(domain.dim(), models.dim())?;
    if n_sims == 0 {
        return Err(Error::Config("n_sims must be positive".into()));
    }
    let mut sim_points = lhs(n_points, domain, mix64(seed, 0));
    sim_points.extend(models.inputs().iter().cloned());
    let p = sim_points.len();
    let m = models.n_objectives();
    let samplers =
        models.models.iter().map(|g| JointSampler::new(g, &sim_points)).collect::<Result<Vec<_>>>()?;
    // values[k][i][j]: draw k, point i, objective j
    let mut values = vec![vec![vec![0.0; m]; p]; n_sims];
    for (j, sampler) in samplers.iter().enumerate() {
        let mut rng = stream(seed, j as u64 + 1);
        let mut z = vec![0.0; sampler.n_free()];
        for draw in values.iter_mut() {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            for (i, y) in sampler.draw(&z).into_iter().enumerate() {
                draw[i][j] = y;
            }
        }
    }
    let fronts = values
        .into_iter()
        .map(|draw| {
            let objectives: Vec<ObjectiveVector> = draw.into_iter().map(ObjectiveVector).collect();
            EmpiricalFront::from_evaluations(&sim_points, &objectives)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedFronts { fronts, sim_points })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Componentwise medians of the per-front Ideals and Nadirs.
pub fn estimate_ideal_nadir(fronts: &SimulatedFronts) -> Result<(ObjectiveVector, ObjectiveVector)> {
    let bounds =
        fronts.fronts.iter().map(|f| bounds_of(&f.points)).collect::<Result<Vec<_>>>()?;
    let first = bounds.first().ok_or(Error::EmptySet("simulated fronts"))?;
    let m = first.0.len();
    let mut ideal = Vec::with_capacity(m);
    let mut nadir = Vec::with_capacity(m);
    for j in 0..m {
        let mut lo: Vec<f64> = bounds.iter().map(|b| b.0[j]).collect();
        let mut hi: Vec<f64> = bounds.iter().map(|b| b.1[j]).collect();
        ideal.push(median(&mut lo));
        nadir.push(median(&mut hi));
    }
    Ok((ObjectiveVector(ideal), ObjectiveVector(nadir)))
}

/// Estimated front center.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterEstimate {
    pub point: ObjectiveVector,
    /// Front point selecting the center (crossing or closest point).
    pub front_index: usize,
    /// True when the Ideal–Nadir segment crosses the attainment boundary.
    pub crossing: bool,
}

/// Center of `front` relative to the Ideal–Nadir segment: the first point of
/// the segment inside the region weakly dominated by the front, or, when the
/// segment misses that region, the clamped projection of the closest front
/// point.
pub fn estimate_center(front: &EmpiricalFront, ideal: &[f64], nadir: &[f64]) -> Result<CenterEstimate> {
    if front.is_empty() {
        return Err(Error::EmptySet("front"));
    }
    let m = ideal.len();
    check_dim(m, nadir.len())?;
    let dir: Vec<f64> = ideal.iter().zip(nadir).map(|(i, n)| n - i).collect();
    if dir.iter().all(|v| *v == 0.0) {
        return Err(Error::Geometry("Ideal and Nadir coincide".into()));
    }
    let segment = BrokenLine::segment(ideal.into(), nadir.into())?;
    let mut crossing: Option<(f64, usize)> = None;
    for (idx, y) in front.points.iter().enumerate() {
        check_dim(m, y.len())?;
        // parameters t with ideal + t·dir ≥ y componentwise
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for j in 0..m {
            let gap = y[j] - ideal[j];
            if dir[j] > 0.0 {
                lo = lo.max(gap / dir[j]);
            } else if dir[j] < 0.0 {
                hi = hi.min(gap / dir[j]);
            } else if gap > 0.0 {
                hi = f64::NEG_INFINITY;
            }
        }
        if lo <= hi && crossing.is_none_or(|(t, _)| lo < t) {
            crossing = Some((lo, idx));
        }
    }
    if let Some((t, idx)) = crossing {
        let point: Vec<f64> = ideal.iter().zip(&dir).map(|(i, d)| i + t * d).collect();
        return Ok(CenterEstimate { point: ObjectiveVector(point), front_index: idx, crossing: true });
    }
    let proj = closest_point_on_broken_line(&segment, &front.points)?;
    Ok(CenterEstimate { point: proj.point, front_index: proj.target, crossing: false })
}

/// Which rule produced an adapted reference point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptCase {
    /// R dominates part of the front: closest point of R–N̂.
    Dominating,
    /// R is dominated by the front: closest point of Î–R.
    Dominated,
    /// Neither: closest point of the broken line Î–R–N̂.
    Neither,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedReference {
    pub point: ObjectiveVector,
    pub case: AdaptCase,
    /// True when the closest point was moved toward Î to escape domination.
    pub repaired: bool,
}

/// Arc-length resolution of the non-domination repair, relative to the
/// line length.
const REPAIR_RESOLUTION: f64 = 1e-6;

/// Moves the point at arc length `s0` of `line` toward the line start until
/// it is no longer dominated by `front`. The start must be non-dominated.
fn repair_toward_start(line: &BrokenLine, s0: f64, front: &EmpiricalFront) -> (ObjectiveVector, bool) {
    let start = line.point_at(s0);
    if !front.dominates_point(&start) {
        return (start, false);
    }
    let (mut lo, mut hi) = (0.0, s0);
    let tol = REPAIR_RESOLUTION * line.length();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if front.dominates_point(&line.point_at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (line.point_at(lo), true)
}

/// Anchor of the repair line: Î, or the componentwise minimum of Î and the
/// front's Ideal when the front dominates Î.
fn repair_anchor(front: &EmpiricalFront, ideal: &[f64]) -> Result<ObjectiveVector> {
    if !front.dominates_point(ideal) {
        return Ok(ideal.into());
    }
    let (emp_ideal, _) = bounds_of(&front.points)?;
    Ok(ObjectiveVector(ideal.iter().zip(emp_ideal.iter()).map(|(a, b)| a.min(*b)).collect()))
}

/// Arc length of `point` along `line` (which must contain it).
fn arc_length_of(line: &BrokenLine, point: &[f64]) -> Result<f64> {
    Ok(closest_point_on_broken_line(line, &[point])?.arc_length)
}

/// Updates the user reference `r` from the front and the Ideal/Nadir
/// estimates. The result lies on Î–R–N̂ and is never dominated by the front.
pub fn adapt_reference(
    r: &[f64],
    front: &EmpiricalFront,
    ideal: &[f64],
    nadir: &[f64],
) -> Result<AdaptedReference> {
    if front.is_empty() {
        return Err(Error::EmptySet("front"));
    }
    let m = r.len();
    check_dim(m, ideal.len())?;
    check_dim(m, nadir.len())?;
    let (case, vertices): (AdaptCase, Vec<ObjectiveVector>) = if front.dominated_by(r) {
        (AdaptCase::Dominating, vec![r.into(), nadir.into()])
    } else if front.dominates_point(r) {
        (AdaptCase::Dominated, vec![ideal.into(), r.into()])
    } else {
        (AdaptCase::Neither, vec![ideal.into(), r.into(), nadir.into()])
    };
    let closest = match BrokenLine::new(vertices) {
        Ok(line) => closest_point_on_broken_line(&line, &front.points)?.point,
        Err(Error::Geometry(_)) => r.into(),
        Err(e) => return Err(e),
    };
    let anchor = repair_anchor(front, ideal)?;
    let full = match BrokenLine::new(vec![anchor, ideal.into(), r.into(), nadir.into()]) {
        Ok(line) => line,
        Err(Error::Geometry(_)) => {
            return Ok(AdaptedReference { point: closest, case, repaired: false });
        }
        Err(e) => return Err(e),
    };
    let s0 = arc_length_of(&full, &closest)?;
    let (point, repaired) = repair_toward_start(&full, s0, front);
    Ok(AdaptedReference { point, case, repaired })
}

/// Reference point for center targeting: the center estimate, moved along
/// Î–N̂ toward Î if the front dominates it.
pub fn center_reference(
    center: &[f64],
    front: &EmpiricalFront,
    ideal: &[f64],
    nadir: &[f64],
) -> Result<ObjectiveVector> {
    let anchor = repair_anchor(front, ideal)?;
    let line = match BrokenLine::new(vec![anchor, ideal.into(), nadir.into()]) {
        Ok(line) => line,
        Err(Error::Geometry(_)) => return Ok(center.into()),
        Err(e) => return Err(e),
    };
    let s0 = arc_length_of(&line, center)?;
    Ok(repair_toward_start(&line, s0, front).0)
}

/// Ideal, Nadir and center estimates from simulated fronts and the
/// empirical front.
pub fn estimate_front(fronts: &SimulatedFronts, front: &EmpiricalFront) -> Result<FrontEstimates> {
    let (ideal_hat, nadir_hat) = estimate_ideal_nadir(fronts)?;
    let center_hat = match estimate_center(front, &ideal_hat, &nadir_hat) {
        Ok(c) => c.point,
        Err(Error::Geometry(_)) => ideal_hat.clone(),
        Err(e) => return Err(e),
    };
    Ok(FrontEstimates { ideal_hat, nadir_hat, center_hat })
}

/// True when no point of `front` strictly dominates `y`.
pub fn non_dominated_by(front: &EmpiricalFront, y: &[f64]) -> bool {
    !front.points.iter().any(|p| dominates_unchecked(p, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::FitConfig;
    use crate::pareto::distance;
    use proptest::prelude::*;
    use rand::Rng;

    fn front(points: &[[f64; 2]]) -> EmpiricalFront {
        EmpiricalFront::extract(&points.iter().map(|p| ObjectiveVector(p.to_vec())).collect::<Vec<_>>()).unwrap()
    }

    fn quadratic_models(xs: &[f64]) -> MultiSurrogate {
        let designs: Vec<Design> = xs.iter().map(|x| Design(vec![*x])).collect();
        let ys: Vec<Vec<f64>> =
            xs.iter().map(|x| vec![0.6 * x * x - 0.24 * x + 0.1, x * x - 1.8 * x + 1.0]).collect();
        MultiSurrogate::fit(&designs, &ys, &FitConfig::for_domain(&BoxDomain::unit(1), 1)).unwrap()
    }

    #[test]
    fn deterministic_posterior_reproduces_empirical_front() {
        // every simulation point is a training point
        let models = quadratic_models(&[0.0, 0.3, 0.6, 1.0]);
        let sims = simulate_fronts(&models, &BoxDomain::unit(1), 5, 0, 3).unwrap();
        let designs = models.inputs().to_vec();
        let ys: Vec<ObjectiveVector> = designs
            .iter()
            .map(|x| ObjectiveVector(models.models.iter().map(|m| m.predict(x).mean).collect()))
            .collect();
        let empirical = EmpiricalFront::extract(&ys).unwrap();
        for f in &sims.fronts {
            assert_eq!(f.points, empirical.points);
        }
        let (i, n) = estimate_ideal_nadir(&sims).unwrap();
        let (ei, en) = bounds_of(&empirical.points).unwrap();
        assert_eq!((i, n), (ei, en));
    }

    #[test]
    fn single_simulation() {
        let models = quadratic_models(&[0.0, 0.5, 1.0]);
        let sims = simulate_fronts(&models, &BoxDomain::unit(1), 1, 50, 4).unwrap();
        assert_eq!(sims.fronts.len(), 1);
        assert!(!sims.fronts[0].is_empty());
        assert_eq!(sims.sim_points.len(), 53);
    }

    #[test]
    fn ideal_samples_vary_under_uncertainty() {
        let models = quadratic_models(&[0.0, 0.5, 1.0]);
        let sims = simulate_fronts(&models, &BoxDomain::unit(1), 50, 200, 5).unwrap();
        let ideals: Vec<f64> = sims.fronts.iter().map(|f| bounds_of(&f.points).unwrap().0[0]).collect();
        let mean = ideals.iter().sum::<f64>() / 50.0;
        let var = ideals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0;
        assert!(var > 0.0);
    }

    fn fake_sims(fronts: Vec<EmpiricalFront>) -> SimulatedFronts {
        SimulatedFronts { fronts, sim_points: Vec::new() }
    }

    #[test]
    fn median_of_three() {
        let sims = fake_sims(vec![front(&[[0.0, 5.0]]), front(&[[1.0, 5.0]]), front(&[[2.0, 5.0]])]);
        let (i, n) = estimate_ideal_nadir(&sims).unwrap();
        assert_eq!(i[0], 1.0);
        assert_eq!(n[1], 5.0);
    }

    #[test]
    fn median_matches_sort_oracle() {
        let mut rng = stream(6, 0);
        let fronts: Vec<EmpiricalFront> = (0..100)
            .map(|_| {
                let pts: Vec<ObjectiveVector> =
                    (0..5).map(|_| ObjectiveVector(vec![rng.random(), rng.random()])).collect();
                EmpiricalFront::extract(&pts).unwrap()
            })
            .collect();
        let (i, n) = estimate_ideal_nadir(&fake_sims(fronts.clone())).unwrap();
        for j in 0..2 {
            let mut lo: Vec<f64> =
                fronts.iter().map(|f| f.points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
            let mut hi: Vec<f64> =
                fronts.iter().map(|f| f.points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
            lo.sort_by(|a, b| a.partial_cmp(b).unwrap());
            hi.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(i[j], (lo[49] + lo[50]) / 2.0);
            assert_eq!(n[j], (hi[49] + hi[50]) / 2.0);
        }
    }

    #[test]
    fn center_symmetric_front() {
        let f = front(&[[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]);
        let c = estimate_center(&f, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.point.0, vec![0.5, 0.5]);
        assert!(c.crossing);
    }

    #[test]
    fn center_single_point_projection() {
        let f = front(&[[3.0, -1.0]]);
        let c = estimate_center(&f, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        // the segment misses the region above (3,-1)
        assert!(!c.crossing);
        assert_eq!(c.point.0, vec![1.0, 1.0]);
        let f = front(&[[0.2, 0.6]]);
        let c = estimate_center(&f, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.point.0, vec![0.6, 0.6]);
    }

    #[test]
    fn center_degenerate_segment() {
        let f = front(&[[0.2, 0.6]]);
        assert!(matches!(estimate_center(&f, &[0.5, 0.5], &[0.5, 0.5]), Err(Error::Geometry(_))));
    }

    #[test]
    fn center_selection_is_affine_invariant() {
        let mut rng = stream(7, 0);
        for _ in 0..100 {
            let pts: Vec<ObjectiveVector> =
                (0..15).map(|_| ObjectiveVector(vec![rng.random(), rng.random()])).collect();
            let f = EmpiricalFront::extract(&pts).unwrap();
            let (i, n) = bounds_of(&f.points).unwrap();
            if i == n {
                continue;
            }
            let a = [0.1 + 10.0 * rng.random::<f64>(), 0.1 + 10.0 * rng.random::<f64>()];
            let b = [rng.random::<f64>() - 0.5, 5.0 * rng.random::<f64>()];
            let map = |y: &[f64]| ObjectiveVector(vec![a[0] * y[0] + b[0], a[1] * y[1] + b[1]]);
            let g = EmpiricalFront { points: f.points.iter().map(|p| map(p)).collect(), source_designs: vec![] };
            let c1 = estimate_center(&f, &i, &n).unwrap();
            let c2 = estimate_center(&g, &map(&i), &map(&n)).unwrap();
            assert_eq!(c1.front_index, c2.front_index);
        }
    }

    #[test]
    fn adapt_aligned_reference() {
        let f = front(&[[0.5, 0.5]]);
        let eps = 1e-3;
        let r = adapt_reference(&[0.5 - eps, 0.5 - eps], &f, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(distance(&r.point, &[0.5, 0.5]) <= eps * 2f64.sqrt() + 1e-9);
        assert!(non_dominated_by(&f, &r.point));
    }

    fn dense_segment_oracle(a: &[f64], b: &[f64], f: &EmpiricalFront) -> f64 {
        (0..=100_000)
            .map(|k| {
                let t = k as f64 / 100_000.0;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                f.points.iter().map(|y| distance(y, &p)).fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn adapt_dominating_reference() {
        let f = front(&[[0.0, 1.0], [1.0, 0.0]]);
        let r = adapt_reference(&[-1.0, -1.0], &f, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.case, AdaptCase::Dominating);
        assert!(non_dominated_by(&f, &r.point));
        // on segment R–N̂: both coordinates equal
        assert!((r.point[0] - r.point[1]).abs() < 1e-12);
        let best = dense_segment_oracle(&[-1.0, -1.0], &[1.0, 1.0], &f);
        let got = f.points.iter().map(|y| distance(y, &r.point)).fold(f64::INFINITY, f64::min);
        assert!((got - best).abs() < 1e-4, "{got} vs {best}");
    }

    #[test]
    fn adapt_dominated_reference() {
        let f = front(&[[0.0, 1.0], [1.0, 0.0]]);
        let r = adapt_reference(&[2.0, 2.0], &f, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.case, AdaptCase::Dominated);
        assert!(non_dominated_by(&f, &r.point));
        assert!((r.point[0] - r.point[1]).abs() < 1e-12 && r.point[0] <= 2.0);
        let best = dense_segment_oracle(&[0.0, 0.0], &[2.0, 2.0], &f);
        let got = f.points.iter().map(|y| distance(y, &r.point)).fold(f64::INFINITY, f64::min);
        assert!((got - best).abs() < 1e-4, "{got} vs {best}");
    }

    fn on_line(line: &BrokenLine, p: &[f64]) -> bool {
        closest_point_on_broken_line(line, &[p]).unwrap().distance < 1e-9
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn adapted_reference_is_never_dominated(seed in 0u64..u64::MAX) {
            let mut rng = stream(seed, 0);
            let k = rng.random_range(1..8);
            let pts: Vec<ObjectiveVector> = (0..k).map(|_| ObjectiveVector(vec![rng.random(), rng.random()])).collect();
            let f = EmpiricalFront::extract(&pts).unwrap();
            let (i, n) = bounds_of(&f.points).unwrap();
            let ideal = [i[0] - 0.2 * rng.random::<f64>(), i[1] - 0.2 * rng.random::<f64>()];
            let nadir = [n[0] + 0.2 * rng.random::<f64>(), n[1] + 0.2 * rng.random::<f64>()];
            let r = [3.0 * rng.random::<f64>() - 1.0, 3.0 * rng.random::<f64>() - 1.0];
            let out = adapt_reference(&r, &f, &ideal, &nadir).unwrap();
            prop_assert!(non_dominated_by(&f, &out.point));
            let line = BrokenLine::new(vec![ideal.as_slice().into(), r.as_slice().into(), nadir.as_slice().into()]).unwrap();
            prop_assert!(on_line(&line, &out.point));
        }

        #[test]
        fn center_lies_on_segment(seed in 0u64..u64::MAX) {
            let mut rng = stream(seed, 1);
            let pts: Vec<ObjectiveVector> = (0..6).map(|_| ObjectiveVector(vec![rng.random(), rng.random()])).collect();
            let f = EmpiricalFront::extract(&pts).unwrap();
            let ideal = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
            let nadir = [ideal[0] + 0.1 + rng.random::<f64>(), ideal[1] + 0.1 + rng.random::<f64>()];
            let c = estimate_center(&f, &ideal, &nadir).unwrap();
            let seg = BrokenLine::segment(ideal.as_slice().into(), nadir.as_slice().into()).unwrap();
            prop_assert!(on_line(&seg, &c.point));
        }
    }
}
