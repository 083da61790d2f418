//! Comparison indicators computed from run histories.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::algorithm::RunHistory;
use crate::bench::{ParetoOracle, Problem};
use crate::error::{check_dim, Error, Result};
use crate::pareto::{bounds_of, distance, dominates_unchecked, hypervolume, EmpiricalFront, ObjectiveVector};
use crate::targeting::estimate_center;

/// Position (1-based, counting only evaluations after the initial design) of
/// the first evaluation strictly dominating `r`. `Some(0)` when a DoE point
/// already dominates it.
pub fn time_to_target(history: &RunHistory, r: &[f64]) -> Option<usize> {
    let first = history.evaluations.iter().position(|e| dominates_unchecked(&e.objectives, r))?;
    Some((first + 1).saturating_sub(history.initial_doe_size))
}

/// Number of evaluations strictly dominating `r`.
pub fn count_dominating(history: &RunHistory, r: &[f64]) -> usize {
    history.evaluations.iter().filter(|e| dominates_unchecked(&e.objectives, r)).count()
}

/// Hypervolume of the front up to `R_w = (1 − w)·center + w·nadir`.
pub fn restricted_hypervolume(front: &EmpiricalFront, center: &[f64], nadir: &[f64], w: f64) -> Result<f64> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::Config("w must lie in (0, 1]".into()));
    }
    check_dim(center.len(), nadir.len())?;
    let r: Vec<f64> = center.iter().zip(nadir).map(|(c, n)| (1.0 - w) * c + w * n).collect();
    Ok(hypervolume(front, &r))
}

/// Smallest Euclidean distance between any point and any reference sample.
pub fn distance_to_set<P, Q>(points: &[P], reference: &[Q]) -> Result<f64>
where
    P: Deref<Target = [f64]>,
    Q: Deref<Target = [f64]>,
{
    let dim = points.first().ok_or(Error::EmptySet("points"))?.len();
    let _ = reference.first().ok_or(Error::EmptySet("reference set"))?;
    let mut best = f64::INFINITY;
    for p in points {
        check_dim(dim, p.len())?;
        for q in reference {
            check_dim(dim, q.len())?;
            best = best.min(distance(p, q));
        }
    }
    Ok(best)
}

/// Mean successful runtime divided by the success fraction; `+∞` without
/// successes.
pub fn expected_runtime(times: &[Option<usize>]) -> f64 {
    let successes: Vec<f64> = times.iter().flatten().map(|&t| t as f64).collect();
    if successes.is_empty() || times.is_empty() {
        return f64::INFINITY;
    }
    let mean = successes.iter().sum::<f64>() / successes.len() as f64;
    mean / (successes.len() as f64 / times.len() as f64)
}

/// Like [`distance_to_set`] but NaN for an empty reference set.
fn distance_or_nan<P, Q>(points: &[P], reference: &[Q]) -> Result<f64>
where
    P: Deref<Target = [f64]>,
    Q: Deref<Target = [f64]>,
{
    if reference.is_empty() {
        Ok(f64::NAN)
    } else {
        distance_to_set(points, reference)
    }
}

/// Reference quantities shared by all runs on one problem.
#[derive(Clone, Debug)]
pub struct MetricContext {
    pub reference: ObjectiveVector,
    pub oracle: ParetoOracle,
    pub targeted: ParetoOracle,
    pub center: ObjectiveVector,
    pub nadir: ObjectiveVector,
    pub w: f64,
    /// Hypervolume of the oracle front up to the reference.
    pub oracle_hypervolume: f64,
}

impl MetricContext {
    pub fn new(problem: &dyn Problem, reference: &[f64], resolution: usize, w: f64) -> Result<Self> {
        let oracle = problem.pareto_oracle(resolution)?;
        let targeted = oracle.targeted(reference);
        let (ideal, nadir) = bounds_of(&oracle.objectives)?;
        let front = EmpiricalFront { points: oracle.objectives.clone(), source_designs: oracle.designs.clone() };
        let center = estimate_center(&front, &ideal, &nadir)?.point;
        let oracle_hypervolume = hypervolume(&front, reference);
        Ok(Self { reference: reference.into(), oracle, targeted, center, nadir, w, oracle_hypervolume })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub time_to_target: Option<usize>,
    pub hypervolume_at_r: f64,
    /// Hypervolume at R relative to the oracle front's.
    pub hypervolume_at_r_normalized: f64,
    pub restricted_hypervolume: f64,
    pub n_dominating: usize,
    /// Distances are NaN when the targeted set is empty.
    pub dist_to_pxt: f64,
    pub dist_to_px: f64,
    pub dist_to_pyt: f64,
    pub dist_to_py: f64,
}

impl MetricReport {
    pub fn compute(history: &RunHistory, ctx: &MetricContext) -> Result<Self> {
        let r = &ctx.reference;
        let front = history.front_after(history.evaluations.len())?;
        let hv = hypervolume(&front, r);
        let designs = history.designs();
        let objectives = history.objectives();
        Ok(Self {
            time_to_target: time_to_target(history, r),
            hypervolume_at_r: hv,
            hypervolume_at_r_normalized: if ctx.oracle_hypervolume > 0.0 { hv / ctx.oracle_hypervolume } else { f64::NAN },
            restricted_hypervolume: restricted_hypervolume(&front, &ctx.center, &ctx.nadir, ctx.w)?,
            n_dominating: count_dominating(history, r),
            dist_to_pxt: distance_or_nan(&designs, &ctx.targeted.designs)?,
            dist_to_px: distance_or_nan(&designs, &ctx.oracle.designs)?,
            dist_to_pyt: distance_or_nan(&objectives, &ctx.targeted.objectives)?,
            dist_to_py: distance_or_nan(&objectives, &ctx.oracle.objectives)?,
        })
    }

    /// CSV header matching [`MetricReport::csv_row`].
    pub fn csv_header() -> Vec<&'static str> {
        vec![
            "time_to_target",
            "hypervolume_at_r",
            "hypervolume_at_r_normalized",
            "restricted_hypervolume",
            "n_dominating",
            "dist_to_pxt",
            "dist_to_px",
            "dist_to_pyt",
            "dist_to_py",
        ]
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.time_to_target.map_or(String::new(), |t| t.to_string()),
            self.hypervolume_at_r.to_string(),
            self.hypervolume_at_r_normalized.to_string(),
            self.restricted_hypervolume.to_string(),
            self.n_dominating.to_string(),
            self.dist_to_pxt.to_string(),
            self.dist_to_px.to_string(),
            self.dist_to_pyt.to_string(),
            self.dist_to_py.to_string(),
        ]
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Aggregates of one algorithm over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub label: String,
    pub n_runs: usize,
    pub n_success: usize,
    /// Over successful runs only.
    pub time_to_target: MeanStd,
    pub expected_runtime: f64,
    pub hypervolume_at_r: MeanStd,
    pub hypervolume_at_r_normalized: MeanStd,
    pub restricted_hypervolume: MeanStd,
    pub n_dominating: MeanStd,
    pub dist_to_pxt: MeanStd,
    pub dist_to_px: MeanStd,
    pub dist_to_pyt: MeanStd,
    pub dist_to_py: MeanStd,
}

impl MetricSummary {
    pub fn of(label: &str, reports: &[MetricReport]) -> Self {
        let times: Vec<Option<usize>> = reports.iter().map(|r| r.time_to_target).collect();
        let succ: Vec<f64> = times.iter().flatten().map(|&t| t as f64).collect();
        let col = |f: &dyn Fn(&MetricReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            label: label.to_string(),
            n_runs: reports.len(),
            n_success: succ.len(),
            time_to_target: MeanStd::of(&succ),
            expected_runtime: expected_runtime(&times),
            hypervolume_at_r: col(&|r| r.hypervolume_at_r),
            hypervolume_at_r_normalized: col(&|r| r.hypervolume_at_r_normalized),
            restricted_hypervolume: col(&|r| r.restricted_hypervolume),
            n_dominating: col(&|r| r.n_dominating as f64),
            dist_to_pxt: col(&|r| r.dist_to_pxt),
            dist_to_px: col(&|r| r.dist_to_px),
            dist_to_pyt: col(&|r| r.dist_to_pyt),
            dist_to_py: col(&|r| r.dist_to_py),
        }
    }

    /// Time-to-target cell: `mean (std)`, with `×` and the expected runtime
    /// when some run never dominated the target.
    pub fn time_to_target_cell(&self) -> String {
        if self.n_success == 0 {
            return "× (ERT inf)".into();
        }
        let base = format!("{:.1} ({:.1})", self.time_to_target.mean, self.time_to_target.std);
        if self.n_success < self.n_runs {
            format!("{base} × (ERT {:.1})", self.expected_runtime)
        } else {
            base
        }
    }
}

fn cell(m: &MeanStd) -> String {
    format!("{:.4} ({:.4})", m.mean, m.std)
}

/// Plain-text table with one row per algorithm.
pub fn format_table(rows: &[MetricSummary]) -> String {
    let header = [
        "algorithm",
        "time to target",
        "HV at R",
        "HV at R (norm.)",
        "restricted HV",
        "# dominating R",
        "dist P_XT",
        "dist P_X",
        "dist P_YT",
        "dist P_Y",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.time_to_target_cell(),
                cell(&r.hypervolume_at_r),
                cell(&r.hypervolume_at_r_normalized),
                cell(&r.restricted_hypervolume),
                format!("{:.1} ({:.1})", r.n_dominating.mean, r.n_dominating.std),
                cell(&r.dist_to_pxt),
                cell(&r.dist_to_px),
                cell(&r.dist_to_pyt),
                cell(&r.dist_to_py),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|row| row[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<String>| -> String {
        cells.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect::<Vec<_>>().join(" | ").trim_end().to_string()
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    out.push('\n');
    for row in body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{Evaluation, RunStatus};
    use crate::pareto::Design;
    use crate::rng::stream;
    use rand::Rng;

    fn history(doe: usize, ys: &[[f64; 2]]) -> RunHistory {
        RunHistory {
            q: 1,
            initial_doe_size: doe,
            evaluations: ys
                .iter()
                .enumerate()
                .map(|(i, y)| Evaluation {
                    index: i,
                    iteration: i.saturating_sub(doe - 1).min(i),
                    design: Design(vec![i as f64]),
                    objectives: ObjectiveVector(y.to_vec()),
                })
                .collect(),
            iterations: vec![],
            status: RunStatus::BudgetExhausted,
            final_line_uncertainty: None,
        }
    }

    #[test]
    fn time_to_target_examples() {
        let r = [0.5, 0.5];
        let h = history(2, &[[1.0, 1.0], [1.0, 0.0], [0.1, 0.1]]);
        assert_eq!(time_to_target(&h, &r), Some(1));
        let h = history(2, &[[1.0, 1.0], [1.0, 0.0], [0.6, 0.1]]);
        assert_eq!(time_to_target(&h, &r), None);
        let mut ys = vec![[1.0, 1.0]; 3];
        ys.extend(vec![[0.9, 0.9]; 6]);
        ys.push([0.4, 0.4]);
        ys.push([0.3, 0.3]);
        assert_eq!(time_to_target(&history(3, &ys), &r), Some(7));
        let h = history(2, &[[0.1, 0.1], [1.0, 0.0]]);
        assert_eq!(time_to_target(&h, &r), Some(0));
    }

    #[test]
    fn count_examples() {
        let r = [0.5, 0.5];
        assert_eq!(count_dominating(&history(1, &[]), &r), 0);
        let h = history(1, &[[0.1, 0.1], [0.2, 0.0], [0.0, 0.4]]);
        assert_eq!(count_dominating(&h, &r), 3);
        let mut rng = stream(1, 0);
        let ys: Vec<[f64; 2]> = (0..50).map(|_| [rng.random(), rng.random()]).collect();
        let h = history(5, &ys);
        let brute = ys.iter().filter(|y| y[0] <= r[0] && y[1] <= r[1] && (y[0] < r[0] || y[1] < r[1])).count();
        assert_eq!(count_dominating(&h, &r), brute);
        assert_eq!(time_to_target(&h, &r).is_none(), brute == 0);
    }

    #[test]
    fn restricted_hypervolume_reduces_to_plain() {
        let f = EmpiricalFront::extract(&[vec![0.0, 1.0].into(), vec![1.0, 0.0].into()]).unwrap();
        let full = restricted_hypervolume(&f, &[0.5, 0.5], &[2.0, 2.0], 1.0).unwrap();
        assert_eq!(full, hypervolume(&f, &[2.0, 2.0]));
        // front outside the box below R_w
        let g = EmpiricalFront::extract(&[vec![3.0, 3.0].into()]).unwrap();
        assert_eq!(restricted_hypervolume(&g, &[0.5, 0.5], &[2.0, 2.0], 0.5).unwrap(), 0.0);
        assert!(restricted_hypervolume(&f, &[0.5, 0.5], &[2.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn restricted_region_is_central_tenth_of_linear_front() {
        // front on y2 = 1 − y1, C = (0.5, 0.5), N = (1, 1)
        let w = 0.1;
        let rw = [0.5 + 0.5 * w, 0.5 + 0.5 * w];
        let n = 10_001;
        let pts: Vec<[f64; 2]> = (0..n).map(|i| {
            let t = i as f64 / (n - 1) as f64;
            [t, 1.0 - t]
        }).collect();
        let inside = pts.iter().filter(|p| p[0] <= rw[0] && p[1] <= rw[1]).count() as f64 / n as f64;
        assert!((inside - w).abs() < 1e-3, "{inside}");
        let f = EmpiricalFront::extract(&pts.iter().map(|p| ObjectiveVector(p.to_vec())).collect::<Vec<_>>()).unwrap();
        assert!(restricted_hypervolume(&f, &[0.5, 0.5], &[1.0, 1.0], w).unwrap() > 0.0);
    }

    #[test]
    fn distance_examples() {
        let a: Vec<Vec<f64>> = vec![vec![0.0, 0.0]];
        let b: Vec<Vec<f64>> = vec![vec![3.0, 4.0]];
        assert_eq!(distance_to_set(&a, &b).unwrap(), 5.0);
        assert_eq!(distance_to_set(&b, &b).unwrap(), 0.0);
        let c: Vec<Vec<f64>> = vec![vec![1.0]];
        assert!(matches!(distance_to_set(&a, &c), Err(Error::Dimension { .. })));
        let mut rng = stream(2, 0);
        let p: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random(), rng.random()]).collect();
        let q: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut brute = f64::INFINITY;
        for x in &p {
            for y in &q {
                brute = brute.min(((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt());
            }
        }
        assert_eq!(distance_to_set(&p, &q).unwrap(), brute);
    }

    #[test]
    fn expected_runtime_examples() {
        assert_eq!(expected_runtime(&[Some(5), Some(5), Some(5)]), 5.0);
        assert_eq!(expected_runtime(&[Some(6), Some(10), None, None]), 16.0);
        assert_eq!(expected_runtime(&[None, None]), f64::INFINITY);
        let t = [Some(3), None, Some(8), Some(4), None];
        assert!((expected_runtime(&t) - (15.0 / 3.0) / (3.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn summary_marks_failures() {
        let report = |t: Option<usize>| MetricReport {
            time_to_target: t,
            hypervolume_at_r: 0.0,
            hypervolume_at_r_normalized: 0.0,
            restricted_hypervolume: 0.0,
            n_dominating: t.map_or(0, |_| 1),
            dist_to_pxt: 0.0,
            dist_to_px: 0.0,
            dist_to_pyt: 0.0,
            dist_to_py: 0.0,
        };
        let s = MetricSummary::of("mEI", &[report(Some(4)), report(None)]);
        assert!(s.time_to_target_cell().contains('×'));
        let s = MetricSummary::of("mEI", &[report(Some(4)), report(Some(6))]);
        assert_eq!(s.time_to_target_cell(), "5.0 (1.4)");
        assert!(format_table(&[s]).contains("mEI"));
    }
}
