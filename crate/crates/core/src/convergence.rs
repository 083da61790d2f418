//! Local-convergence detection from the domination uncertainty along the
//! Ideal–reference–Nadir line.

use serde::{Deserialize, Serialize};

use crate::pareto::{weakly_dominates, BrokenLine};
use crate::targeting::SimulatedFronts;

/// Default number of quadrature points along the line.
pub const DEFAULT_N_QUAD: usize = 100;

/// Default tolerance as a fraction of the line length.
pub const DEFAULT_EPSILON_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub value: f64,
    pub n_line_points: usize,
    pub per_point_p: Vec<f64>,
}

/// Fraction of simulated fronts with a point weakly dominating `y`.
pub fn domination_probability(fronts: &SimulatedFronts, y: &[f64]) -> f64 {
    if fronts.fronts.is_empty() {
        return 0.0;
    }
    let hits = fronts.fronts.iter().filter(|f| f.points.iter().any(|p| weakly_dominates(p, y))).count();
    hits as f64 / fronts.fronts.len() as f64
}

/// Trapezoidal arc-length integral of `p(1 − p)` over `line` with `n_quad`
/// equally spaced points (at least two).
pub fn line_uncertainty(fronts: &SimulatedFronts, line: &BrokenLine, n_quad: usize) -> UncertaintyReport {
    let n = n_quad.max(2);
    let length = line.length();
    let per_point_p: Vec<f64> = (0..n)
        .map(|i| domination_probability(fronts, &line.point_at(length * i as f64 / (n - 1) as f64)))
        .collect();
    let h = length / (n - 1) as f64;
    let f: Vec<f64> = per_point_p.iter().map(|p| p * (1.0 - p)).collect();
    let value = h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]));
    UncertaintyReport { value: value.max(0.0), n_line_points: n, per_point_p }
}

/// Inclusive stopping test.
pub fn converged(report: &UncertaintyReport, epsilon: f64) -> bool {
    report.value <= epsilon
}

/// The default tolerance for `line`.
pub fn default_epsilon(line: &BrokenLine) -> f64 {
    DEFAULT_EPSILON_FRACTION * line.length()
}
