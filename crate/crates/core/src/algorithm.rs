//! The targeting loop: sequential mEI and its batch variants.

use serde::{Deserialize, Serialize};

use crate::bench::{Problem, ProblemSpec};
use crate::convergence::{converged, default_epsilon, line_uncertainty, DEFAULT_N_QUAD};
use crate::criteria::{ehi_exact_2d, mei_with_gradient, Criterion, McSampler, DEFAULT_N_MC};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, MultiSurrogate};
use crate::pareto::{bounds_of, BoxDomain, BrokenLine, Design, EmpiricalFront, ObjectiveVector};
use crate::rng::mix64;
use crate::search::{lhs, maximize, maximize_batch, maximize_batch_from, OptimizerConfig};
use crate::targeting::{adapt_reference, center_reference, estimate_front, simulate_fronts};

/// Criterion values below this are treated as vanished.
pub const DEAD_CRITERION: f64 = 1e-12;

fn default_q() -> usize {
    1
}
fn default_criterion() -> Criterion {
    Criterion::Mei
}
fn default_true() -> bool {
    true
}
fn default_n_mc() -> usize {
    DEFAULT_N_MC
}
fn default_n_sims() -> usize {
    200
}
fn default_n_sim_points() -> usize {
    1000
}
fn default_n_quad() -> usize {
    DEFAULT_N_QUAD
}

/// Optional per-component seeds; missing ones derive from the base seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doe: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    pub n_starts: usize,
    pub max_iters: usize,
    /// Log-normal (loc, scale) prior on width-relative lengthscales.
    pub lengthscale_prior: Option<(f64, f64)>,
}

impl Default for GpSettings {
    fn default() -> Self {
        let f = FitConfig::default();
        Self { n_starts: f.n_starts, max_iters: f.max_iters, lengthscale_prior: f.lengthscale_prior }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_starts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_raw: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_budget: Option<usize>,
}

/// Everything that defines one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Maximum number of evaluations, DoE included.
    pub budget: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    pub initial_doe_size: usize,
    /// Explicit DoE; a Latin hypercube is drawn when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_designs: Option<Vec<Vec<f64>>>,
    /// User reference point; center targeting when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    /// Stopping tolerance; defaults to 1e-3 × line length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_true")]
    pub stop_on_convergence: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: SeedOverrides,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default = "default_n_sim_points")]
    pub n_sim_points: usize,
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    #[serde(default)]
    pub gp: GpSettings,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    /// Reference of the EHI baseline; a point beyond the empirical Nadir is
    /// used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ehi_reference: Option<Vec<f64>>,
}

impl RunConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(problem: ProblemSpec, budget: usize, initial_doe_size: usize) -> Self {
        Self {
            problem,
            budget,
            q: 1,
            initial_doe_size,
            initial_designs: None,
            reference: None,
            criterion: Criterion::Mei,
            epsilon: None,
            stop_on_convergence: true,
            seed: 0,
            seeds: SeedOverrides::default(),
            n_mc: DEFAULT_N_MC,
            n_sims: default_n_sims(),
            n_sim_points: default_n_sim_points(),
            n_quad: DEFAULT_N_QUAD,
            gp: GpSettings::default(),
            optimizer: OptimizerSettings::default(),
            ehi_reference: None,
        }
    }

    pub fn doe_seed(&self) -> u64 {
        self.seeds.doe.unwrap_or_else(|| mix64(self.seed, 1))
    }

    pub fn mc_seed(&self) -> u64 {
        self.seeds.mc.unwrap_or_else(|| mix64(self.seed, 2))
    }

    pub fn optimizer_seed(&self) -> u64 {
        self.seeds.optimizer.unwrap_or_else(|| mix64(self.seed, 3))
    }

    pub fn gp_seed(&self) -> u64 {
        self.seeds.gp.unwrap_or_else(|| mix64(self.seed, 4))
    }

    /// Checks the config against a problem.
    pub fn validate(&self, problem: &dyn Problem) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.q < 1 {
            return bad("q must be at least 1".into());
        }
        if self.q > 1 && matches!(self.criterion, Criterion::Mei | Criterion::Ehi) {
            return bad(format!(
                "unsupported criterion/batch combination: {} with q = {}",
                self.criterion.name(),
                self.q
            ));
        }
        if self.initial_doe_size < 2 {
            return bad("initial_doe_size must be at least 2".into());
        }
        if self.budget < self.initial_doe_size {
            return bad("budget must be at least initial_doe_size".into());
        }
        if self.n_mc == 0 || self.n_sims == 0 || self.n_quad < 2 {
            return bad("n_mc and n_sims must be positive and n_quad at least 2".into());
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return bad("epsilon must be positive".into());
            }
        }
        let m = problem.n_objectives();
        for (name, r) in [("reference", &self.reference), ("ehi_reference", &self.ehi_reference)] {
            if let Some(r) = r {
                if r.len() != m || r.iter().any(|v| !v.is_finite()) {
                    return bad(format!("{name} must have {m} finite components"));
                }
            }
        }
        if let Some(designs) = &self.initial_designs {
            if designs.len() != self.initial_doe_size {
                return bad("initial_designs must have initial_doe_size rows".into());
            }
            if designs.iter().any(|x| x.len() != problem.dim() || !problem.domain().contains(x)) {
                return bad("initial_designs must lie in the problem domain".into());
            }
        }
        Ok(())
    }

    fn fit_config(&self, domain: &BoxDomain, iteration: usize) -> FitConfig {
        FitConfig {
            n_starts: self.gp.n_starts,
            max_iters: self.gp.max_iters,
            lengthscale_prior: self.gp.lengthscale_prior,
            ..FitConfig::for_domain(domain, mix64(self.gp_seed(), iteration as u64))
        }
    }

    fn optimizer_config(&self, batch: bool, iteration: usize) -> OptimizerConfig {
        let base = if batch { OptimizerConfig::batch() } else { OptimizerConfig::default() };
        OptimizerConfig {
            n_starts: self.optimizer.n_starts.unwrap_or(base.n_starts),
            n_raw: self.optimizer.n_raw.or(base.n_raw),
            local_budget: self.optimizer.local_budget.unwrap_or(base.local_budget),
            seed: mix64(self.optimizer_seed(), iteration as u64),
        }
    }
}

/// One objective evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    /// 0 for the initial design, otherwise the loop iteration.
    pub iteration: usize,
    pub design: Design,
    pub objectives: ObjectiveVector,
}

/// Diagnostics of one loop iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Reference point the criterion was maximized for.
    pub reference: ObjectiveVector,
    pub criterion_value: f64,
    pub ideal_hat: Option<ObjectiveVector>,
    pub nadir_hat: Option<ObjectiveVector>,
    pub center_hat: Option<ObjectiveVector>,
    pub line_uncertainty: Option<f64>,
    /// True when the criterion vanished and the most uncertain point was used.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Aborted { reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget-exhausted",
            RunStatus::Aborted { .. } => "aborted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub q: usize,
    pub initial_doe_size: usize,
    pub evaluations: Vec<Evaluation>,
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Line-uncertainty that triggered convergence, if it did.
    pub final_line_uncertainty: Option<f64>,
}

impl RunHistory {
    pub fn designs(&self) -> Vec<Design> {
        self.evaluations.iter().map(|e| e.design.clone()).collect()
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.evaluations.iter().map(|e| e.objectives.clone()).collect()
    }

    /// Empirical front after the first `n` evaluations.
    pub fn front_after(&self, n: usize) -> Result<EmpiricalFront> {
        let n = n.min(self.evaluations.len());
        let designs: Vec<Design> = self.evaluations[..n].iter().map(|e| e.design.clone()).collect();
        let objectives: Vec<ObjectiveVector> = self.evaluations[..n].iter().map(|e| e.objectives.clone()).collect();
        EmpiricalFront::from_evaluations(&designs, &objectives)
    }

    /// Evaluations divided by the batch size.
    pub fn wall_clock(&self, evaluations: usize) -> f64 {
        evaluations as f64 / self.q.max(1) as f64
    }
}

/// Builds the problem from the config and runs the loop.
pub fn run(config: &RunConfig) -> Result<RunHistory> {
    let problem = config.problem.build()?;
    run_with_problem(config, problem.as_ref())
}

/// Sequential targeting (q = 1).
pub fn run_targeting(config: &RunConfig) -> Result<RunHistory> {
    if config.q != 1 {
        return Err(Error::Config("sequential targeting needs q = 1".into()));
    }
    run(config)
}

/// Batch targeting (q ≥ 2).
pub fn run_batch_targeting(config: &RunConfig) -> Result<RunHistory> {
    if config.q < 2 {
        return Err(Error::Config("batch targeting needs q >= 2".into()));
    }
    run(config)
}

/// The initial design of a run.
pub fn initial_design(config: &RunConfig, problem: &dyn Problem) -> Vec<Design> {
    match &config.initial_designs {
        Some(rows) => rows.iter().map(|r| Design(r.clone())).collect(),
        None => lhs(config.initial_doe_size, problem.domain(), config.doe_seed()),
    }
}

/// Fits the surrogates used at `iteration` (0 for the DoE fit).
pub fn fit_models(
    config: &RunConfig,
    problem: &dyn Problem,
    evaluations: &[Evaluation],
    iteration: usize,
) -> Result<MultiSurrogate> {
    let xs: Vec<Design> = evaluations.iter().map(|e| e.design.clone()).collect();
    let ys: Vec<Vec<f64>> = evaluations.iter().map(|e| e.objectives.0.clone()).collect();
    MultiSurrogate::fit(&xs, &ys, &config.fit_config(problem.domain(), iteration))
}

/// Reference point of the EHI baseline: configured, or the empirical Nadir
/// pushed out by 10% of the front range.
pub fn ehi_reference(config: &RunConfig, front: &EmpiricalFront) -> Result<ObjectiveVector> {
    if let Some(r) = &config.ehi_reference {
        return Ok(ObjectiveVector(r.clone()));
    }
    let (ideal, nadir) = bounds_of(&front.points)?;
    Ok(ObjectiveVector(
        ideal
            .iter()
            .zip(nadir.iter())
            .map(|(i, n)| {
                let range = n - i;
                let pad = if range > 0.0 { 0.1 * range } else { 0.1 * n.abs().max(1.0) };
                n + pad
            })
            .collect(),
    ))
}

/// State of one iteration before the infill search.
struct Targets {
    reference: ObjectiveVector,
    ideal: Option<ObjectiveVector>,
    nadir: Option<ObjectiveVector>,
    center: Option<ObjectiveVector>,
    line_uncertainty: Option<f64>,
    converged: bool,
}

fn compute_targets(
    config: &RunConfig,
    problem: &dyn Problem,
    models: &MultiSurrogate,
    front: &EmpiricalFront,
    iteration: usize,
) -> Result<Targets> {
    if config.criterion == Criterion::Ehi {
        return Ok(Targets {
            reference: ehi_reference(config, front)?,
            ideal: None,
            nadir: None,
            center: None,
            line_uncertainty: None,
            converged: false,
        });
    }
    let seed = mix64(config.mc_seed(), 2 * iteration as u64);
    let sims = simulate_fronts(models, problem.domain(), config.n_sims, config.n_sim_points, seed)?;
    let est = estimate_front(&sims, front)?;
    let (ideal, nadir) = (&est.ideal_hat, &est.nadir_hat);
    let (reference, line_vertices) = match &config.reference {
        Some(r) => (
            adapt_reference(r, front, ideal, nadir)?.point,
            vec![ideal.clone(), ObjectiveVector(r.clone()), nadir.clone()],
        ),
        None => (center_reference(&est.center_hat, front, ideal, nadir)?, vec![ideal.clone(), nadir.clone()]),
    };
    let (value, is_converged) = match BrokenLine::new(line_vertices) {
        Ok(line) => {
            let report = line_uncertainty(&sims, &line, config.n_quad);
            let eps = config.epsilon.unwrap_or_else(|| default_epsilon(&line));
            (report.value, converged(&report, eps))
        }
        // a single-point line carries no uncertainty
        Err(Error::Geometry(_)) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok(Targets {
        reference,
        ideal: Some(est.ideal_hat),
        nadir: Some(est.nadir_hat),
        center: Some(est.center_hat),
        line_uncertainty: Some(value),
        converged: is_converged,
    })
}

/// Sum of posterior standard deviations, each scaled by its prior one.
fn normalized_sd(models: &MultiSurrogate, x: &[f64]) -> f64 {
    models.models.iter().map(|m| m.predict(x).sd / m.params().signal_variance.sqrt()).sum()
}

/// Picks the next designs; returns them with the criterion value and the
/// fallback flag.
fn select(
    config: &RunConfig,
    problem: &dyn Problem,
    models: &MultiSurrogate,
    front: &EmpiricalFront,
    reference: &[f64],
    iteration: usize,
) -> Result<(Vec<Design>, f64, bool)> {
    let domain = problem.domain();
    let (batch, value) = match config.criterion {
        Criterion::Mei => {
            let f = |x: &[f64]| mei_with_gradient(models, x, reference).map(|v| v.0).unwrap_or(f64::NEG_INFINITY);
            let g = |x: &[f64]| mei_with_gradient(models, x, reference).unwrap_or((f64::NEG_INFINITY, vec![0.0; x.len()]));
            let (x, v) = maximize(&f, Some(&g), domain, &config.optimizer_config(false, iteration));
            (vec![x], v)
        }
        Criterion::Ehi => {
            let f = |x: &[f64]| ehi_exact_or_mc(models, x, reference, front);
            let (x, v) = maximize(&f, None, domain, &config.optimizer_config(false, iteration));
            (vec![x], v)
        }
        Criterion::QMei | Criterion::MqEi => {
            let sampler = McSampler::new(
                config.n_mc,
                models.n_objectives(),
                config.q,
                mix64(config.mc_seed(), 2 * iteration as u64 + 1),
            );
            let qmei = config.criterion == Criterion::QMei;
            let f = |b: &[Design]| {
                let est = if qmei { sampler.qmei(models, b, reference) } else { sampler.mqei(models, b, reference) };
                est.map(|e| e.value).unwrap_or(f64::NEG_INFINITY)
            };
            // greedy start: the mEI maximizer, then the best completion point by point
            let seq = |x: &[f64]| mei_with_gradient(models, x, reference).map(|v| v.0).unwrap_or(f64::NEG_INFINITY);
            let seq_grad =
                |x: &[f64]| mei_with_gradient(models, x, reference).unwrap_or((f64::NEG_INFINITY, vec![0.0; x.len()]));
            let (first, _) = maximize(&seq, Some(&seq_grad), domain, &config.optimizer_config(false, iteration));
            let mut greedy = vec![first];
            for k in 1..config.q {
                let cfg = OptimizerConfig {
                    n_starts: 3,
                    n_raw: Some(50 * domain.dim()),
                    local_budget: 100,
                    ..config.optimizer_config(false, iteration * 131 + k)
                };
                let (next, _) = maximize_batch(&f, domain, 1, &greedy, &cfg);
                greedy.extend(next);
            }
            maximize_batch_from(&f, domain, config.q, &[], &[greedy], &config.optimizer_config(true, iteration))
        }
    };
    if value >= DEAD_CRITERION {
        return Ok((batch, value, false));
    }
    // kriging believer over the most uncertain points
    let mut believed = models.clone();
    let mut picks = Vec::with_capacity(config.q);
    for k in 0..config.q {
        let f = |x: &[f64]| normalized_sd(&believed, x);
        let (x, _) = maximize(&f, None, domain, &config.optimizer_config(false, iteration * 131 + k + 1));
        if k + 1 < config.q {
            believed = believed.believe(&x)?;
        }
        picks.push(x);
    }
    Ok((picks, value, true))
}

fn ehi_exact_or_mc(models: &MultiSurrogate, x: &[f64], r: &[f64], front: &EmpiricalFront) -> f64 {
    let preds = models.predict(x);
    if r.len() == 2 {
        ehi_exact_2d(&preds, r, front)
    } else {
        crate::criteria::ehi(models, x, r, front).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Runs the loop on an explicit problem instance.
pub fn run_with_problem(config: &RunConfig, problem: &dyn Problem) -> Result<RunHistory> {
    config.validate(problem)?;
    let mut history = RunHistory {
        q: config.q,
        initial_doe_size: config.initial_doe_size,
        evaluations: Vec::new(),
        iterations: Vec::new(),
        status: RunStatus::BudgetExhausted,
        final_line_uncertainty: None,
    };
    for x in initial_design(config, problem) {
        let y = problem.evaluate(&x)?;
        history.evaluations.push(Evaluation { index: history.evaluations.len(), iteration: 0, design: x, objectives: y });
    }
    if history.evaluations.len() + config.q > config.budget {
        return Ok(history);
    }
    let mut models = match fit_models(config, problem, &history.evaluations, 0) {
        Ok(m) => m,
        Err(e) => {
            history.status = RunStatus::Aborted { reason: format!("surrogate fit failed: {e}") };
            return Ok(history);
        }
    };
    let mut iteration = 0;
    while history.evaluations.len() + config.q <= config.budget {
        iteration += 1;
        let front = history.front_after(history.evaluations.len())?;
        let targets = match compute_targets(config, problem, &models, &front, iteration) {
            Ok(t) => t,
            Err(e @ Error::Conditioning(_)) => {
                history.status = RunStatus::Aborted { reason: format!("front simulation failed: {e}") };
                return Ok(history);
            }
            Err(e) => return Err(e),
        };
        if targets.converged && config.stop_on_convergence {
            history.status = RunStatus::Converged;
            history.final_line_uncertainty = targets.line_uncertainty;
            return Ok(history);
        }
        let (mut batch, value, fallback) = select(config, problem, &models, &front, &targets.reference, iteration)?;
        batch.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        for x in batch {
            let y = problem.evaluate(&x)?;
            history.evaluations.push(Evaluation { index: history.evaluations.len(), iteration, design: x, objectives: y });
        }
        history.iterations.push(IterationRecord {
            iteration,
            reference: targets.reference,
            criterion_value: value,
            ideal_hat: targets.ideal,
            nadir_hat: targets.nadir,
            center_hat: targets.center,
            line_uncertainty: targets.line_uncertainty,
            fallback,
        });
        models = match fit_models(config, problem, &history.evaluations, iteration) {
            Ok(m) => m,
            Err(e) => {
                history.status = RunStatus::Aborted { reason: format!("surrogate fit failed: {e}") };
                return Ok(history);
            }
        };
    }
    Ok(history)
}
