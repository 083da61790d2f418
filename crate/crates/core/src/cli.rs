//! Command-line entry point: single runs, seed replication and plot data.
//!
//! Output files of `run` (all with a header row):
//!
//! * `spec.resolved.toml`: the experiment spec with every default filled in.
//! * `history.csv`: `eval_index, iter, x1..xd, f1..fm, Rhat1..Rhat_m,
//!   criterion_value, line_uncertainty, status`. DoE rows have empty
//!   reference, criterion and uncertainty cells; `status` is `doe`, `infill`
//!   or `fallback`.
//! * `summary.json`: run status, front and per-iteration diagnostics.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{fit_models, run_with_problem, IterationRecord, RunConfig, RunHistory};
use crate::bench::{csv_err, Problem};
use crate::criteria::{mei, Criterion, McSampler};
use crate::error::{Error, Result};
use crate::metrics::{format_table, MetricContext, MetricReport, MetricSummary};
use crate::pareto::{Design, ObjectiveVector};
use crate::rng::mix64;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TARGETMO_THREADS";

#[derive(Parser, Debug)]
#[command(name = "targetmo", version, about = "Preference-targeted Bayesian multi-objective optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute one run.
    Run(RunArgs),
    /// Repeat a run over derived seeds and summarize the metrics.
    Replicate(RunArgs),
    /// Write plot-ready CSVs for a finished run.
    Plotdata(PlotArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; overrides the one in the spec file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides the one in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(clap::Args, Debug)]
struct PlotArgs {
    /// Directory written by `run`.
    #[arg(long)]
    out: PathBuf,
    /// Grid points per axis of the criterion surface.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long)]
    quiet: bool,
}

fn default_replications() -> usize {
    10
}
fn default_resolution() -> usize {
    200
}
fn default_w() -> f64 {
    0.1
}

/// Replication and reporting settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default = "default_replications")]
    pub n_replications: usize,
    /// Metric columns to report; all when empty.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Name of the summary table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_id: Option<String>,
    /// Resolution of the Pareto-set oracle used by the metrics.
    #[serde(default = "default_resolution")]
    pub oracle_resolution: usize,
    /// Width of the restricted-hypervolume region around the center.
    #[serde(default = "default_w")]
    pub w: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            n_replications: default_replications(),
            metrics: Vec::new(),
            output_dir: None,
            table_id: None,
            oracle_resolution: default_resolution(),
            w: default_w(),
        }
    }
}

/// An algorithm compared in `replicate`; unset fields keep the run's values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<Criterion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

/// Contents of a spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub run: RunConfig,
    #[serde(default)]
    pub experiment: ExperimentSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.n_replications == 0 {
            return Err(Error::Config("n_replications must be at least 1".into()));
        }
        for name in &self.experiment.metrics {
            if !MetricReport::csv_header().contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown metric `{name}`")));
            }
        }
        let problem = self.run.problem.build()?;
        self.run.validate(problem.as_ref())?;
        for v in &self.variants {
            v.apply(&self.run).validate(problem.as_ref())?;
        }
        Ok(())
    }

    /// Labelled run configs compared by `replicate`.
    pub fn arms(&self) -> Vec<(String, RunConfig)> {
        if self.variants.is_empty() {
            let label = match self.run.q {
                1 => self.run.criterion.name().to_string(),
                q => format!("{}-{}", q, self.run.criterion.name()),
            };
            vec![(label, self.run.clone())]
        } else {
            self.variants.iter().map(|v| (v.label.clone(), v.apply(&self.run))).collect()
        }
    }
}

impl Variant {
    fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        if let Some(cr) = self.criterion {
            c.criterion = cr;
        }
        if let Some(q) = self.q {
            c.q = q;
        }
        if let Some(b) = self.budget {
            c.budget = b;
        }
        c
    }
}

/// Seed of replication `r`.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    mix64(base, r as u64)
}

/// Run failures split by whether the input or the execution was at fault.
#[derive(Debug)]
enum Failure {
    Invalid(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Invalid(e) | Failure::Runtime(e) => e,
        }
    }
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e)
}

/// Parses `std::env::args` and executes the command; returns the exit code.
pub fn main() -> i32 {
    main_from(std::env::args_os())
}

/// Like [`main`] with explicit arguments (the first is the program name).
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Replicate(a) => cmd_replicate(&a),
        Command::Plotdata(a) => cmd_plotdata(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.error());
            f.code()
        }
    }
}

fn load_spec(args: &RunArgs) -> std::result::Result<(ExperimentSpec, PathBuf), Failure> {
    let mut spec = ExperimentSpec::load(&args.spec).map_err(Failure::Invalid)?;
    if let Some(seed) = args.seed {
        spec.run.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.experiment.output_dir = Some(out.clone());
    }
    spec.validate().map_err(Failure::Invalid)?;
    let out = spec
        .experiment
        .output_dir
        .clone()
        .ok_or_else(|| Failure::Invalid(Error::Config("no output directory (use --out)".into())))?;
    fs::create_dir_all(&out).map_err(|e| runtime(e.into()))?;
    Ok((spec, out))
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be a positive integer")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Serializes a run history in the `history.csv` layout.
pub fn history_csv(history: &RunHistory, d: usize, m: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["eval_index".to_string(), "iter".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|j| format!("f{j}")));
    header.extend((1..=m).map(|j| format!("Rhat{j}")));
    header.extend(["criterion_value", "line_uncertainty", "status"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for e in &history.evaluations {
        let rec = history.iterations.iter().find(|r| r.iteration == e.iteration && e.iteration > 0);
        let mut row = vec![e.index.to_string(), e.iteration.to_string()];
        row.extend(e.design.iter().map(|v| v.to_string()));
        row.extend(e.objectives.iter().map(|v| v.to_string()));
        match rec {
            Some(r) => {
                row.extend(r.reference.iter().map(|v| v.to_string()));
                row.push(r.criterion_value.to_string());
                row.push(r.line_uncertainty.map_or(String::new(), |v| v.to_string()));
                row.push(if r.fallback { "fallback" } else { "infill" }.into());
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), m + 2));
                row.push("doe".into());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub status_detail: Option<String>,
    pub n_evaluations: usize,
    pub n_iterations: usize,
    pub final_line_uncertainty: Option<f64>,
    pub front: Vec<ObjectiveVector>,
    pub front_designs: Vec<Design>,
    pub iterations: Vec<IterationRecord>,
    pub metrics: Option<MetricReport>,
}

fn summarize(history: &RunHistory, metrics: Option<MetricReport>) -> Result<RunSummary> {
    let front = history.front_after(history.evaluations.len())?;
    Ok(RunSummary {
        status: history.status.label().into(),
        status_detail: match &history.status {
            crate::algorithm::RunStatus::Aborted { reason } => Some(reason.clone()),
            _ => None,
        },
        n_evaluations: history.evaluations.len(),
        n_iterations: history.iterations.len(),
        final_line_uncertainty: history.final_line_uncertainty,
        front: front.points,
        front_designs: front.source_designs,
        iterations: history.iterations.clone(),
        metrics,
    })
}

/// Reference used for the metrics: the user's, or the oracle center.
fn metric_context(spec: &ExperimentSpec, problem: &dyn Problem) -> Result<Option<MetricContext>> {
    let e = &spec.experiment;
    let ctx = match &spec.run.reference {
        Some(r) => MetricContext::new(problem, r, e.oracle_resolution, e.w),
        None => {
            let c = MetricContext::new(problem, &vec![f64::INFINITY; problem.n_objectives()], e.oracle_resolution, e.w)?;
            MetricContext::new(problem, &c.center, e.oracle_resolution, e.w)
        }
    };
    match ctx {
        Ok(c) => Ok(Some(c)),
        Err(Error::Capability(_)) => Ok(None),
        Err(err) => Err(err),
    }
}

fn cmd_run(args: &RunArgs) -> std::result::Result<(), Failure> {
    let (spec, out) = load_spec(args)?;
    let problem = spec.run.problem.build().map_err(Failure::Invalid)?;
    let resolved = spec.to_toml().map_err(Failure::Invalid)?;
    write_atomic(&out.join("spec.resolved.toml"), resolved.as_bytes()).map_err(runtime)?;
    let history = run_with_problem(&spec.run, problem.as_ref()).map_err(runtime)?;
    let metrics = match metric_context(&spec, problem.as_ref()).map_err(runtime)? {
        Some(ctx) => Some(MetricReport::compute(&history, &ctx).map_err(runtime)?),
        None => None,
    };
    let csv = history_csv(&history, problem.dim(), problem.n_objectives()).map_err(runtime)?;
    write_atomic(&out.join("history.csv"), &csv).map_err(runtime)?;
    let summary = summarize(&history, metrics).map_err(runtime)?;
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| runtime(Error::Data(e.to_string())))?;
    write_atomic(&out.join("summary.json"), &json).map_err(runtime)?;
    if !args.quiet {
        println!(
            "{}: {} evaluations, {} iterations, front of {} points -> {}",
            summary.status,
            summary.n_evaluations,
            summary.n_iterations,
            summary.front.len(),
            out.display()
        );
    }
    Ok(())
}

/// One row of `metrics.csv`.
struct ReplicationResult {
    label: String,
    replication: usize,
    seed: u64,
    report: MetricReport,
}

fn cmd_replicate(args: &RunArgs) -> std::result::Result<(), Failure> {
    let (spec, out) = load_spec(args)?;
    let problem = spec.run.problem.build().map_err(Failure::Invalid)?;
    let ctx = metric_context(&spec, problem.as_ref())
        .map_err(runtime)?
        .ok_or_else(|| Failure::Invalid(Error::Capability("problem has no Pareto-set oracle for metrics".into())))?;
    let resolved = spec.to_toml().map_err(Failure::Invalid)?;
    write_atomic(&out.join("spec.resolved.toml"), resolved.as_bytes()).map_err(runtime)?;
    let arms = spec.arms();
    let n_rep = spec.experiment.n_replications;
    let jobs: Vec<(usize, usize)> = (0..arms.len()).flat_map(|a| (0..n_rep).map(move |r| (a, r))).collect();
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| runtime(e.into()))?;
    let pool = thread_pool().map_err(Failure::Invalid)?;
    let results: Vec<Result<ReplicationResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(a, r)| {
                let (label, base) = &arms[a];
                let mut config = base.clone();
                config.seed = replication_seed(spec.run.seed, r);
                let problem = config.problem.build()?;
                let history = run_with_problem(&config, problem.as_ref())?;
                let csv = history_csv(&history, problem.dim(), problem.n_objectives())?;
                let name = format!("{}_rep{r:03}.history.csv", sanitize(label));
                write_atomic(&runs_dir.join(name), &csv)?;
                let report = MetricReport::compute(&history, &ctx)?;
                Ok(ReplicationResult { label: label.clone(), replication: r, seed: config.seed, report })
            })
            .collect()
    });
    let results: Vec<ReplicationResult> = results.into_iter().collect::<Result<_>>().map_err(runtime)?;

    let columns: Vec<&str> = if spec.experiment.metrics.is_empty() {
        MetricReport::csv_header()
    } else {
        spec.experiment.metrics.iter().map(String::as_str).collect()
    };
    let all = MetricReport::csv_header();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["algorithm", "replication", "seed"];
    header.extend(&columns);
    w.write_record(&header).map_err(|e| runtime(csv_err(e)))?;
    for r in &results {
        let cells = r.report.csv_row();
        let mut row = vec![r.label.clone(), r.replication.to_string(), r.seed.to_string()];
        row.extend(columns.iter().map(|c| cells[all.iter().position(|a| a == c).unwrap_or(0)].clone()));
        w.write_record(&row).map_err(|e| runtime(csv_err(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| runtime(Error::Io(e.into_error())))?;
    write_atomic(&out.join("metrics.csv"), &bytes).map_err(runtime)?;

    let summaries: Vec<MetricSummary> = arms
        .iter()
        .map(|(label, _)| {
            let reports: Vec<MetricReport> =
                results.iter().filter(|r| &r.label == label).map(|r| r.report.clone()).collect();
            MetricSummary::of(label, &reports)
        })
        .collect();
    let mut table = String::new();
    if let Some(id) = &spec.experiment.table_id {
        table.push_str(id);
        table.push('\n');
    }
    table.push_str(&format_table(&summaries));
    write_atomic(&out.join("summary.txt"), table.as_bytes()).map_err(runtime)?;
    let json = serde_json::to_vec_pretty(&summaries).map_err(|e| runtime(Error::Data(e.to_string())))?;
    write_atomic(&out.join("summary.json"), &json).map_err(runtime)?;
    if !args.quiet {
        print!("{table}");
    }
    Ok(())
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn cmd_plotdata(args: &PlotArgs) -> std::result::Result<(), Failure> {
    let missing = |what: &str| Failure::Invalid(Error::Config(format!("missing {what} in {}", args.out.display())));
    let spec_text = fs::read_to_string(args.out.join("spec.resolved.toml")).map_err(|_| missing("spec.resolved.toml"))?;
    let spec = ExperimentSpec::from_toml(&spec_text).map_err(Failure::Invalid)?;
    let summary: RunSummary = serde_json::from_slice(
        &fs::read(args.out.join("summary.json")).map_err(|_| missing("summary.json"))?,
    )
    .map_err(|e| Failure::Invalid(Error::Data(format!("summary.json: {e}"))))?;
    let history = read_history(&args.out.join("history.csv"), &spec, &summary).map_err(|e| match e {
        Error::Io(_) => missing("history.csv"),
        e => Failure::Invalid(e),
    })?;
    let problem = spec.run.problem.build().map_err(Failure::Invalid)?;
    let m = problem.n_objectives();

    // fronts after the DoE and after each iteration
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iter".to_string(), "n_evaluations".to_string(), "point".to_string()];
    header.extend((1..=m).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| runtime(csv_err(e)))?;
    let last_iter = history.evaluations.iter().map(|e| e.iteration).max().unwrap_or(0);
    for it in 0..=last_iter {
        let n = history.evaluations.iter().filter(|e| e.iteration <= it).count();
        let front = history.front_after(n).map_err(runtime)?;
        for (k, p) in front.points.iter().enumerate() {
            let mut row = vec![it.to_string(), n.to_string(), k.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| runtime(csv_err(e)))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| runtime(Error::Io(e.into_error())))?;
    write_atomic(&args.out.join("front_per_iteration.csv"), &bytes).map_err(runtime)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iter".to_string()];
    header.extend((1..=m).map(|j| format!("Rhat{j}")));
    header.extend((1..=m).map(|j| format!("ideal{j}")));
    header.extend((1..=m).map(|j| format!("nadir{j}")));
    header.extend((1..=m).map(|j| format!("center{j}")));
    header.extend(["criterion_value", "line_uncertainty", "fallback"].map(String::from));
    w.write_record(&header).map_err(|e| runtime(csv_err(e)))?;
    let opt = |v: &Option<ObjectiveVector>| -> Vec<String> {
        match v {
            Some(p) => p.iter().map(|x| x.to_string()).collect(),
            None => vec![String::new(); m],
        }
    };
    for rec in &summary.iterations {
        let mut row = vec![rec.iteration.to_string()];
        row.extend(rec.reference.iter().map(|v| v.to_string()));
        row.extend(opt(&rec.ideal_hat));
        row.extend(opt(&rec.nadir_hat));
        row.extend(opt(&rec.center_hat));
        row.push(rec.criterion_value.to_string());
        row.push(rec.line_uncertainty.map_or(String::new(), |v| v.to_string()));
        row.push(rec.fallback.to_string());
        w.write_record(&row).map_err(|e| runtime(csv_err(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| runtime(Error::Io(e.into_error())))?;
    write_atomic(&args.out.join("refpoint_trajectory.csv"), &bytes).map_err(runtime)?;

    let mut written = vec!["front_per_iteration.csv", "refpoint_trajectory.csv"];
    if let Some(bytes) = criterion_grid(&spec.run, problem.as_ref(), &history, args.grid).map_err(runtime)? {
        write_atomic(&args.out.join("criterion_grid.csv"), &bytes).map_err(runtime)?;
        written.push("criterion_grid.csv");
    }
    if !args.quiet {
        println!("wrote {}", written.join(", "));
    }
    Ok(())
}

/// Rebuilds a history from `history.csv` plus the iteration records.
fn read_history(path: &Path, spec: &ExperimentSpec, summary: &RunSummary) -> Result<RunHistory> {
    let problem = spec.run.problem.build()?;
    let (d, m) = (problem.dim(), problem.n_objectives());
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => Error::Data(format!("{k:?}")),
    })?;
    let mut evaluations = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Data(format!("bad cell {i} in history.csv")))
        };
        let index = num(0)? as usize;
        let iteration = num(1)? as usize;
        let design = Design((0..d).map(|i| num(2 + i)).collect::<Result<_>>()?);
        let objectives = ObjectiveVector((0..m).map(|j| num(2 + d + j)).collect::<Result<_>>()?);
        evaluations.push(crate::algorithm::Evaluation { index, iteration, design, objectives });
    }
    Ok(RunHistory {
        q: spec.run.q,
        initial_doe_size: spec.run.initial_doe_size,
        evaluations,
        iterations: summary.iterations.clone(),
        status: crate::algorithm::RunStatus::BudgetExhausted,
        final_line_uncertainty: summary.final_line_uncertainty,
    })
}

/// Criterion surface at the last selection step: over the batch coordinates
/// when `q·d ≤ 2`, otherwise the single-point mEI over designs when `d ≤ 2`.
fn criterion_grid(config: &RunConfig, problem: &dyn Problem, history: &RunHistory, n: usize) -> Result<Option<Vec<u8>>> {
    let d = problem.dim();
    let Some(last) = history.iterations.last() else { return Ok(None) };
    if d > 2 || n < 2 {
        return Ok(None);
    }
    let before: Vec<_> = history.evaluations.iter().filter(|e| e.iteration < last.iteration).cloned().collect();
    let models = fit_models(config, problem, &before, last.iteration - 1)?;
    let r = &last.reference;
    let domain = problem.domain();
    let batch_mode = config.q > 1 && config.q * d <= 2;
    let axes = if batch_mode { config.q * d } else { d };
    let coord = |k: usize, i: usize| {
        let a = k % d;
        domain.lower()[a] + (domain.upper()[a] - domain.lower()[a]) * i as f64 / (n - 1) as f64
    };
    let sampler = McSampler::new(config.n_mc, problem.n_objectives(), config.q, mix64(config.mc_seed(), 2 * last.iteration as u64 + 1));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = if batch_mode {
        (1..=config.q).flat_map(|b| (1..=d).map(move |a| format!("x{a}_{b}"))).collect()
    } else {
        (1..=d).map(|a| format!("x{a}")).collect()
    };
    header.push("criterion".into());
    header.push("criterion_name".into());
    w.write_record(&header).map_err(csv_err)?;
    let name = if batch_mode { config.criterion.name() } else { Criterion::Mei.name() };
    let total = n.pow(axes as u32);
    for flat in 0..total {
        let idx: Vec<usize> = (0..axes).map(|k| flat / n.pow(k as u32) % n).collect();
        let coords: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| coord(k, i)).collect();
        let value = if batch_mode {
            let batch: Vec<Design> = coords.chunks(d).map(|c| Design(c.to_vec())).collect();
            let est = if config.criterion == Criterion::MqEi {
                sampler.mqei(&models, &batch, r)?
            } else {
                sampler.qmei(&models, &batch, r)?
            };
            est.value
        } else {
            mei(&models, &coords, r)?
        };
        let mut row: Vec<String> = coords.iter().map(|v| v.to_string()).collect();
        row.push(value.to_string());
        row.push(name.into());
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(Some(w.into_inner().map_err(|e| Error::Io(e.into_error()))?))
}
