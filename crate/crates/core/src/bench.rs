//! Test problems with reference Pareto sets, and an NSGA-II baseline.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithm::{Evaluation, RunHistory, RunStatus};
use crate::error::{check_dim, Error, Result};
use crate::pareto::{pareto_indices, weakly_dominates, BoxDomain, Design, ObjectiveVector};
use crate::rng::stream;
use crate::search::lhs;

/// A deterministic multi-objective test problem on a box.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn domain(&self) -> &BoxDomain;
    fn n_objectives(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector>;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    /// Dense sampling of the Pareto set and front.
    fn pareto_oracle(&self, resolution: usize) -> Result<ParetoOracle> {
        let _ = resolution;
        Err(Error::Capability(format!("no Pareto oracle for {}", self.name())))
    }
}

/// Dense sampling of a Pareto set (`designs`) and its image (`objectives`).
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoOracle {
    pub designs: Vec<Design>,
    pub objectives: Vec<ObjectiveVector>,
}

impl ParetoOracle {
    fn from_candidates(designs: Vec<Design>, objectives: Vec<ObjectiveVector>) -> Self {
        let keep = pareto_indices(&objectives);
        Self {
            designs: keep.iter().map(|&i| designs[i].clone()).collect(),
            objectives: keep.iter().map(|&i| objectives[i].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    /// The part of the oracle whose images weakly dominate `r`.
    pub fn targeted(&self, r: &[f64]) -> ParetoOracle {
        let (designs, objectives) = self
            .designs
            .iter()
            .zip(&self.objectives)
            .filter(|(_, y)| weakly_dominates(y, r))
            .map(|(x, y)| (x.clone(), y.clone()))
            .unzip();
        ParetoOracle { designs, objectives }
    }

    /// CSV with columns `x1..xd, f1..fm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.designs.first().map_or(0, |x| x.len());
        let m = self.objectives.first().map_or(0, |y| y.len());
        let header: Vec<String> =
            (1..=d).map(|i| format!("x{i}")).chain((1..=m).map(|j| format!("f{j}"))).collect();
        w.write_record(&header).map_err(csv_err)?;
        for (x, y) in self.designs.iter().zip(&self.objectives) {
            w.write_record(x.iter().chain(y.iter()).map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Two quadratics in one variable with Pareto set `[0.2, 0.9]`.
#[derive(Clone, Debug)]
pub struct QuadraticPair {
    domain: BoxDomain,
}

pub fn quadratic_pair() -> QuadraticPair {
    QuadraticPair { domain: BoxDomain::unit(1) }
}

impl QuadraticPair {
    pub fn f1(x: f64) -> f64 {
        0.6 * x * x - 0.24 * x + 0.1
    }

    pub fn f2(x: f64) -> f64 {
        x * x - 1.8 * x + 1.0
    }

    /// The interval of `x` whose image weakly dominates `r`, by root solving.
    pub fn domination_interval(r: &[f64]) -> Option<(f64, f64)> {
        // 0.6x² − 0.24x + (0.1 − r1) ≤ 0 and x² − 1.8x + (1 − r2) ≤ 0
        let roots = |a: f64, b: f64, c: f64| {
            let disc = b * b - 4.0 * a * c;
            (disc >= 0.0).then(|| ((-b - disc.sqrt()) / (2.0 * a), (-b + disc.sqrt()) / (2.0 * a)))
        };
        let (l1, u1) = roots(0.6, -0.24, 0.1 - r[0])?;
        let (l2, u2) = roots(1.0, -1.8, 1.0 - r[1])?;
        let lo = l1.max(l2).max(0.0);
        let hi = u1.min(u2).min(1.0);
        (lo <= hi).then_some((lo, hi))
    }
}

impl Problem for QuadraticPair {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn n_objectives(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        check_dim(1, x.len())?;
        Ok(ObjectiveVector(vec![Self::f1(x[0]), Self::f2(x[0])]))
    }

    fn pareto_oracle(&self, resolution: usize) -> Result<ParetoOracle> {
        let n = resolution.max(2);
        let designs: Vec<Design> = (0..n).map(|i| Design(vec![0.2 + 0.7 * i as f64 / (n - 1) as f64])).collect();
        let objectives = designs.iter().map(|x| self.evaluate(x)).collect::<Result<Vec<_>>>()?;
        Ok(ParetoOracle { designs, objectives })
    }
}

/// ZDT3 in `d` dimensions; its front has five disconnected pieces at `g = 1`.
#[derive(Clone, Debug)]
pub struct Zdt3 {
    domain: BoxDomain,
    name: String,
}

pub fn zdt3(d: usize) -> Result<Zdt3> {
    if d < 2 {
        return Err(Error::Config("ZDT3 needs at least two variables".into()));
    }
    Ok(Zdt3 { domain: BoxDomain::unit(d), name: format!("zdt3-{d}") })
}

impl Zdt3 {
    pub fn objectives(x: &[f64]) -> [f64; 2] {
        let d = x.len();
        let f1 = x[0];
        let g = 1.0 + 9.0 / (d - 1) as f64 * x[1..].iter().sum::<f64>();
        let h = 1.0 - (f1 / g).sqrt() - f1 / g * (10.0 * PI * f1).sin();
        [f1, g * h]
    }
}

impl Problem for Zdt3 {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn n_objectives(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        check_dim(self.dim(), x.len())?;
        Ok(ObjectiveVector(Self::objectives(x).to_vec()))
    }

    fn pareto_oracle(&self, resolution: usize) -> Result<ParetoOracle> {
        let n = 20 * resolution.max(1);
        let d = self.dim();
        let designs: Vec<Design> = (0..=n)
            .map(|i| {
                let mut x = vec![0.0; d];
                x[0] = i as f64 / n as f64;
                Design(x)
            })
            .collect();
        let objectives = designs.iter().map(|x| self.evaluate(x)).collect::<Result<Vec<_>>>()?;
        Ok(ParetoOracle::from_candidates(designs, objectives))
    }
}

/// The bi-objective P1 problem on `[0,1]²`, built from the Branin function.
#[derive(Clone, Debug)]
pub struct P1 {
    domain: BoxDomain,
}

pub fn p1() -> P1 {
    P1 { domain: BoxDomain::unit(2) }
}

impl P1 {
    pub fn objectives(x: &[f64]) -> [f64; 2] {
        let b1 = 15.0 * x[0] - 5.0;
        let b2 = 15.0 * x[1];
        let bowl = (1.0 - 1.0 / (8.0 * PI)) * b1.cos() + 1.0;
        let f1 = (b2 - 5.1 * (b1 / (2.0 * PI)).powi(2) + 5.0 / PI * b1 - 6.0).powi(2) + 10.0 * bowl;
        let f2 = -((10.5 - b1) * (b1 + 5.5) * (b2 + 0.5)).sqrt()
            - (b2 - 5.1 * (b1 / (2.0 * PI)).powi(2) - 6.0).powi(2) / 30.0
            - bowl / 3.0;
        [f1, f2]
    }
}

impl Problem for P1 {
    fn name(&self) -> &str {
        "p1"
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn n_objectives(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Result<ObjectiveVector> {
        check_dim(2, x.len())?;
        Ok(ObjectiveVector(Self::objectives(x).to_vec()))
    }

    /// Non-dominated filter over a `resolution × resolution` grid, then two
    /// rounds of local refinement around the surviving points.
    fn pareto_oracle(&self, resolution: usize) -> Result<ParetoOracle> {
        let n = resolution.max(2);
        let mut designs = Vec::with_capacity(n * n);
        let mut objectives = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64];
                designs.push(Design(x.to_vec()));
                objectives.push(ObjectiveVector(Self::objectives(&x).to_vec()));
            }
        }
        let mut oracle = ParetoOracle::from_candidates(designs, objectives);
        let mut h = 1.0 / (n - 1) as f64;
        for _ in 0..2 {
            let mut designs = oracle.designs.clone();
            let mut objectives = oracle.objectives.clone();
            for x in &oracle.designs {
                for a in -3i32..=3 {
                    for b in -3i32..=3 {
                        let z = [
                            (x[0] + a as f64 * h / 3.0).clamp(0.0, 1.0),
                            (x[1] + b as f64 * h / 3.0).clamp(0.0, 1.0),
                        ];
                        designs.push(Design(z.to_vec()));
                        objectives.push(ObjectiveVector(Self::objectives(&z).to_vec()));
                    }
                }
            }
            oracle = ParetoOracle::from_candidates(designs, objectives);
            h /= 3.0;
        }
        Ok(oracle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    Zdt3,
    P1,
}

/// Problem selection in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Input dimension (ZDT3 only; defaults to 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        match self.kind {
            ProblemKind::Quadratic => Ok(Box::new(quadratic_pair())),
            ProblemKind::Zdt3 => Ok(Box::new(zdt3(self.dim.unwrap_or(4))?)),
            ProblemKind::P1 => Ok(Box::new(p1())),
        }
    }
}

/// NSGA-II operator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    /// Per-variable mutation probability; `None` means `1/d`.
    pub mutation_prob: Option<f64>,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self { crossover_prob: 0.9, eta_crossover: 15.0, eta_mutation: 20.0, mutation_prob: None }
    }
}

/// Pareto ranks (1 = non-dominated) by fast non-dominated sorting.
pub fn non_dominated_ranks<P: std::ops::Deref<Target = [f64]>>(points: &[P]) -> Vec<usize> {
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && crate::pareto::dominates_unchecked(&points[i], &points[j]) {
                dominates[i].push(j);
                dominated_by_count[j] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    let mut level = 1;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = level;
            for &j in &dominates[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        current = next;
        level += 1;
    }
    rank
}

/// Crowding distances within one front; boundary points get `+∞`.
pub fn crowding_distance<P: std::ops::Deref<Target = [f64]>>(points: &[P]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let m = points[0].len();
    for j in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| points[a][j].total_cmp(&points[b][j]).then(a.cmp(&b)));
        let (lo, hi) = (points[order[0]][j], points[order[n - 1]][j]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n.saturating_sub(1) {
                dist[order[w]] += (points[order[w + 1]][j] - points[order[w - 1]][j]) / (hi - lo);
            }
        }
    }
    dist
}

fn sbx(p1: &[f64], p2: &[f64], lower: &[f64], upper: &[f64], eta: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        if rng.random::<f64>() > 0.5 || (p1[i] - p2[i]).abs() <= 1e-14 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let (yl, yu) = (lower[i], upper[i]);
        let u: f64 = rng.random();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * (y1 - yl) / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (yu - y2) / (y2 - y1));
        let a = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(yl, yu);
        let b = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(yl, yu);
        if rng.random::<f64>() <= 0.5 {
            c1[i] = b;
            c2[i] = a;
        } else {
            c1[i] = a;
            c2[i] = b;
        }
    }
    (c1, c2)
}

fn polynomial_mutation(x: &mut [f64], lower: &[f64], upper: &[f64], eta: f64, prob: f64, rng: &mut impl Rng) {
    for i in 0..x.len() {
        if rng.random::<f64>() > prob {
            continue;
        }
        let (yl, yu) = (lower[i], upper[i]);
        let y = x[i];
        let d1 = (y - yl) / (yu - yl);
        let d2 = (yu - y) / (yu - yl);
        let u: f64 = rng.random();
        let pow = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        x[i] = (y + dq * (yu - yl)).clamp(yl, yu);
    }
}

/// Rank and crowding for every member of a population.
fn rank_and_crowd(objs: &[ObjectiveVector]) -> (Vec<usize>, Vec<f64>) {
    let ranks = non_dominated_ranks(objs);
    let mut crowd = vec![0.0; objs.len()];
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    for r in 1..=max_rank {
        let members: Vec<usize> = (0..objs.len()).filter(|&i| ranks[i] == r).collect();
        let pts: Vec<&[f64]> = members.iter().map(|&i| &objs[i][..]).collect();
        let cd = crowding_distance(&pts);
        for (k, &i) in members.iter().enumerate() {
            crowd[i] = cd[k];
        }
    }
    (ranks, crowd)
}

/// NSGA-II run returning every evaluation; generation `g` offspring carry
/// iteration `g`, the initial population iteration 0.
pub fn nsga2(problem: &dyn Problem, pop: usize, generations: usize, seed: u64) -> Result<RunHistory> {
    nsga2_with(problem, pop, generations, seed, &Nsga2Config::default())
}

pub fn nsga2_with(
    problem: &dyn Problem,
    pop: usize,
    generations: usize,
    seed: u64,
    config: &Nsga2Config,
) -> Result<RunHistory> {
    if pop < 4 || pop % 2 != 0 {
        return Err(Error::Config("NSGA-II population must be even and at least 4".into()));
    }
    let domain = problem.domain();
    let d = domain.dim();
    let (lower, upper) = (domain.lower().to_vec(), domain.upper().to_vec());
    let pm = config.mutation_prob.unwrap_or(1.0 / d as f64);
    let mut rng = stream(seed, 0x95a);
    let mut evaluations: Vec<Evaluation> = Vec::new();
    let record = |x: Design, iteration: usize, evaluations: &mut Vec<Evaluation>| -> Result<ObjectiveVector> {
        let y = problem.evaluate(&x)?;
        evaluations.push(Evaluation { index: evaluations.len(), iteration, design: x, objectives: y.clone() });
        Ok(y)
    };
    let mut xs: Vec<Design> = lhs(pop, domain, seed);
    let mut ys = xs.iter().map(|x| record(x.clone(), 0, &mut evaluations)).collect::<Result<Vec<_>>>()?;
    for g in 1..=generations {
        let (ranks, crowd) = rank_and_crowd(&ys);
        let better = |a: usize, b: usize| {
            if ranks[a] != ranks[b] {
                ranks[a] < ranks[b]
            } else {
                crowd[a] > crowd[b]
            }
        };
        let tournament = |rng: &mut crate::rng::StreamRng| {
            let a = rng.random_range(0..pop);
            let b = rng.random_range(0..pop);
            if better(b, a) { b } else { a }
        };
        let mut offspring: Vec<Design> = Vec::with_capacity(pop);
        while offspring.len() < pop {
            let (pa, pb) = (tournament(&mut rng), tournament(&mut rng));
            let (mut c1, mut c2) = if rng.random::<f64>() <= config.crossover_prob {
                sbx(&xs[pa], &xs[pb], &lower, &upper, config.eta_crossover, &mut rng)
            } else {
                (xs[pa].0.clone(), xs[pb].0.clone())
            };
            polynomial_mutation(&mut c1, &lower, &upper, config.eta_mutation, pm, &mut rng);
            polynomial_mutation(&mut c2, &lower, &upper, config.eta_mutation, pm, &mut rng);
            offspring.push(Design(c1));
            offspring.push(Design(c2));
        }
        let off_ys = offspring.iter().map(|x| record(x.clone(), g, &mut evaluations)).collect::<Result<Vec<_>>>()?;
        // environmental selection over parents ∪ offspring
        let all_x: Vec<Design> = xs.iter().cloned().chain(offspring).collect();
        let all_y: Vec<ObjectiveVector> = ys.iter().cloned().chain(off_ys).collect();
        let (ranks, crowd) = rank_and_crowd(&all_y);
        let mut order: Vec<usize> = (0..all_x.len()).collect();
        order.sort_by(|&a, &b| ranks[a].cmp(&ranks[b]).then(crowd[b].total_cmp(&crowd[a])).then(a.cmp(&b)));
        order.truncate(pop);
        xs = order.iter().map(|&i| all_x[i].clone()).collect();
        ys = order.iter().map(|&i| all_y[i].clone()).collect();
    }
    Ok(RunHistory {
        q: pop,
        initial_doe_size: pop,
        evaluations,
        iterations: Vec::new(),
        status: RunStatus::BudgetExhausted,
        final_line_uncertainty: None,
    })
}
