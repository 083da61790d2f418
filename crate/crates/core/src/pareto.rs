//! Objective-space primitives: Pareto dominance, empirical fronts,
//! hypervolume, Ideal/Nadir bounds and broken-line geometry.

use std::cmp::Ordering;
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::stream;

/// A point of the input domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Design(pub Vec<f64>);

/// A point of the objective space (all objectives are minimized).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(pub Vec<f64>);

macro_rules! vector_newtype {
    ($name:ident) => {
        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }

        impl<const N: usize> From<[f64; N]> for $name {
            fn from(v: [f64; N]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

vector_newtype!(Design);
vector_newtype!(ObjectiveVector);

impl ObjectiveVector {
    /// Builds a vector, rejecting non-finite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::Data(format!("non-finite objective vector {values:?}")))
        }
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::EmptySet("box domain"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Config(format!("box bounds must satisfy lower < upper: {lower:?} {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    /// The unit hypercube `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        Self { lower: vec![0.0; d], upper: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of `[0, 1]^d` into the box.
    pub fn from_unit(&self, u: &[f64]) -> Design {
        Design(u.iter().zip(self.lower.iter().zip(&self.upper)).map(|(t, (l, h))| l + t * (h - l)).collect())
    }
}

/// Strict Pareto dominance: `a` is no worse everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_dim(a.len(), b.len())?;
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Weak dominance `a ≤ b` componentwise.
pub(crate) fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Indices of the non-dominated points, in input order. Among exact
/// duplicates only the first occurrence is kept.
pub fn pareto_indices<P: Deref<Target = [f64]>>(points: &[P]) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    if points[0].len() == 2 {
        return pareto_indices_2d(points);
    }
    (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(j, p)| {
                dominates_unchecked(p, &points[i]) || (j < i && p[..] == points[i][..])
            })
        })
        .collect()
}

fn pareto_indices_2d<P: Deref<Target = [f64]>>(points: &[P]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1])).then(a.cmp(&b))
    });
    // Exact duplicates sort by input index, so only the first one passes the
    // strict test below.
    let mut keep = Vec::new();
    let mut best_f2 = f64::INFINITY;
    for &i in &order {
        if points[i][1] < best_f2 {
            best_f2 = points[i][1];
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}

/// The non-dominated subset of a set of evaluated objective vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFront {
    pub points: Vec<ObjectiveVector>,
    /// Designs that produced `points`, parallel to it. Empty when the front
    /// was extracted from bare objective vectors.
    pub source_designs: Vec<Design>,
}

impl EmpiricalFront {
    /// Extracts the front of `points`.
    pub fn extract(points: &[ObjectiveVector]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet("objective vectors"));
        }
        let m = points[0].len();
        for p in points {
            check_dim(m, p.len())?;
        }
        let idx = pareto_indices(points);
        Ok(Self { points: idx.iter().map(|&i| points[i].clone()).collect(), source_designs: Vec::new() })
    }

    /// Extracts the front of an evaluation record, keeping the designs.
    pub fn from_evaluations(designs: &[Design], objectives: &[ObjectiveVector]) -> Result<Self> {
        check_dim(designs.len(), objectives.len())?;
        let mut front = Self::extract(objectives)?;
        let idx = pareto_indices(objectives);
        front.source_designs = idx.iter().map(|&i| designs[i].clone()).collect();
        Ok(front)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when some front point strictly dominates `y`.
    pub fn dominates_point(&self, y: &[f64]) -> bool {
        self.points.iter().any(|p| dominates_unchecked(p, y))
    }

    /// True when `y` strictly dominates some front point.
    pub fn dominated_by(&self, y: &[f64]) -> bool {
        self.points.iter().any(|p| dominates_unchecked(y, p))
    }
}

/// Shorthand for [`EmpiricalFront::extract`].
pub fn extract_front(points: &[ObjectiveVector]) -> Result<EmpiricalFront> {
    EmpiricalFront::extract(points)
}

/// Number of samples used by the Monte-Carlo hypervolume for `m > 2`.
pub const HV_MC_SAMPLES: usize = 1_000_000;
const HV_MC_SEED: u64 = 0x4856_4d43;

/// Volume of the union of boxes `[y, ref]` over the front points.
///
/// Points that do not strictly dominate `reference` in every coordinate
/// contribute nothing. Exact sweep for two objectives, Monte-Carlo otherwise.
pub fn hypervolume(front: &EmpiricalFront, reference: &[f64]) -> f64 {
    hypervolume_of(&front.points, reference)
}

pub(crate) fn hypervolume_of<P: Deref<Target = [f64]>>(points: &[P], reference: &[f64]) -> f64 {
    let inside: Vec<&[f64]> =
        points.iter().map(|p| &p[..]).filter(|p| p.iter().zip(reference).all(|(y, r)| y < r)).collect();
    if inside.is_empty() {
        return 0.0;
    }
    match reference.len() {
        1 => inside.iter().map(|p| reference[0] - p[0]).fold(0.0, f64::max),
        2 => hypervolume_2d(&inside, reference),
        _ => hypervolume_mc(&inside, reference, HV_MC_SAMPLES, HV_MC_SEED),
    }
}

fn hypervolume_2d(points: &[&[f64]], reference: &[f64]) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut level = reference[1];
    for p in sorted {
        if p[1] < level {
            area += (reference[0] - p[0]) * (level - p[1]);
            level = p[1];
        }
    }
    area
}

fn hypervolume_mc(points: &[&[f64]], reference: &[f64], n: usize, seed: u64) -> f64 {
    let m = reference.len();
    let lo: Vec<f64> = (0..m).map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
    let box_volume: f64 = lo.iter().zip(reference).map(|(l, r)| r - l).product();
    let mut rng = stream(seed, 0);
    let mut z = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..n {
        for j in 0..m {
            z[j] = lo[j] + rng.random::<f64>() * (reference[j] - lo[j]);
        }
        if points.iter().any(|p| weakly_dominates(p, &z)) {
            hits += 1;
        }
    }
    box_volume * hits as f64 / n as f64
}

/// Componentwise minimum (Ideal) and maximum (Nadir) of the front.
pub fn ideal_nadir(front: &EmpiricalFront) -> Result<(ObjectiveVector, ObjectiveVector)> {
    bounds_of(&front.points)
}

pub(crate) fn bounds_of<P: Deref<Target = [f64]>>(points: &[P]) -> Result<(ObjectiveVector, ObjectiveVector)> {
    let first = points.first().ok_or(Error::EmptySet("front"))?;
    let mut ideal = first.to_vec();
    let mut nadir = first.to_vec();
    for p in &points[1..] {
        check_dim(ideal.len(), p.len())?;
        for (j, v) in p.iter().enumerate() {
            ideal[j] = ideal[j].min(*v);
            nadir[j] = nadir[j].max(*v);
        }
    }
    Ok((ObjectiveVector(ideal), ObjectiveVector(nadir)))
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A polyline in objective space, parameterized by arc length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrokenLine {
    vertices: Vec<ObjectiveVector>,
    cumulative: Vec<f64>,
}

impl BrokenLine {
    /// Builds a line through `vertices`, dropping consecutive duplicates.
    pub fn new(vertices: Vec<ObjectiveVector>) -> Result<Self> {
        let m = vertices.first().ok_or(Error::EmptySet("line vertices"))?.len();
        let mut kept: Vec<ObjectiveVector> = Vec::with_capacity(vertices.len());
        for v in vertices {
            check_dim(m, v.len())?;
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Geometry("non-finite line vertex".into()));
            }
            if kept.last().is_none_or(|last| last[..] != v[..]) {
                kept.push(v);
            }
        }
        if kept.len() < 2 {
            return Err(Error::Geometry("broken line needs two distinct vertices".into()));
        }
        let mut cumulative = vec![0.0];
        for w in kept.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + distance(&w[0], &w[1]));
        }
        Ok(Self { vertices: kept, cumulative })
    }

    pub fn segment(a: ObjectiveVector, b: ObjectiveVector) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn vertices(&self) -> &[ObjectiveVector] {
        &self.vertices
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arc length at which each vertex sits.
    pub fn vertex_arc_lengths(&self) -> &[f64] {
        &self.cumulative
    }

    /// The point at arc length `s` (clamped to `[0, length]`).
    pub fn point_at(&self, s: f64) -> ObjectiveVector {
        let s = s.clamp(0.0, self.length());
        let k = match self.cumulative[1..].iter().position(|c| s <= *c) {
            Some(k) => k,
            None => self.vertices.len() - 2,
        };
        let seg_len = self.cumulative[k + 1] - self.cumulative[k];
        let t = if seg_len > 0.0 { (s - self.cumulative[k]) / seg_len } else { 0.0 };
        let (a, b) = (&self.vertices[k], &self.vertices[k + 1]);
        ObjectiveVector(a.iter().zip(b.iter()).map(|(x, y)| x + t * (y - x)).collect())
    }
}

/// Closest point of a line to a target set.
#[derive(Clone, Debug, PartialEq)]
pub struct LineProjection {
    pub point: ObjectiveVector,
    pub arc_length: f64,
    pub distance: f64,
    /// Index of the target achieving the minimum.
    pub target: usize,
}

/// The point of `line` closest (Euclidean) to any of `targets`.
///
/// Computed segment by segment with exact point-to-segment projections.
/// Ties go to the smaller arc length.
pub fn closest_point_on_broken_line<P: Deref<Target = [f64]>>(
    line: &BrokenLine,
    targets: &[P],
) -> Result<LineProjection> {
    if targets.is_empty() {
        return Err(Error::EmptySet("targets"));
    }
    let m = line.vertices[0].len();
    let mut best: Option<(f64, f64, usize)> = None;
    for (k, w) in line.vertices.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let dir: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| y - x).collect();
        let len2: f64 = dir.iter().map(|v| v * v).sum();
        let seg_len = line.cumulative[k + 1] - line.cumulative[k];
        for (ti, t) in targets.iter().enumerate() {
            check_dim(m, t.len())?;
            let proj: f64 = t.iter().zip(a.iter()).zip(&dir).map(|((tv, av), dv)| (tv - av) * dv).sum();
            let u = (proj / len2).clamp(0.0, 1.0);
            let d2: f64 = (0..m).map(|j| (a[j] + u * dir[j] - t[j]).powi(2)).sum();
            let s = line.cumulative[k] + u * seg_len;
            let better = match best {
                None => true,
                Some((bd, bs, _)) => match d2.total_cmp(&bd) {
                    Ordering::Less => true,
                    Ordering::Equal => s < bs,
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((d2, s, ti));
            }
        }
    }
    let (d2, s, target) = best.expect("non-empty targets");
    Ok(LineProjection { point: line.point_at(s), arc_length: s, distance: d2.sqrt(), target })
}
