//! Finite probability distributions as points of the positive orthant, their
//! Fisher-type metric, and Markov kernels between finite sets (identities,
//! composition, coarse-graining by partitions).

use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cones::ConeSpec;
use crate::hessian_geometry::{ConnectionMode, GeometryError, HessianStructure};

/// Tolerance on stored distributions and kernel rows.
pub const STRICT_TOL: f64 = 1e-12;
/// Tolerance accepted on ingestion before exact renormalization.
pub const INGEST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("distribution has entries on the simplex boundary")]
    BoundaryDistribution,
    #[error("tangent vector does not sum to zero (sum {0:e})")]
    TangencyViolation(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl StatError {
    pub fn code(&self) -> &'static str {
        match self {
            StatError::BoundaryDistribution => "boundary_distribution",
            StatError::TangencyViolation(_) => "tangency_violation",
            StatError::DimensionMismatch { .. } => "dimension_mismatch",
            StatError::InvalidDistribution(_) => "invalid_distribution",
            StatError::InvalidKernel(_) => "invalid_kernel",
            StatError::InvalidPartition(_) => "invalid_partition",
            StatError::Parse(_) => "parse_error",
            StatError::Geometry(e) => e.code(),
        }
    }
}

fn check_probability_row(row: &[f64], tol: f64) -> Result<(), String> {
    if row.is_empty() {
        return Err("empty".into());
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < -tol || **v > 1.0 + tol) {
        return Err(format!("entry {v} outside [0, 1]"));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(format!("entries sum to {s}"));
    }
    Ok(())
}

/// Clamps tiny negatives and divides by the sum; returns the largest change.
fn renormalize(row: &mut [f64]) -> f64 {
    let before = row.to_vec();
    for v in row.iter_mut() {
        *v = v.max(0.0);
    }
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
    before
        .iter()
        .zip(row.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// A probability vector on `{0, …, n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDistribution {
    p: Vec<f64>,
}

impl TryFrom<Vec<f64>> for FiniteDistribution {
    type Error = StatError;
    fn try_from(p: Vec<f64>) -> Result<Self, StatError> {
        FiniteDistribution::new(p)
    }
}

impl From<FiniteDistribution> for Vec<f64> {
    fn from(d: FiniteDistribution) -> Self {
        d.p
    }
}

/// A value read from external data with the renormalization applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub value: T,
    pub renormalization: f64,
}

impl FiniteDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self, StatError> {
        check_probability_row(&p, STRICT_TOL).map_err(StatError::InvalidDistribution)?;
        if p.iter().any(|&v| v < 0.0) {
            return Err(StatError::InvalidDistribution("negative entry".into()));
        }
        Ok(FiniteDistribution { p })
    }

    pub fn uniform(n: usize) -> Self {
        FiniteDistribution {
            p: vec![1.0 / n as f64; n],
        }
    }

    /// Checks at the ingestion tolerance, then renormalizes exactly.
    pub fn ingest(mut p: Vec<f64>) -> Result<Ingested<Self>, StatError> {
        check_probability_row(&p, INGEST_TOL).map_err(StatError::InvalidDistribution)?;
        let renormalization = renormalize(&mut p);
        Ok(Ingested {
            value: FiniteDistribution::new(p)?,
            renormalization,
        })
    }

    /// CSV with one state per row; the last column holds the probability.
    pub fn from_csv<R: Read>(reader: R) -> Result<Ingested<Self>, StatError> {
        let rows = read_csv_rows(reader)?;
        let p = rows
            .iter()
            .map(|r| r.last().copied().ok_or_else(|| StatError::Parse("empty row".into())))
            .collect::<Result<Vec<f64>, _>>()?;
        FiniteDistribution::ingest(p)
    }

    /// JSON array of probabilities.
    pub fn from_json(text: &str) -> Result<Ingested<Self>, StatError> {
        let p: Vec<f64> = serde_json::from_str(text).map_err(|e| StatError::Parse(e.to_string()))?;
        FiniteDistribution::ingest(p)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn is_interior(&self) -> bool {
        self.p.iter().all(|&v| v > 0.0 && v < 1.0)
    }

    pub fn sum_error(&self) -> f64 {
        (self.p.iter().sum::<f64>() - 1.0).abs()
    }

    pub fn max_abs_diff(&self, other: &FiniteDistribution) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Normalization of the simplex metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherNormalization {
    /// `Σ u v / p²`, the orthant Hessian metric restricted to the simplex.
    #[default]
    OrthantHessian,
    /// `Σ u v / p`, the classical Fisher–Rao form.
    Classical,
}

/// `scale · p` as a point of the positive orthant.
pub fn simplex_to_cone(d: &FiniteDistribution, scale: f64) -> Result<Vec<f64>, StatError> {
    if !d.is_interior() && d.len() > 1 {
        return Err(StatError::BoundaryDistribution);
    }
    Ok(d.p.iter().map(|v| v * scale).collect())
}

fn check_tangent(n: usize, u: &[f64]) -> Result<(), StatError> {
    if u.len() != n {
        return Err(StatError::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    let s: f64 = u.iter().sum();
    let scale: f64 = u.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if s.abs() > STRICT_TOL * scale {
        return Err(StatError::TangencyViolation(s));
    }
    Ok(())
}

pub fn fisher_metric(
    d: &FiniteDistribution,
    u: &[f64],
    v: &[f64],
    norm: FisherNormalization,
) -> Result<f64, StatError> {
    if !d.is_interior() {
        return Err(StatError::BoundaryDistribution);
    }
    check_tangent(d.len(), u)?;
    check_tangent(d.len(), v)?;
    Ok(d.p
        .iter()
        .zip(u.iter().zip(v))
        .map(|(&p, (&a, &b))| match norm {
            FisherNormalization::OrthantHessian => a * b / (p * p),
            FisherNormalization::Classical => a * b / p,
        })
        .sum())
}

/// Row-stochastic matrix; row `i` is the law of the target given source `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    m: DMatrix<f64>,
}

impl Serialize for MarkovKernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MarkovKernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        MarkovKernel::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl MarkovKernel {
    pub fn new(m: DMatrix<f64>) -> Result<Self, StatError> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(StatError::InvalidKernel("empty".into()));
        }
        for i in 0..m.nrows() {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            check_probability_row(&row, STRICT_TOL)
                .map_err(|e| StatError::InvalidKernel(format!("row {i}: {e}")))?;
            if row.iter().any(|&v| v < 0.0) {
                return Err(StatError::InvalidKernel(format!("row {i}: negative entry")));
            }
        }
        Ok(MarkovKernel { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, StatError> {
        let n2 = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n2) {
            return Err(StatError::InvalidKernel("ragged rows".into()));
        }
        MarkovKernel::new(DMatrix::from_fn(rows.len(), n2, |i, j| rows[i][j]))
    }

    /// Rows checked at the ingestion tolerance, each renormalized exactly.
    pub fn ingest(mut rows: Vec<Vec<f64>>) -> Result<Ingested<Self>, StatError> {
        let mut worst: f64 = 0.0;
        for (i, r) in rows.iter_mut().enumerate() {
            check_probability_row(r, INGEST_TOL)
                .map_err(|e| StatError::InvalidKernel(format!("row {i}: {e}")))?;
            worst = worst.max(renormalize(r));
        }
        Ok(Ingested {
            value: MarkovKernel::from_rows(&rows)?,
            renormalization: worst,
        })
    }

    /// CSV with one source state per row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Ingested<Self>, StatError> {
        MarkovKernel::ingest(read_csv_rows(reader)?)
    }

    pub fn from_json(text: &str) -> Result<Ingested<Self>, StatError> {
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(text).map_err(|e| StatError::Parse(e.to_string()))?;
        MarkovKernel::ingest(rows)
    }

    pub fn identity(n: usize) -> Self {
        MarkovKernel {
            m: DMatrix::identity(n, n),
        }
    }

    /// Deterministic kernel sending state `i` to `map[i]`.
    pub fn deterministic(targets: usize, map: &[usize]) -> Result<Self, StatError> {
        if let Some(&bad) = map.iter().find(|&&j| j >= targets) {
            return Err(StatError::InvalidKernel(format!("target {bad} out of range")));
        }
        Ok(MarkovKernel {
            m: DMatrix::from_fn(map.len(), targets, |i, j| if map[i] == j { 1.0 } else { 0.0 }),
        })
    }

    /// Rows drawn uniformly from the simplex (normalized exponentials).
    pub fn random<R: rand::Rng + ?Sized>(n1: usize, n2: usize, rng: &mut R) -> Self {
        let mut m = DMatrix::zeros(n1, n2);
        for i in 0..n1 {
            let w: Vec<f64> = (0..n2).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = w.iter().sum();
            for j in 0..n2 {
                m[(i, j)] = w[j] / s;
            }
        }
        MarkovKernel { m }
    }

    pub fn sources(&self) -> usize {
        self.m.nrows()
    }

    pub fn targets(&self) -> usize {
        self.m.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.m.nrows())
            .map(|i| self.m.row(i).iter().copied().collect())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &MarkovKernel) -> f64 {
        (&self.m - &other.m).amax()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.m.nrows())
            .map(|i| (self.m.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `q_j = Σ_i p_i Π_ij`.
pub fn markov_apply(k: &MarkovKernel, d: &FiniteDistribution) -> Result<FiniteDistribution, StatError> {
    if k.sources() != d.len() {
        return Err(StatError::DimensionMismatch {
            expected: k.sources(),
            got: d.len(),
        });
    }
    let q = (0..k.targets())
        .map(|j| {
            let mut s = 0.0;
            for i in 0..d.len() {
                s += d.p[i] * k.m[(i, j)];
            }
            s
        })
        .collect();
    Ok(FiniteDistribution { p: q })
}

pub fn markov_compose(k1: &MarkovKernel, k2: &MarkovKernel) -> Result<MarkovKernel, StatError> {
    if k1.targets() != k2.sources() {
        return Err(StatError::DimensionMismatch {
            expected: k1.targets(),
            got: k2.sources(),
        });
    }
    Ok(MarkovKernel { m: &k1.m * &k2.m })
}

/// Partition of `{0, …, n−1}`; its unions form the generated algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSigmaAlgebra {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl PartitionSigmaAlgebra {
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self, StatError> {
        let mut seen = vec![false; n];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(StatError::InvalidPartition("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x >= n {
                    return Err(StatError::InvalidPartition(format!("{x} outside ground set")));
                }
                if seen[x] {
                    return Err(StatError::InvalidPartition(format!("{x} in two blocks")));
                }
                seen[x] = true;
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(StatError::InvalidPartition(format!("{x} not covered")));
        }
        Ok(PartitionSigmaAlgebra { n, blocks })
    }

    pub fn singletons(n: usize) -> Self {
        PartitionSigmaAlgebra {
            n,
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Whether `set` is a union of blocks.
    pub fn contains(&self, set: &[usize]) -> bool {
        let mut mark = vec![false; self.n];
        for &x in set {
            if x >= self.n {
                return false;
            }
            mark[x] = true;
        }
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&x| mark[x]) || b.iter().all(|&x| !mark[x]))
    }

    /// The 0/1 kernel sending each point to its block.
    pub fn indicator_kernel(&self) -> MarkovKernel {
        let mut map = vec![0; self.n];
        for (bi, b) in self.blocks.iter().enumerate() {
            for &x in b {
                map[x] = bi;
            }
        }
        MarkovKernel::deterministic(self.blocks.len(), &map).expect("blocks index targets")
    }
}

/// Block masses in block order.
pub fn coarse_grain(
    d: &FiniteDistribution,
    s: &PartitionSigmaAlgebra,
) -> Result<FiniteDistribution, StatError> {
    if d.len() != s.n {
        return Err(StatError::DimensionMismatch {
            expected: s.n,
            got: d.len(),
        });
    }
    let q = s
        .blocks
        .iter()
        .map(|b| {
            let mut acc = 0.0;
            for &x in b {
                acc += d.p[x];
            }
            acc
        })
        .collect();
    Ok(FiniteDistribution { p: q })
}

/// Outcome of following the flat geodesic between two distributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub path: Vec<Vec<f64>>,
    pub max_sum_error: f64,
    pub min_entry: f64,
    pub max_line_deviation: f64,
}

/// Integrates the zero-Christoffel geodesic from `d0` with velocity
/// `d1 − d0` over `t ∈ [0, 1]` on the orthant and measures how well it stays
/// on the segment inside the simplex.
pub fn simplex_geodesic(
    d0: &FiniteDistribution,
    d1: &FiniteDistribution,
    steps: usize,
) -> Result<SegmentReport, StatError> {
    if d0.len() != d1.len() {
        return Err(StatError::DimensionMismatch {
            expected: d0.len(),
            got: d1.len(),
        });
    }
    let n = d0.len();
    let x0 = simplex_to_cone(d0, 1.0)?;
    let x1 = simplex_to_cone(d1, 1.0)?;
    let v: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
    let h = HessianStructure::from_cone(&ConeSpec::Orthant(n))?;
    let path = h.geodesic_shoot(&x0, &v, 1.0, steps, ConnectionMode::ZeroGamma)?;
    let mut max_sum_error: f64 = 0.0;
    let mut min_entry = f64::INFINITY;
    let mut max_line_deviation: f64 = 0.0;
    for (k, x) in path.iter().enumerate() {
        let t = k as f64 / steps.max(1) as f64;
        max_sum_error = max_sum_error.max((x.iter().sum::<f64>() - 1.0).abs());
        min_entry = x.iter().copied().fold(min_entry, f64::min);
        for i in 0..n {
            max_line_deviation = max_line_deviation.max((x[i] - (x0[i] + t * v[i])).abs());
        }
    }
    Ok(SegmentReport {
        path,
        max_sum_error,
        min_entry,
        max_line_deviation,
    })
}

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>, StatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| StatError::Parse(e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(r) if !r.is_empty() => rows.push(r),
            Ok(_) => {}
            // a non-numeric first row is a header
            Err(_) if rows.is_empty() => {}
            Err(e) => return Err(StatError::Parse(e.to_string())),
        }
    }
    Ok(rows)
}
