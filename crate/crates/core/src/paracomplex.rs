//! Paracomplex numbers `x + εy` with `ε² = 1`, matrices over them, adapted
//! coordinates, and the `∂₊∂₋` form of a potential in adapted coordinates.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{eval_derivatives, DiffError, ScalarField};

pub const DEFAULT_INVERT_EPS: f64 = 1e-12;
pub const SELF_ADJOINT_TOL: f64 = 1e-10;
pub const REAL_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParaError {
    #[error("paracomplex number ({x}, {y}) is a zero divisor")]
    NotInvertible { x: f64, y: f64 },
    #[error("matrix is not self-adjoint (deviation {0:e})")]
    NotSelfAdjoint(f64),
    #[error("point {0:?} lies outside the potential's box")]
    Domain(Vec<f64>),
    #[error("{0} depends on the wrong block of adapted coordinates")]
    BlockDependence(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

impl ParaError {
    pub fn code(&self) -> &'static str {
        match self {
            ParaError::NotInvertible { .. } => "not_invertible",
            ParaError::NotSelfAdjoint(_) => "not_self_adjoint",
            ParaError::Domain(_) => "domain_error",
            ParaError::BlockDependence(_) => "precondition_violation",
            ParaError::DimensionMismatch { .. } => "dimension_mismatch",
            ParaError::Diff(e) => e.code(),
        }
    }
}

/// `x + εy`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParacomplexNumber {
    pub x: f64,
    pub y: f64,
}

impl ParacomplexNumber {
    pub const ONE: Self = ParacomplexNumber { x: 1.0, y: 0.0 };
    pub const EPSILON: Self = ParacomplexNumber { x: 0.0, y: 1.0 };
    pub const ZERO: Self = ParacomplexNumber { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        ParacomplexNumber { x, y }
    }

    pub fn real(x: f64) -> Self {
        ParacomplexNumber { x, y: 0.0 }
    }

    /// Rebuilds `a e₊ + b e₋` from its idempotent coefficients.
    pub fn from_split(plus: f64, minus: f64) -> Self {
        ParacomplexNumber {
            x: (plus + minus) / 2.0,
            y: (plus - minus) / 2.0,
        }
    }

    pub fn conj(self) -> Self {
        ParacomplexNumber {
            x: self.x,
            y: -self.y,
        }
    }

    /// `x² − y²`, the multiplicative norm.
    pub fn norm(self) -> f64 {
        self.x * self.x - self.y * self.y
    }

    /// Coefficients on `e± = (1 ± ε)/2`.
    pub fn split(self) -> (f64, f64) {
        (self.x + self.y, self.x - self.y)
    }

    pub fn inverse(self) -> Result<Self, ParaError> {
        self.inverse_with(DEFAULT_INVERT_EPS)
    }

    pub fn inverse_with(self, eps_det: f64) -> Result<Self, ParaError> {
        let d = self.norm();
        if d.abs() < eps_det {
            return Err(ParaError::NotInvertible {
                x: self.x,
                y: self.y,
            });
        }
        Ok(ParacomplexNumber {
            x: self.x / d,
            y: -self.y / d,
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Self {
        ParacomplexNumber {
            x: rng.random_range(-scale..scale),
            y: rng.random_range(-scale..scale),
        }
    }
}

pub fn pc_mul(a: ParacomplexNumber, b: ParacomplexNumber) -> ParacomplexNumber {
    ParacomplexNumber {
        x: a.x * b.x + a.y * b.y,
        y: a.x * b.y + a.y * b.x,
    }
}

pub fn pc_inverse(a: ParacomplexNumber) -> Result<ParacomplexNumber, ParaError> {
    a.inverse()
}

pub fn idempotent_split(a: ParacomplexNumber) -> (f64, f64) {
    a.split()
}

impl Add for ParacomplexNumber {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ParacomplexNumber::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for ParacomplexNumber {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        ParacomplexNumber::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul for ParacomplexNumber {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        pc_mul(self, o)
    }
}

impl Neg for ParacomplexNumber {
    type Output = Self;
    fn neg(self) -> Self {
        ParacomplexNumber::new(-self.x, -self.y)
    }
}

/// Square matrix over the paracomplex numbers, serialized as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParacomplexMatrix {
    rows: Vec<Vec<ParacomplexNumber>>,
}

impl ParacomplexMatrix {
    pub fn new(rows: Vec<Vec<ParacomplexNumber>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        ParacomplexMatrix { rows }
    }

    pub fn identity(n: usize) -> Self {
        ParacomplexMatrix::from_fn(n, |i, j| {
            if i == j {
                ParacomplexNumber::ONE
            } else {
                ParacomplexNumber::ZERO
            }
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> ParacomplexNumber) -> Self {
        ParacomplexMatrix {
            rows: (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect(),
        }
    }

    /// `plus e₊ + minus e₋`.
    pub fn from_split(plus: &DMatrix<f64>, minus: &DMatrix<f64>) -> Self {
        let n = plus.nrows();
        ParacomplexMatrix::from_fn(n, |i, j| {
            ParacomplexNumber::from_split(plus[(i, j)], minus[(i, j)])
        })
    }

    /// The self-adjoint matrix whose `e₊` factor is `plus` (so `e₋` factor is `plusᵀ`).
    pub fn self_adjoint_from_plus(plus: &DMatrix<f64>) -> Self {
        ParacomplexMatrix::from_split(plus, &plus.transpose())
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> ParacomplexNumber {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<ParacomplexNumber>] {
        &self.rows
    }

    /// The real factors `(M₊, M₋)` with `M = M₊e₊ + M₋e₋`.
    pub fn split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let plus = DMatrix::from_fn(n, n, |i, j| self.rows[i][j].split().0);
        let minus = DMatrix::from_fn(n, n, |i, j| self.rows[i][j].split().1);
        (plus, minus)
    }

    pub fn mul(&self, other: &ParacomplexMatrix) -> ParacomplexMatrix {
        let n = self.dim();
        assert_eq!(n, other.dim());
        ParacomplexMatrix::from_fn(n, |i, j| {
            (0..n).fold(ParacomplexNumber::ZERO, |acc, k| {
                acc + self.rows[i][k] * other.rows[k][j]
            })
        })
    }

    pub fn add(&self, other: &ParacomplexMatrix) -> ParacomplexMatrix {
        ParacomplexMatrix::from_fn(self.dim(), |i, j| self.rows[i][j] + other.rows[i][j])
    }

    pub fn scale(&self, c: f64) -> ParacomplexMatrix {
        ParacomplexMatrix::from_fn(self.dim(), |i, j| {
            ParacomplexNumber::real(c) * self.rows[i][j]
        })
    }

    pub fn max_abs_diff(&self, other: &ParacomplexMatrix) -> f64 {
        let mut m: f64 = 0.0;
        for (ra, rb) in self.rows.iter().zip(&other.rows) {
            for (a, b) in ra.iter().zip(rb) {
                m = m.max((a.x - b.x).abs()).max((a.y - b.y).abs());
            }
        }
        m
    }
}

/// Conjugate transpose.
pub fn pcm_adjoint(m: &ParacomplexMatrix) -> ParacomplexMatrix {
    ParacomplexMatrix::from_fn(m.dim(), |i, j| m.rows[j][i].conj())
}

/// Spectrum summary behind a positivity verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub positive: bool,
    /// Eigenvalues of the `e₊` factor as `(re, im)`.
    pub split_spectrum: Vec<(f64, f64)>,
    /// Real eigenvalues `λ` reported as paracomplex `λe₊ + λe₋`.
    pub eigenvalues: Vec<ParacomplexNumber>,
    pub max_imaginary: f64,
}

/// Self-adjoint with all eigenvalues real and positive.
pub fn pcm_positivity(m: &ParacomplexMatrix) -> Result<PositivityReport, ParaError> {
    let dev = m.max_abs_diff(&pcm_adjoint(m));
    if dev > SELF_ADJOINT_TOL {
        return Err(ParaError::NotSelfAdjoint(dev));
    }
    let (plus, _) = m.split();
    Ok(split_positivity(&plus))
}

/// Positivity verdict from the `e₊` factor alone (the `e₋` factor is its transpose).
pub fn split_positivity(plus: &DMatrix<f64>) -> PositivityReport {
    let ev = plus.complex_eigenvalues();
    let mut split_spectrum: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
    split_spectrum.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let max_imaginary = split_spectrum.iter().fold(0.0f64, |m, z| m.max(z.1.abs()));
    let real = max_imaginary < REAL_EIGEN_TOL;
    let positive = real && split_spectrum.iter().all(|z| z.0 > 0.0);
    let eigenvalues = if real {
        split_spectrum
            .iter()
            .map(|z| ParacomplexNumber::from_split(z.0, z.0))
            .collect()
    } else {
        Vec::new()
    };
    PositivityReport {
        positive,
        split_spectrum,
        eigenvalues,
        max_imaginary,
    }
}

/// Random member of the positive set: `P D P⁻¹` with positive diagonal `D`
/// as the `e₊` factor.
pub fn random_positive_plus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let p = DMatrix::from_fn(n, n, |i, j| {
            rng.random_range(-1.0..1.0) + if i == j { 1.5 } else { 0.0 }
        });
        if let Some(pinv) = p.clone().try_inverse() {
            if p.norm() * pinv.norm() < 50.0 {
                let d = DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        rng.random_range(0.2..3.0)
                    } else {
                        0.0
                    }
                });
                return &p * d * pinv;
            }
        }
    }
}

/// Outcome of the random midpoint convexity probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityProbe {
    pub trials: usize,
    pub midpoint_failures: usize,
    pub worst_min_eigen: f64,
}

/// Draws pairs of members and tests whether their midpoint stays in the set.
/// Reports only; no convexity claim is made.
pub fn convexity_probe<R: Rng + ?Sized>(n: usize, trials: usize, rng: &mut R) -> ConvexityProbe {
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let a = random_positive_plus(n, rng);
        let b = random_positive_plus(n, rng);
        let mid = (a + b) * 0.5;
        let r = split_positivity(&mid);
        if !r.positive {
            failures += 1;
        }
        let min_re = r.split_spectrum.iter().fold(f64::INFINITY, |m, z| m.min(z.0));
        worst = worst.min(min_re);
    }
    ConvexityProbe {
        trials,
        midpoint_failures: failures,
        worst_min_eigen: worst,
    }
}

/// Coordinates on `ℭ^m` stored as adapted pairs `(z₊^α, z₋^α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedChart {
    dim: usize,
}

impl AdaptedChart {
    pub fn new(dim: usize) -> Self {
        AdaptedChart { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `z^α = (z₊ + z₋)/2 + ε(z₊ − z₋)/2`.
    pub fn to_paraholomorphic(&self, plus: &[f64], minus: &[f64]) -> Vec<ParacomplexNumber> {
        assert_eq!(plus.len(), self.dim);
        assert_eq!(minus.len(), self.dim);
        plus.iter()
            .zip(minus)
            .map(|(&p, &m)| ParacomplexNumber::from_split(p, m))
            .collect()
    }

    pub fn to_adapted(&self, z: &[ParacomplexNumber]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(z.len(), self.dim);
        z.iter().map(|w| w.split()).unzip()
    }
}

/// A potential in adapted coordinates on a box `U⁺ × U⁻`.
///
/// The field takes `2m` variables: `z₊^1..z₊^m` followed by `z₋^1..z₋^m`.
#[derive(Debug, Clone)]
pub struct ParaPotential {
    m: usize,
    field: ScalarField,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParaPotential {
    pub fn new(m: usize, field: ScalarField, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(field.nvars(), 2 * m);
        assert_eq!(lower.len(), 2 * m);
        assert_eq!(upper.len(), 2 * m);
        assert!(lower.iter().zip(&upper).all(|(l, u)| l < u), "empty box");
        ParaPotential {
            m,
            field,
            lower,
            upper,
        }
    }

    /// The potential on the symmetric box `[-r, r]^{2m}`.
    pub fn on_cube(m: usize, field: ScalarField, r: f64) -> Self {
        ParaPotential::new(m, field, vec![-r; 2 * m], vec![r; 2 * m])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == 2 * self.m
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v > l && v < u)
    }

    pub fn with_field(&self, field: ScalarField) -> Self {
        ParaPotential {
            m: self.m,
            field,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                let pad = 0.05 * (u - l);
                rng.random_range((l + pad)..(u - pad))
            })
            .collect()
    }
}

/// `ω̃_{αβ} = ∂²φ / ∂z₊^α ∂z₋^β`.
pub fn dolbeault_form(phi: &ParaPotential, p: &[f64]) -> Result<DMatrix<f64>, ParaError> {
    if p.len() != 2 * phi.m {
        return Err(ParaError::DimensionMismatch {
            expected: 2 * phi.m,
            got: p.len(),
        });
    }
    if !phi.contains(p) {
        return Err(ParaError::Domain(p.to_vec()));
    }
    let b = eval_derivatives(&phi.field, p, 2)?;
    let m = phi.m;
    Ok(DMatrix::from_fn(m, m, |a, c| b.partial(&[a, m + c])))
}

fn check_block_dependence(
    f: &ScalarField,
    m: usize,
    p: &[f64],
    forbidden: std::ops::Range<usize>,
    name: &'static str,
) -> Result<(), ParaError> {
    let b = eval_derivatives(f, p, 2)?;
    let scale = b.gradient().iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale;
    for k in forbidden.clone() {
        if b.gradient()[k].abs() > tol {
            return Err(ParaError::BlockDependence(name));
        }
        for j in 0..2 * m {
            if b.partial(&[k, j]).abs() > tol {
                return Err(ParaError::BlockDependence(name));
            }
        }
    }
    Ok(())
}

/// Largest Frobenius distance between the forms of `φ` and `φ + f₊ + f₋`.
pub fn gauge_residual(
    phi: &ParaPotential,
    f_plus: &ScalarField,
    f_minus: &ScalarField,
    points: &[Vec<f64>],
) -> Result<f64, ParaError> {
    let m = phi.m;
    for f in [f_plus, f_minus] {
        if f.nvars() != 2 * m {
            return Err(ParaError::DimensionMismatch {
                expected: 2 * m,
                got: f.nvars(),
            });
        }
    }
    let gauged = phi.with_field(phi.field.add(f_plus).add(f_minus));
    let mut worst: f64 = 0.0;
    for p in points {
        if !phi.contains(p) {
            return Err(ParaError::Domain(p.clone()));
        }
        check_block_dependence(f_plus, m, p, m..2 * m, "f_plus")?;
        check_block_dependence(f_minus, m, p, 0..m, "f_minus")?;
        let a = dolbeault_form(phi, p)?;
        let b = dolbeault_form(&gauged, p)?;
        worst = worst.max((a - b).norm());
    }
    Ok(worst)
}
