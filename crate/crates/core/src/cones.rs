//! Catalog cones: membership, closed-form characteristic functions (up to a
//! constant factor), their log-potentials as differentiable fields, and an
//! importance-sampled Monte Carlo estimate of the defining dual-cone integral.
//!
//! Symmetric and Hermitian matrices are embedded row-major over the upper
//! triangle with off-diagonal real coordinates scaled by `√2`, so the ambient
//! dot product equals the trace pairing `tr(XY)`.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::diffcore::{jet_determinant, Jet, ScalarField};
use crate::paracomplex::{random_positive_plus, split_positivity};

/// Samples per Monte Carlo chunk; each chunk has its own RNG stream.
pub const MC_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("cannot parse cone spec {0:?}")]
    Parse(String),
    #[error("cone dimension must be at least 1 (got {0})")]
    InvalidDimension(usize),
    #[error("dimension mismatch: cone needs {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not in the interior of the cone")]
    NotInCone,
    #[error("no closed-form characteristic function for {0}")]
    ClosedFormUnavailable(String),
    #[error("sample count must be at least 1")]
    NoSamples,
}

impl ConeError {
    pub fn code(&self) -> &'static str {
        match self {
            ConeError::Parse(_) => "parse_error",
            ConeError::InvalidDimension(_) => "invalid_dimension",
            ConeError::DimensionMismatch { .. } => "dimension_mismatch",
            ConeError::NotInCone => "not_in_cone",
            ConeError::ClosedFormUnavailable(_) => "closed_form_unavailable",
            ConeError::NoSamples => "no_samples",
        }
    }
}

/// A cone from the catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeSpec {
    /// Positive orthant of `R^n`.
    Orthant(usize),
    /// Real symmetric positive-definite `n×n` matrices.
    SpdReal(usize),
    /// Complex Hermitian positive-definite `n×n` matrices.
    HermComplex(usize),
    /// Self-adjoint paracomplex `n×n` matrices with positive spectrum,
    /// coordinatized by the real `e₊` factor (row-major, `n²` entries).
    PcPositive(usize),
    Product(Vec<ConeSpec>),
}

impl FromStr for ConeSpec {
    type Err = ConeError;

    fn from_str(s: &str) -> Result<Self, ConeError> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("product:") {
            let factors = rest
                .split(',')
                .map(|f| f.parse::<ConeSpec>())
                .collect::<Result<Vec<_>, _>>()?;
            if factors.is_empty() || factors.iter().any(|f| matches!(f, ConeSpec::Product(_))) {
                return Err(ConeError::Parse(s.to_string()));
            }
            return Ok(ConeSpec::Product(factors));
        }
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| ConeError::Parse(s.to_string()))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| ConeError::Parse(s.to_string()))?;
        if n == 0 {
            return Err(ConeError::InvalidDimension(0));
        }
        match kind.trim() {
            "orthant" => Ok(ConeSpec::Orthant(n)),
            "spd" => Ok(ConeSpec::SpdReal(n)),
            "herm" => Ok(ConeSpec::HermComplex(n)),
            "pcpos" => Ok(ConeSpec::PcPositive(n)),
            _ => Err(ConeError::Parse(s.to_string())),
        }
    }
}

impl fmt::Display for ConeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeSpec::Orthant(n) => write!(f, "orthant:{n}"),
            ConeSpec::SpdReal(n) => write!(f, "spd:{n}"),
            ConeSpec::HermComplex(n) => write!(f, "herm:{n}"),
            ConeSpec::PcPositive(n) => write!(f, "pcpos:{n}"),
            ConeSpec::Product(fs) => {
                write!(f, "product:")?;
                for (i, c) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

/// Characteristic function value, normalized up to a positive constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharFnValue {
    pub value: f64,
    pub log_value: f64,
}

/// Monte Carlo estimate with its sample-mean standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

// ---- embeddings ------------------------------------------------------------

pub fn sym_from_vec(n: usize, u: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let v = if i == j { u[k] } else { u[k] / SQRT_2 };
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    m
}

pub fn sym_to_vec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut u = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            u.push(if i == j { m[(i, j)] } else { SQRT_2 * m[(i, j)] });
        }
    }
    u
}

pub fn herm_from_vec(n: usize, u: &[f64]) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = Complex64::new(u[k], 0.0);
        k += 1;
        for j in (i + 1)..n {
            let z = Complex64::new(u[k] / SQRT_2, u[k + 1] / SQRT_2);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

pub fn herm_to_vec(m: &DMatrix<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    let mut u = Vec::with_capacity(n * n);
    for i in 0..n {
        u.push(m[(i, i)].re);
        for j in (i + 1)..n {
            u.push(SQRT_2 * m[(i, j)].re);
            u.push(SQRT_2 * m[(i, j)].im);
        }
    }
    u
}

/// `[[A, −B], [B, A]]` for `X = A + iB`.
pub fn herm_realified(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn sym_jets(n: usize, u: &[Jet]) -> Vec<Vec<Jet>> {
    let mut m = vec![vec![Jet::constant(0.0); n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let v = if i == j { u[k].clone() } else { u[k].scale(1.0 / SQRT_2) };
            m[i][j] = v.clone();
            m[j][i] = v;
            k += 1;
        }
    }
    m
}

/// Real `2n×2n` symmetric form `[[A, −B], [B, A]]` of `X = A + iB`; its
/// determinant is `det(X)²`.
fn herm_realified_jets(n: usize, u: &[Jet]) -> Vec<Vec<Jet>> {
    let zero = Jet::constant(0.0);
    let mut a = vec![vec![zero.clone(); n]; n];
    let mut b = vec![vec![zero.clone(); n]; n];
    let mut k = 0;
    for i in 0..n {
        a[i][i] = u[k].clone();
        k += 1;
        for j in (i + 1)..n {
            let re = u[k].scale(1.0 / SQRT_2);
            let im = u[k + 1].scale(1.0 / SQRT_2);
            a[i][j] = re.clone();
            a[j][i] = re;
            b[i][j] = im.clone();
            b[j][i] = -im;
            k += 2;
        }
    }
    let mut r = vec![vec![zero; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            r[i][j] = a[i][j].clone();
            r[i + n][j + n] = a[i][j].clone();
            r[i][j + n] = -&b[i][j];
            r[i + n][j] = b[i][j].clone();
        }
    }
    r
}

fn ln_multigamma_real(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * PI.ln()
        + (1..=p)
            .map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0))
            .sum::<f64>()
}

fn ln_multigamma_complex(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 2.0 * PI.ln() + (1..=p).map(|j| ln_gamma(a - j as f64 + 1.0)).sum::<f64>()
}

impl ConeSpec {
    pub fn ambient_dim(&self) -> usize {
        match self {
            ConeSpec::Orthant(n) => *n,
            ConeSpec::SpdReal(n) => n * (n + 1) / 2,
            ConeSpec::HermComplex(n) | ConeSpec::PcPositive(n) => n * n,
            ConeSpec::Product(fs) => fs.iter().map(|f| f.ambient_dim()).sum(),
        }
    }

    /// Degree `d` with `φ(λx) = λ^{−d} φ(x)`; `None` when no closed form is offered.
    pub fn homogeneity_degree(&self) -> Option<usize> {
        match self {
            ConeSpec::Orthant(n) => Some(*n),
            ConeSpec::SpdReal(n) => Some(n * (n + 1) / 2),
            ConeSpec::HermComplex(n) => Some(n * n),
            ConeSpec::PcPositive(1) => Some(1),
            ConeSpec::PcPositive(_) => None,
            ConeSpec::Product(fs) => fs.iter().map(|f| f.homogeneity_degree()).sum(),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        self.homogeneity_degree().is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ConeError> {
        if x.len() != self.ambient_dim() {
            return Err(ConeError::DimensionMismatch {
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn factor_slices<'a>(fs: &'a [ConeSpec], x: &'a [f64]) -> Vec<(&'a ConeSpec, &'a [f64])> {
        let mut out = Vec::with_capacity(fs.len());
        let mut off = 0;
        for f in fs {
            let d = f.ambient_dim();
            out.push((f, &x[off..off + d]));
            off += d;
        }
        out
    }

    fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            ConeSpec::Orthant(_) => x.iter().all(|&v| v > 0.0),
            ConeSpec::SpdReal(n) => Cholesky::new(sym_from_vec(*n, x)).is_some(),
            // complex Cholesky in nalgebra accepts negative pivots, so test the
            // real symmetric form instead
            ConeSpec::HermComplex(n) => Cholesky::new(herm_realified(&herm_from_vec(*n, x))).is_some(),
            ConeSpec::PcPositive(n) => {
                split_positivity(&DMatrix::from_row_slice(*n, *n, x)).positive
            }
            ConeSpec::Product(fs) => Self::factor_slices(fs, x)
                .into_iter()
                .all(|(f, s)| f.contains(s)),
        }
    }

    /// Interior membership.
    pub fn membership(&self, x: &[f64]) -> Result<bool, ConeError> {
        self.check_dim(x)?;
        Ok(self.contains(x))
    }

    fn log_potential_jet(&self, x: &[Jet]) -> Jet {
        match self {
            ConeSpec::Orthant(_) | ConeSpec::PcPositive(_) => -x.iter().map(|v| v.ln()).sum::<Jet>(),
            ConeSpec::SpdReal(n) => {
                let det = jet_determinant(sym_jets(*n, x));
                det.ln().scale(-(*n as f64 + 1.0) / 2.0)
            }
            ConeSpec::HermComplex(n) => {
                let det2 = jet_determinant(herm_realified_jets(*n, x));
                det2.ln().scale(-(*n as f64) / 2.0)
            }
            ConeSpec::Product(fs) => {
                let mut off = 0;
                let mut acc = Jet::constant(0.0);
                for f in fs {
                    let d = f.ambient_dim();
                    acc += f.log_potential_jet(&x[off..off + d]);
                    off += d;
                }
                acc
            }
        }
    }

    /// `ln φ` as a differentiable field on the cone interior.
    pub fn log_potential(&self) -> Result<ScalarField, ConeError> {
        if !self.has_closed_form() {
            return Err(ConeError::ClosedFormUnavailable(self.to_string()));
        }
        let cone = self.clone();
        let dom = self.clone();
        Ok(ScalarField::new(self.ambient_dim(), move |x| cone.log_potential_jet(x))
            .with_domain(move |x| dom.contains(x)))
    }

    pub fn char_fn_closed(&self, x: &[f64]) -> Result<CharFnValue, ConeError> {
        self.check_dim(x)?;
        if !self.has_closed_form() {
            return Err(ConeError::ClosedFormUnavailable(self.to_string()));
        }
        if !self.contains(x) {
            return Err(ConeError::NotInCone);
        }
        let jets: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
        let log_value = self.log_potential_jet(&jets).value();
        Ok(CharFnValue {
            value: log_value.exp(),
            log_value,
        })
    }

    /// A canonical interior point (ones / identity matrices).
    pub fn unit_point(&self) -> Vec<f64> {
        match self {
            ConeSpec::Orthant(n) => vec![1.0; *n],
            ConeSpec::SpdReal(n) => sym_to_vec(&DMatrix::identity(*n, *n)),
            ConeSpec::HermComplex(n) => {
                herm_to_vec(&DMatrix::from_diagonal_element(*n, *n, Complex64::new(1.0, 0.0)))
            }
            ConeSpec::PcPositive(n) => DMatrix::<f64>::identity(*n, *n).as_slice().to_vec(),
            ConeSpec::Product(fs) => fs.iter().flat_map(|f| f.unit_point()).collect(),
        }
    }

    /// A random, reasonably conditioned interior point.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ConeSpec::Orthant(n) => (0..*n).map(|_| rng.random_range(0.2..3.0)).collect(),
            ConeSpec::SpdReal(n) => {
                let a = DMatrix::from_fn(*n, *n, |_, _| rng.random_range(-1.0..1.0));
                let m = &a * a.transpose() / (*n as f64) + DMatrix::identity(*n, *n) * 0.3;
                sym_to_vec(&m)
            }
            ConeSpec::HermComplex(n) => {
                let a = DMatrix::from_fn(*n, *n, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let m = &a * a.adjoint() / Complex64::new(*n as f64, 0.0)
                    + DMatrix::from_diagonal_element(*n, *n, Complex64::new(0.3, 0.0));
                herm_to_vec(&m)
            }
            ConeSpec::PcPositive(1) => vec![rng.random_range(0.2..3.0)],
            ConeSpec::PcPositive(n) => {
                // transpose so the row-major slice reproduces the matrix
                random_positive_plus(*n, rng).transpose().as_slice().to_vec()
            }
            ConeSpec::Product(fs) => fs.iter().flat_map(|f| f.sample_interior(rng)).collect(),
        }
    }

    /// Draws one proposal sample into `out` and returns its log-density with
    /// respect to Lebesgue measure in the embedded coordinates.
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) -> f64 {
        match self {
            ConeSpec::Orthant(_) | ConeSpec::PcPositive(1) => {
                let mut logq = 0.0;
                for (o, &xi) in out.iter_mut().zip(x) {
                    let rate = xi / 2.0;
                    let y: f64 = Exp::new(rate).expect("positive rate").sample(rng);
                    *o = y;
                    logq += rate.ln() - rate * y;
                }
                logq
            }
            ConeSpec::SpdReal(n) => {
                // real Wishart with n + 1 degrees of freedom: density ∝ exp(−tr(XY)/2)
                let n = *n;
                let xm = sym_from_vec(n, x);
                let cov = xm.clone().try_inverse().expect("interior point is invertible");
                let l = Cholesky::new(cov).expect("inverse of SPD is SPD").l();
                let mut y = DMatrix::zeros(n, n);
                for _ in 0..=n {
                    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let z = &l * g;
                    y += &z * z.transpose();
                }
                let u = sym_to_vec(&y);
                out.copy_from_slice(&u);
                let nf = n as f64;
                let m = nf * (nf - 1.0) / 2.0;
                let tr: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
                let ln_det_half = (xm / 2.0).determinant().ln();
                -tr / 2.0 + (nf + 1.0) / 2.0 * ln_det_half
                    - ln_multigamma_real(n, (nf + 1.0) / 2.0)
                    - m / 2.0 * LN_2
            }
            ConeSpec::HermComplex(n) => {
                // complex Wishart with n degrees of freedom, covariance 2X⁻¹
                let n = *n;
                let xm = herm_from_vec(n, x);
                let cov = xm
                    .clone()
                    .try_inverse()
                    .expect("interior point is invertible")
                    * Complex64::new(2.0, 0.0);
                let l = Cholesky::new(cov).expect("inverse of HPD is HPD").l();
                let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
                for _ in 0..n {
                    let w = DVector::from_fn(n, |_, _| {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        Complex64::new(a, b) / SQRT_2
                    });
                    let z = &l * w;
                    y += &z * z.adjoint();
                }
                let u = herm_to_vec(&y);
                out.copy_from_slice(&u);
                let nf = n as f64;
                let m = nf * (nf - 1.0) / 2.0;
                let tr: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
                let ln_det_half = (xm / Complex64::new(2.0, 0.0)).determinant().re.ln();
                -tr / 2.0 + nf * ln_det_half - ln_multigamma_complex(n, nf) - m * LN_2
            }
            ConeSpec::PcPositive(n) => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = *n as f64 / norm;
                let mut logq = 0.0;
                for o in out.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *o = s * g;
                    logq += -0.5 * g * g - (s * (2.0 * PI).sqrt()).ln();
                }
                logq
            }
            ConeSpec::Product(fs) => {
                let mut off = 0;
                let mut logq = 0.0;
                for f in fs {
                    let d = f.ambient_dim();
                    logq += f.propose(&x[off..off + d], rng, &mut out[off..off + d]);
                    off += d;
                }
                logq
            }
        }
    }

    /// Importance-sampled estimate of `∫_{V'} e^{−⟨x,y⟩} dy` over the dual cone
    /// (self-dual for every catalog kind under the trace pairing).
    ///
    /// Samples are split into fixed chunks of [`MC_CHUNK`]; chunk `c` draws from
    /// stream `c` of a ChaCha8 generator seeded with `seed`, and chunk results
    /// are merged in chunk order, so the estimate is reproducible bit for bit.
    pub fn char_fn_mc(&self, x: &[f64], samples: usize, seed: u64) -> Result<McEstimate, ConeError> {
        self.check_dim(x)?;
        if samples == 0 {
            return Err(ConeError::NoSamples);
        }
        if !self.contains(x) {
            return Err(ConeError::NotInCone);
        }
        let d = self.ambient_dim();
        let chunks = samples.div_ceil(MC_CHUNK);
        let partials: Vec<(f64, f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let count = MC_CHUNK.min(samples - c * MC_CHUNK);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let mut y = vec![0.0; d];
                let (mut k, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
                for _ in 0..count {
                    let logq = self.propose(x, &mut rng, &mut y);
                    let w = if self.contains(&y) {
                        let pair: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                        (-pair - logq).exp()
                    } else {
                        0.0
                    };
                    k += 1.0;
                    let delta = w - mean;
                    mean += delta / k;
                    m2 += delta * (w - mean);
                }
                (k, mean, m2)
            })
            .collect();
        let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for (nb, mb, m2b) in partials {
            let tot = n + nb;
            let delta = mb - mean;
            mean += delta * nb / tot;
            m2 += m2b + delta * delta * n * nb / tot;
            n = tot;
        }
        let standard_error = if n > 1.0 {
            (m2 / (n - 1.0) / n).sqrt()
        } else {
            f64::INFINITY
        };
        Ok(McEstimate {
            estimate: mean,
            standard_error,
            samples,
        })
    }

    /// Seeded points of the dual cone drawn from the proposal at the unit point.
    pub fn dual_sample(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        let x = self.unit_point();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = vec![0.0; self.ambient_dim()];
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            self.propose(&x, &mut rng, &mut y);
            if self.contains(&y) {
                out.push(y.clone());
            }
        }
        out
    }
}

/// Ratio `a/b` of two Monte Carlo estimates with first-order propagated error.
pub fn mc_ratio(a: &McEstimate, b: &McEstimate) -> (f64, f64) {
    let r = a.estimate / b.estimate;
    let rel = ((a.standard_error / a.estimate).powi(2) + (b.standard_error / b.estimate).powi(2))
        .sqrt();
    (r, r.abs() * rel)
}
