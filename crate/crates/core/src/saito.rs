//! The Aₙ unfolding `F(z, t) = z^{n+1} + t₁z^{n−1} + … + tₙ`: multiplication
//! in the Jacobian ring `ℝ[z]/(F′)`, the residue pairing with primitive form
//! `dz`, critical points, and export of the Frobenius potential in flat
//! coordinates.
//!
//! Basis index `k` (0-based) is `∂_{t_{k+1}}`, represented by `z^{n−1−k}`;
//! the last index is the unit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::diffcore::{Monomial, Polynomial};
use crate::wdvv::{FrobeniusPotentialData, WdvvError};

/// Guard on `min |F″(z_c)|` for the trace formula.
pub const DISCRIMINANT_TOL: f64 = 1e-8;
/// Largest admissible flatness or fit residual in the export.
pub const FLATTENING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaitoError {
    #[error("parameters lie on the discriminant (min |F''| = {distance:e})")]
    OnDiscriminant { distance: f64 },
    #[error("flat-coordinate fit failed (residual {residual:e})")]
    FlatteningFailed { residual: f64 },
    #[error("export is implemented for n in {{2, 3}}, got {0}")]
    UnsupportedRank(usize),
    #[error("expected {expected} parameters, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("basis index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Wdvv(#[from] WdvvError),
}

impl SaitoError {
    pub fn code(&self) -> &'static str {
        match self {
            SaitoError::OnDiscriminant { .. } => "on_discriminant",
            SaitoError::FlatteningFailed { .. } => "flattening_failed",
            SaitoError::UnsupportedRank(_) => "unsupported_rank",
            SaitoError::DimensionMismatch { .. } => "dimension_mismatch",
            SaitoError::IndexOutOfRange { .. } => "index_out_of_range",
            SaitoError::Wdvv(e) => e.code(),
        }
    }
}

/// Univariate polynomial, coefficients in ascending powers, trailing zeros
/// trimmed (the zero polynomial has no coefficients).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealPolynomial {
    coeffs: Vec<f64>,
}

impl RealPolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        RealPolynomial { coeffs }
    }

    pub fn monomial(power: usize) -> Self {
        let mut c = vec![0.0; power + 1];
        c[power] = 1.0;
        RealPolynomial { coeffs: c }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, power: usize) -> f64 {
        self.coeffs.get(power).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        RealPolynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &RealPolynomial) -> Self {
        if self.is_zero() || other.is_zero() {
            return RealPolynomial::new(Vec::new());
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        RealPolynomial::new(c)
    }

    /// Long division; panics on a zero divisor.
    pub fn div_rem(&self, divisor: &RealPolynomial) -> (RealPolynomial, RealPolynomial) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead = divisor.coeffs[dd];
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (RealPolynomial::new(Vec::new()), self.clone());
        }
        let mut quot = vec![0.0; rem.len() - dd];
        for top in (dd..rem.len()).rev() {
            let q = rem[top] / lead;
            quot[top - dd] = q;
            for k in 0..=dd {
                rem[top - dd + k] -= q * divisor.coeffs[k];
            }
            rem[top] = 0.0;
        }
        rem.truncate(dd);
        (RealPolynomial::new(quot), RealPolynomial::new(rem))
    }

    /// Coefficients of `self / divisor` expanded at `z = ∞`, from the top
    /// power down to `z^{lowest}`. Returns `(top_power, coefficients)`.
    pub fn laurent_at_infinity(&self, divisor: &RealPolynomial, lowest: i64) -> (i64, Vec<f64>) {
        let dd = divisor.degree().expect("division by the zero polynomial") as i64;
        let Some(dn) = self.degree() else {
            return (lowest, vec![0.0]);
        };
        let top = dn as i64 - dd;
        if top < lowest {
            return (lowest, vec![0.0]);
        }
        let lead = divisor.coeffs[dd as usize];
        // working numerator indexed by power + offset so negative powers fit
        let offset = (-lowest).max(0) as usize;
        let mut num = vec![0.0; dn + 1 + offset];
        for (k, &c) in self.coeffs.iter().enumerate() {
            num[k + offset] = c;
        }
        let mut out = Vec::with_capacity((top - lowest + 1) as usize);
        for p in (lowest..=top).rev() {
            // the term q z^p cancels the numerator's z^{p + dd} coefficient
            let q = num[(p + dd + offset as i64) as usize] / lead;
            out.push(q);
            for k in 0..=dd as usize {
                let j = (p + k as i64 + offset as i64) as usize;
                num[j] -= q * divisor.coeffs[k];
            }
        }
        (top, out)
    }
}

/// The Aₙ unfolding at parameters `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnfoldingAn {
    n: usize,
    t: Vec<f64>,
}

impl UnfoldingAn {
    pub fn new(n: usize, t: Vec<f64>) -> Result<Self, SaitoError> {
        if n == 0 || t.len() != n {
            return Err(SaitoError::DimensionMismatch {
                expected: n.max(1),
                got: t.len(),
            });
        }
        Ok(UnfoldingAn { n, t })
    }

    pub fn at_origin(n: usize) -> Self {
        UnfoldingAn { n, t: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn potential(&self) -> RealPolynomial {
        let n = self.n;
        let mut c = vec![0.0; n + 2];
        c[n + 1] = 1.0;
        for (k, &tk) in self.t.iter().enumerate() {
            c[n - 1 - k] += tk;
        }
        RealPolynomial::new(c)
    }

    pub fn f_prime(&self) -> RealPolynomial {
        self.potential().derivative()
    }

    fn check_index(&self, i: usize) -> Result<(), SaitoError> {
        if i >= self.n {
            return Err(SaitoError::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(())
    }

    /// Polynomial `Σ_k a_k z^{n−1−k}` of a coefficient vector.
    pub fn element(&self, a: &[f64]) -> RealPolynomial {
        let n = self.n;
        let mut c = vec![0.0; n];
        for (k, &ak) in a.iter().enumerate() {
            c[n - 1 - k] = ak;
        }
        RealPolynomial::new(c)
    }

    /// Coefficient vector of a polynomial of degree `< n`.
    pub fn coordinates(&self, p: &RealPolynomial) -> Vec<f64> {
        (0..self.n).map(|k| p.coeff(self.n - 1 - k)).collect()
    }

    /// `a·b mod F′` in coordinates.
    pub fn multiply(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let prod = self.element(a).mul(&self.element(b));
        let (_, r) = prod.div_rem(&self.f_prime());
        self.coordinates(&r)
    }

    pub fn jacobian_multiply(&self, i: usize, j: usize) -> Result<Vec<f64>, SaitoError> {
        self.check_index(i)?;
        self.check_index(j)?;
        let prod = RealPolynomial::monomial(2 * self.n - 2 - i - j);
        let (_, r) = prod.div_rem(&self.f_prime());
        Ok(self.coordinates(&r))
    }

    /// Coefficient of `z^{−1}` in the expansion of `p / F′` at infinity.
    pub fn residue(&self, p: &RealPolynomial) -> f64 {
        let (top, coeffs) = p.laurent_at_infinity(&self.f_prime(), -1);
        if top < -1 {
            return 0.0;
        }
        coeffs[(top + 1) as usize]
    }

    pub fn residue_pairing(&self, i: usize, j: usize) -> Result<f64, SaitoError> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.residue(&RealPolynomial::monomial(2 * self.n - 2 - i - j)))
    }

    /// Bilinear extension of the residue pairing to coefficient vectors.
    pub fn pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        self.residue(&self.element(a).mul(&self.element(b)))
    }

    pub fn residue_metric(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            self.residue(&RealPolynomial::monomial(2 * n - 2 - i - j))
        })
    }

    /// Roots of `F′` from the companion matrix, polished by Newton steps.
    pub fn critical_points(&self) -> Vec<Complex64> {
        let fp = self.f_prime();
        let n = self.n;
        let lead = fp.coeff(n);
        let comp = DMatrix::from_fn(n, n, |i, j| {
            if i == n - 1 {
                -fp.coeff(j) / lead
            } else if j == i + 1 {
                1.0
            } else {
                0.0
            }
        });
        let fpp = fp.derivative();
        comp.complex_eigenvalues()
            .iter()
            .map(|&z0| {
                let mut z = z0;
                for _ in 0..4 {
                    let d = fpp.eval_complex(z);
                    if d.norm() == 0.0 {
                        break;
                    }
                    let next = z - fp.eval_complex(z) / d;
                    if fp.eval_complex(next).norm() < fp.eval_complex(z).norm() {
                        z = next;
                    } else {
                        break;
                    }
                }
                z
            })
            .collect()
    }

    /// `min_c |F″(z_c)|` over critical points.
    pub fn discriminant_distance(&self) -> f64 {
        let fpp = self.f_prime().derivative();
        self.critical_points()
            .iter()
            .map(|&z| fpp.eval_complex(z).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// `Σ_c p(z_c) / F″(z_c)` for `p = z^{n−1−i} z^{n−1−j}`.
    pub fn trace_formula_pairing(&self, i: usize, j: usize) -> Result<TracePairing, SaitoError> {
        self.check_index(i)?;
        self.check_index(j)?;
        let distance = self.discriminant_distance();
        if !(distance >= DISCRIMINANT_TOL) {
            return Err(SaitoError::OnDiscriminant { distance });
        }
        let p = RealPolynomial::monomial(2 * self.n - 2 - i - j);
        let fpp = self.f_prime().derivative();
        let s: Complex64 = self
            .critical_points()
            .iter()
            .map(|&z| p.eval_complex(z) / fpp.eval_complex(z))
            .sum();
        Ok(TracePairing {
            value: s.re,
            imaginary: s.im,
        })
    }

    /// Largest associator `‖(e_i∘e_j)∘e_k − e_i∘(e_j∘e_k)‖₂` over basis triples.
    pub fn associativity_residual(&self) -> f64 {
        let n = self.n;
        let e = |i: usize| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let l = self.multiply(&self.multiply(&e(i), &e(j)), &e(k));
                    let r = self.multiply(&e(i), &self.multiply(&e(j), &e(k)));
                    let d = l.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    worst = worst.max(d.sqrt());
                }
            }
        }
        worst
    }

    /// `g(∂_i∘∂_j, ∂_k)` minus its cyclic shift, max-norm.
    pub fn frobenius_symmetry_residual(&self) -> f64 {
        let n = self.n;
        let e = |i: usize| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        };
        let a = |i, j, k| self.pairing(&self.multiply(&e(i), &e(j)), &e(k));
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((a(i, j, k) - a(j, k, i)).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePairing {
    pub value: f64,
    pub imaginary: f64,
}

/// Quadratic change of coordinates `t_k = s_k + Σ c · s_a s_b` over the
/// weight-compatible pairs `w_a + w_b = w_k`, weights `w_i = i + 2` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatCoordinates {
    pub n: usize,
    /// `(k, a, b, c)` terms.
    pub terms: Vec<(usize, usize, usize, f64)>,
}

impl FlatCoordinates {
    fn slots(n: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for k in 0..n {
            for a in 0..n {
                for b in a..n {
                    if a + b + 4 == k + 2 {
                        out.push((k, a, b));
                    }
                }
            }
        }
        out
    }

    fn with_params(n: usize, params: &[f64]) -> Self {
        FlatCoordinates {
            n,
            terms: Self::slots(n)
                .into_iter()
                .zip(params)
                .map(|((k, a, b), &c)| (k, a, b, c))
                .collect(),
        }
    }

    pub fn to_t(&self, s: &[f64]) -> Vec<f64> {
        let mut t = s.to_vec();
        for &(k, a, b, c) in &self.terms {
            t[k] += c * s[a] * s[b];
        }
        t
    }

    /// `J[k][m] = ∂t_k/∂s_m`.
    pub fn jacobian(&self, s: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::identity(self.n, self.n);
        for &(k, a, b, c) in &self.terms {
            j[(k, a)] += c * s[b];
            j[(k, b)] += c * s[a];
        }
        j
    }

    /// Residue metric pulled back to `s`: `Jᵀ g(t(s)) J`.
    pub fn metric_at(&self, s: &[f64]) -> DMatrix<f64> {
        let u = UnfoldingAn {
            n: self.n,
            t: self.to_t(s),
        };
        let j = self.jacobian(s);
        j.transpose() * u.residue_metric() * j
    }
}

/// Exported Frobenius data together with fit diagnostics.
#[derive(Debug, Clone)]
pub struct SaitoExport {
    pub data: FrobeniusPotentialData,
    pub flat: FlatCoordinates,
    pub flatness_residual: f64,
    pub fit_residual: f64,
}

fn grid(n: usize, per_axis: usize, half_width: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| -half_width + 2.0 * half_width * k as f64 / (per_axis - 1) as f64)
        .collect();
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

fn flatness_residuals(n: usize, params: &[f64], pts: &[Vec<f64>], g0: &DMatrix<f64>) -> Vec<f64> {
    let fc = FlatCoordinates::with_params(n, params);
    let mut r = Vec::new();
    for s in pts {
        let g = fc.metric_at(s);
        for i in 0..n {
            for j in i..n {
                r.push(g[(i, j)] - g0[(i, j)]);
            }
        }
    }
    r
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Gauss–Newton on the quadratic ansatz so that the pulled-back metric is
/// constant over a grid.
pub fn find_flat_coordinates(n: usize) -> Result<(FlatCoordinates, f64), SaitoError> {
    let g0 = UnfoldingAn::at_origin(n).residue_metric();
    let pts = grid(n, 5, 1.0);
    let m = FlatCoordinates::slots(n).len();
    let mut params = vec![0.0; m];
    let mut res = flatness_residuals(n, &params, &pts, &g0);
    for _ in 0..20 {
        if m == 0 || max_abs(&res) < 1e-13 {
            break;
        }
        let h = 1e-6;
        let mut jac = DMatrix::zeros(res.len(), m);
        for p in 0..m {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[p] += h;
            dn[p] -= h;
            let ru = flatness_residuals(n, &up, &pts, &g0);
            let rd = flatness_residuals(n, &dn, &pts, &g0);
            for (row, (a, b)) in ru.iter().zip(&rd).enumerate() {
                jac[(row, p)] = (a - b) / (2.0 * h);
            }
        }
        let rv = DVector::from_vec(res.clone());
        let step = jac
            .svd(true, true)
            .solve(&rv, 1e-12)
            .map_err(|_| SaitoError::FlatteningFailed { residual: max_abs(&res) })?;
        for p in 0..m {
            params[p] -= step[p];
        }
        res = flatness_residuals(n, &params, &pts, &g0);
    }
    let residual = max_abs(&res);
    Ok((FlatCoordinates::with_params(n, &params), residual))
}

fn exponents(n: usize, lo: u32, hi: u32) -> Vec<Vec<u32>> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(pos + 1, left - e, cur, out);
        }
    }
    let mut out = Vec::new();
    for d in lo..=hi {
        let mut cur = vec![0; n];
        rec(0, d, &mut cur, &mut out);
    }
    out
}

/// `∂_a∂_b∂_c s^α` at `s`.
fn third_partial(powers: &[u32], idx: [usize; 3], s: &[f64]) -> f64 {
    let mut p: Vec<i64> = powers.iter().map(|&e| e as i64).collect();
    let mut coef = 1.0;
    for &i in &idx {
        if p[i] == 0 {
            return 0.0;
        }
        coef *= p[i] as f64;
        p[i] -= 1;
    }
    p.iter()
        .zip(s)
        .map(|(&e, &x)| x.powi(e as i32))
        .product::<f64>()
        * coef
}

/// Frobenius data of the Aₙ unfolding in flat coordinates (`n ∈ {2, 3}`):
/// fits a polynomial `Φ` with `∂_a∂_b∂_cΦ = g(∂_a∘∂_b, ∂_c)` and returns it
/// with the constant residue metric and the unit as flat identity.
pub fn export_frobenius_data(n: usize) -> Result<SaitoExport, SaitoError> {
    if !(2..=3).contains(&n) {
        return Err(SaitoError::UnsupportedRank(n));
    }
    let (flat, flatness_residual) = find_flat_coordinates(n)?;
    if flatness_residual > FLATTENING_TOL {
        return Err(SaitoError::FlatteningFailed {
            residual: flatness_residual,
        });
    }
    let g0 = UnfoldingAn::at_origin(n).residue_metric();
    let monos = exponents(n, 3, n as u32 + 3);
    let triples: Vec<[usize; 3]> = (0..n)
        .flat_map(|a| (a..n).flat_map(move |b| (b..n).map(move |c| [a, b, c])))
        .collect();
    let pts = grid(n, 5, 1.0);
    let rows = pts.len() * triples.len();
    let mut design = DMatrix::zeros(rows, monos.len());
    let mut rhs = DVector::zeros(rows);
    let mut row = 0;
    for s in &pts {
        let u = UnfoldingAn {
            n,
            t: flat.to_t(s),
        };
        let j = flat.jacobian(s);
        let cols: Vec<Vec<f64>> = (0..n).map(|a| j.column(a).iter().copied().collect()).collect();
        for tr in &triples {
            let [a, b, c] = *tr;
            rhs[row] = u.pairing(&u.multiply(&cols[a], &cols[b]), &cols[c]);
            for (m, pw) in monos.iter().enumerate() {
                design[(row, m)] = third_partial(pw, *tr, s);
            }
            row += 1;
        }
    }
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|_| SaitoError::FlatteningFailed { residual: f64::INFINITY })?;
    let fit_residual = (&design * &coef - &rhs).amax();
    if !(fit_residual <= FLATTENING_TOL) {
        return Err(SaitoError::FlatteningFailed {
            residual: fit_residual,
        });
    }
    let scale = coef.amax().max(1.0);
    let terms: Vec<Monomial> = monos
        .iter()
        .zip(coef.iter())
        .filter(|(_, c)| c.abs() > 1e-10 * scale)
        .map(|(p, &c)| Monomial {
            coef: c,
            powers: p.clone(),
        })
        .collect();
    let data = FrobeniusPotentialData::from_polynomial(Polynomial::new(n, terms), g0, Some(n - 1))?;
    Ok(SaitoExport {
        data,
        flat,
        flatness_residual,
        fit_residual,
    })
}
