//! Metric, canonical connection and product of a Hessian structure, with the
//! bracket-level identities (Poisson tensor, F-identity, vector potentials)
//! and curvature of the connection family, all evaluated at a point.
//!
//! Conventions: `Γ^i_{jk}` is stored as `t[i][j][k]`; the product of tangent
//! vectors is `(a∘b)^i = −Γ^i_{jk} a^j b^k` with the half-coefficient
//! connection `Γ = ½ g⁻¹ ∂³ψ` where `ψ` is the potential.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cones::{ConeError, ConeSpec};
use crate::diffcore::{eval_derivatives, DerivativeBundle, DiffError, ScalarField, VectorField};
use crate::tensor::{Tensor3, Tensor4};

/// Smallest admissible Hessian eigenvalue.
pub const DEGENERATE_METRIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("metric is degenerate (smallest eigenvalue {min_eigenvalue:e})")]
    DegenerateMetric { min_eigenvalue: f64 },
    #[error("trajectory left the domain after step {step}")]
    LeftDomain { last: Vec<f64>, step: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl GeometryError {
    pub fn code(&self) -> &'static str {
        match self {
            GeometryError::Diff(e) => e.code(),
            GeometryError::Cone(e) => e.code(),
            GeometryError::DegenerateMetric { .. } => "degenerate_metric",
            GeometryError::LeftDomain { .. } => "left_domain",
            GeometryError::DimensionMismatch { .. } => "dimension_mismatch",
        }
    }
}

/// Which torsionless connection to use for curvature and geodesics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionMode {
    /// `½ g^{il} ∂³ψ_{ljk}`, the Levi-Civita connection of the Hessian metric.
    LeviCivitaHalf,
    /// `g^{il} ∂³ψ_{ljk}`, the dual of the flat affine connection.
    FullGamma,
    /// The flat affine connection of the ambient coordinates.
    ZeroGamma,
}

impl ConnectionMode {
    fn coefficient(self) -> f64 {
        match self {
            ConnectionMode::LeviCivitaHalf => 0.5,
            ConnectionMode::FullGamma => 1.0,
            ConnectionMode::ZeroGamma => 0.0,
        }
    }
}

impl FromStr for ConnectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "levi_civita_half" | "lc" => Ok(ConnectionMode::LeviCivitaHalf),
            "full_gamma" | "full" => Ok(ConnectionMode::FullGamma),
            "zero_gamma" | "zero" => Ok(ConnectionMode::ZeroGamma),
            _ => Err(format!("unknown connection mode {s:?}")),
        }
    }
}

impl fmt::Display for ConnectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnectionMode::LeviCivitaHalf => "levi_civita_half",
            ConnectionMode::FullGamma => "full_gamma",
            ConnectionMode::ZeroGamma => "zero_gamma",
        })
    }
}

/// Metric `g_ij` and its inverse at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAt {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

/// `Γ^i_{jk}` at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ChristoffelAt(pub Tensor3);

/// Structure constants `c^i_{jk}` of the product at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProductAt(pub Tensor3);

impl ProductAt {
    pub fn multiply(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        contract(&self.0, a, b)
    }
}

/// `t^i_{jk} a^j b^k` for `t` symmetric in its lower indices; pairs are
/// summed as `a^j b^k + a^k b^j` so the result is exactly symmetric in `a, b`.
fn contract(t: &Tensor3, a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = t.dim();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                s += t.get(i, j, j) * (a[j] * b[j]);
                for k in j + 1..n {
                    s += t.get(i, j, k) * (a[j] * b[k] + a[k] * b[j]);
                }
            }
            s
        })
        .collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Value and Jacobian `jac[i][m] = ∂_m V^i` of a vector field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: Vec<f64>,
    pub jac: Vec<Vec<f64>>,
}

impl FieldJet {
    pub fn of(field: &VectorField, x: &[f64]) -> Result<Self, DiffError> {
        let (value, jac) = field.jet1(x)?;
        Ok(FieldJet { value, jac })
    }

    /// `[A, B]^i = A^m ∂_m B^i − B^m ∂_m A^i`.
    pub fn bracket(&self, other: &FieldJet) -> Vec<f64> {
        let n = self.value.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|m| self.value[m] * other.jac[i][m] - other.value[m] * self.jac[i][m])
                    .sum()
            })
            .collect()
    }
}

/// Connection data with first derivatives at one point.
#[derive(Debug, Clone)]
pub struct LocalConnection {
    pub gamma: Tensor3,
    /// `dgamma[m]` holds `∂_m Γ^i_{jk}`.
    pub dgamma: Vec<Tensor3>,
}

impl LocalConnection {
    fn product_jet(&self, a: &FieldJet, b: &FieldJet) -> FieldJet {
        let n = a.value.len();
        let value: Vec<f64> = contract(&self.gamma, &a.value, &b.value)
            .into_iter()
            .map(|v| -v)
            .collect();
        let mut jac = vec![vec![0.0; n]; n];
        for m in 0..n {
            let da: Vec<f64> = (0..n).map(|j| a.jac[j][m]).collect();
            let db: Vec<f64> = (0..n).map(|k| b.jac[k][m]).collect();
            let t1 = contract(&self.dgamma[m], &a.value, &b.value);
            let t2 = contract(&self.gamma, &da, &b.value);
            let t3 = contract(&self.gamma, &a.value, &db);
            for i in 0..n {
                jac[i][m] = -(t1[i] + t2[i] + t3[i]);
            }
        }
        FieldJet { value, jac }
    }

    fn product_value(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        contract(&self.gamma, a, b).into_iter().map(|v| -v).collect()
    }

    /// `P_X(Z, W) = [X, Z∘W] − [X, Z]∘W − Z∘[X, W]` (all fields even).
    fn poisson(&self, x: &FieldJet, z: &FieldJet, w: &FieldJet) -> Vec<f64> {
        let zw = self.product_jet(z, w);
        let t1 = x.bracket(&zw);
        let t2 = self.product_value(&x.bracket(z), &w.value);
        let t3 = self.product_value(&z.value, &x.bracket(w));
        (0..t1.len()).map(|i| t1[i] - t2[i] - t3[i]).collect()
    }
}

/// A potential on an open domain whose Hessian is the metric.
#[derive(Debug, Clone)]
pub struct HessianStructure {
    potential: ScalarField,
}

fn metric_from_bundle(b: &DerivativeBundle) -> Result<MetricAt, GeometryError> {
    let h = b.hessian();
    let g = (&h + h.transpose()) * 0.5;
    let min_eigenvalue = g.clone().symmetric_eigenvalues().min();
    if !(min_eigenvalue >= DEGENERATE_METRIC_TOL) {
        return Err(GeometryError::DegenerateMetric { min_eigenvalue });
    }
    let g_inv = g
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(GeometryError::DegenerateMetric { min_eigenvalue })?;
    Ok(MetricAt {
        g,
        g_inv,
        min_eigenvalue,
    })
}

fn raise_third(g_inv: &DMatrix<f64>, b: &DerivativeBundle, coef: f64) -> Tensor3 {
    let n = b.nvars();
    Tensor3::from_fn(n, |i, j, k| {
        coef * (0..n).map(|l| g_inv[(i, l)] * b.d3(l, j, k)).sum::<f64>()
    })
}

impl HessianStructure {
    pub fn new(potential: ScalarField) -> Self {
        HessianStructure { potential }
    }

    /// The structure on a catalog cone with potential `ln φ`.
    pub fn from_cone(cone: &ConeSpec) -> Result<Self, GeometryError> {
        Ok(HessianStructure::new(cone.log_potential()?))
    }

    pub fn dim(&self) -> usize {
        self.potential.nvars()
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.potential.in_domain(x)
    }

    fn check_vec(&self, v: &[f64]) -> Result<(), GeometryError> {
        if v.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<MetricAt, GeometryError> {
        let b = eval_derivatives(&self.potential, x, 2)?;
        metric_from_bundle(&b)
    }

    pub fn christoffel_at(&self, x: &[f64]) -> Result<ChristoffelAt, GeometryError> {
        self.christoffel_mode(x, ConnectionMode::LeviCivitaHalf)
    }

    pub fn christoffel_mode(
        &self,
        x: &[f64],
        mode: ConnectionMode,
    ) -> Result<ChristoffelAt, GeometryError> {
        if mode == ConnectionMode::ZeroGamma {
            self.check_vec(x)?;
            if !self.in_domain(x) {
                return Err(DiffError::Domain { point: x.to_vec() }.into());
            }
            return Ok(ChristoffelAt(Tensor3::zeros(self.dim())));
        }
        let b = eval_derivatives(&self.potential, x, 3)?;
        let m = metric_from_bundle(&b)?;
        Ok(ChristoffelAt(raise_third(&m.g_inv, &b, mode.coefficient())))
    }

    pub fn product_at(&self, x: &[f64]) -> Result<ProductAt, GeometryError> {
        Ok(ProductAt(self.christoffel_at(x)?.0.scaled(-1.0)))
    }

    /// Connection coefficients in `mode` with their first derivatives.
    pub fn local_connection(
        &self,
        x: &[f64],
        mode: ConnectionMode,
    ) -> Result<LocalConnection, GeometryError> {
        let n = self.dim();
        let b = eval_derivatives(&self.potential, x, 4)?;
        let m = metric_from_bundle(&b)?;
        let c = mode.coefficient();
        let gi = &m.g_inv;
        let gamma = raise_third(gi, &b, c);
        // ∂_m g^{il} = −g^{ia} ∂³ψ_{abm} g^{bl}
        let dgamma = (0..n)
            .map(|mm| {
                let dg = DMatrix::from_fn(n, n, |a, bb| b.d3(a, bb, mm));
                let dginv = -(gi * dg * gi);
                Tensor3::from_fn(n, |i, j, k| {
                    c * (0..n)
                        .map(|l| dginv[(i, l)] * b.d3(l, j, k) + gi[(i, l)] * b.d4(l, j, k, mm))
                        .sum::<f64>()
                })
            })
            .collect();
        Ok(LocalConnection { gamma, dgamma })
    }

    pub fn multiply_at(&self, x: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_vec(a)?;
        self.check_vec(b)?;
        Ok(self.product_at(x)?.multiply(a, b))
    }

    /// `‖(a∘b)∘c − a∘(b∘c)‖₂`.
    pub fn associator_residual(
        &self,
        x: &[f64],
        a: &[f64],
        b: &[f64],
        c: &[f64],
    ) -> Result<f64, GeometryError> {
        for v in [a, b, c] {
            self.check_vec(v)?;
        }
        let p = self.product_at(x)?;
        let left = p.multiply(&p.multiply(a, b), c);
        let right = p.multiply(a, &p.multiply(b, c));
        Ok(norm2(&sub(&left, &right)))
    }

    /// Largest associator over all triples of coordinate vectors.
    pub fn basis_associator_max(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let n = self.dim();
        let p = self.product_at(x)?;
        let e = |i: usize| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let l = p.multiply(&p.multiply(&e(i), &e(j)), &e(k));
                    let r = p.multiply(&e(i), &p.multiply(&e(j), &e(k)));
                    worst = worst.max(norm2(&sub(&l, &r)));
                }
            }
        }
        Ok(worst)
    }

    pub fn poisson_tensor(
        &self,
        xf: &VectorField,
        zf: &VectorField,
        wf: &VectorField,
        x: &[f64],
    ) -> Result<Vec<f64>, GeometryError> {
        let lc = self.local_connection(x, ConnectionMode::LeviCivitaHalf)?;
        let (xj, zj, wj) = (
            FieldJet::of(xf, x)?,
            FieldJet::of(zf, x)?,
            FieldJet::of(wf, x)?,
        );
        Ok(lc.poisson(&xj, &zj, &wj))
    }

    /// `‖P_{X∘Y}(Z,W) − X∘P_Y(Z,W) − Y∘P_X(Z,W)‖₂`.
    pub fn f_identity_residual(
        &self,
        xf: &VectorField,
        yf: &VectorField,
        zf: &VectorField,
        wf: &VectorField,
        x: &[f64],
    ) -> Result<f64, GeometryError> {
        let lc = self.local_connection(x, ConnectionMode::LeviCivitaHalf)?;
        let xj = FieldJet::of(xf, x)?;
        let yj = FieldJet::of(yf, x)?;
        let zj = FieldJet::of(zf, x)?;
        let wj = FieldJet::of(wf, x)?;
        let xy = lc.product_jet(&xj, &yj);
        let lhs = lc.poisson(&xy, &zj, &wj);
        let r1 = lc.product_value(&xj.value, &lc.poisson(&yj, &zj, &wj));
        let r2 = lc.product_value(&yj.value, &lc.poisson(&xj, &zj, &wj));
        let diff: Vec<f64> = (0..lhs.len()).map(|i| lhs[i] - r1[i] - r2[i]).collect();
        Ok(norm2(&diff))
    }

    /// `‖∂_i∘∂_j − [∂_i, [∂_j, C]]‖₂`; for coordinate fields the double
    /// bracket is the second partial `∂_i∂_j C`.
    pub fn vector_potential_residual(
        &self,
        c: &VectorField,
        i: usize,
        j: usize,
        x: &[f64],
    ) -> Result<f64, GeometryError> {
        let n = self.dim();
        if c.dim() != n {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: c.dim(),
            });
        }
        if i >= n || j >= n {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: i.max(j) + 1,
            });
        }
        let p = self.product_at(x)?;
        let hess = c.hessians(x)?;
        let diff: Vec<f64> = (0..n).map(|k| p.0.get(k, i, j) - hess[k][(i, j)]).collect();
        Ok(norm2(&diff))
    }

    /// `R^i_{jkl} = ∂_kΓ^i_{lj} − ∂_lΓ^i_{kj} + Γ^i_{km}Γ^m_{lj} − Γ^i_{lm}Γ^m_{kj}`,
    /// stored as `t[i][j][k][l]`.
    pub fn connection_curvature(
        &self,
        x: &[f64],
        mode: ConnectionMode,
    ) -> Result<Tensor4, GeometryError> {
        let n = self.dim();
        if mode == ConnectionMode::ZeroGamma {
            self.christoffel_mode(x, mode)?;
            return Ok(Tensor4::zeros(n));
        }
        let lc = self.local_connection(x, mode)?;
        let g = &lc.gamma;
        Ok(Tensor4::from_fn(n, |i, j, k, l| {
            let mut r = lc.dgamma[k].get(i, l, j) - lc.dgamma[l].get(i, k, j);
            for m in 0..n {
                r += g.get(i, k, m) * g.get(m, l, j) - g.get(i, l, m) * g.get(m, k, j);
            }
            r
        }))
    }

    fn geodesic_rhs(
        &self,
        x: &[f64],
        v: &[f64],
        mode: ConnectionMode,
    ) -> Result<Vec<f64>, GeometryError> {
        let g = self.christoffel_mode(x, mode)?.0;
        Ok(contract(&g, v, v).into_iter().map(|a| -a).collect())
    }

    /// RK4 integration of `ẍ^i + Γ^i_{jk} ẋ^j ẋ^k = 0` over `[0, t_end]`.
    /// Returns the `steps + 1` positions including the start.
    pub fn geodesic_shoot(
        &self,
        x0: &[f64],
        v0: &[f64],
        t_end: f64,
        steps: usize,
        mode: ConnectionMode,
    ) -> Result<Vec<Vec<f64>>, GeometryError> {
        self.check_vec(x0)?;
        self.check_vec(v0)?;
        if !self.in_domain(x0) {
            return Err(DiffError::Domain { point: x0.to_vec() }.into());
        }
        let n = self.dim();
        let h = t_end / steps.max(1) as f64;
        let mut x = x0.to_vec();
        let mut v = v0.to_vec();
        let mut path = vec![x.clone()];
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(p, q)| p + s * q).collect()
        };
        for step in 0..steps {
            let left = |last: &[f64]| GeometryError::LeftDomain {
                last: last.to_vec(),
                step,
            };
            let stage = |xs: &[f64], vs: &[f64]| -> Result<Vec<f64>, GeometryError> {
                if !self.in_domain(xs) {
                    return Err(left(&x));
                }
                self.geodesic_rhs(xs, vs, mode)
            };
            let k1x = v.clone();
            let k1v = stage(&x, &v)?;
            let x2 = axpy(&x, h / 2.0, &k1x);
            let v2 = axpy(&v, h / 2.0, &k1v);
            let k2v = stage(&x2, &v2)?;
            let x3 = axpy(&x, h / 2.0, &v2);
            let v3 = axpy(&v, h / 2.0, &k2v);
            let k3v = stage(&x3, &v3)?;
            let x4 = axpy(&x, h, &v3);
            let v4 = axpy(&v, h, &k3v);
            let k4v = stage(&x4, &v4)?;
            let mut nx = x.clone();
            let mut nv = v.clone();
            for i in 0..n {
                nx[i] += h / 6.0 * (k1x[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
                nv[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            }
            if !self.in_domain(&nx) {
                return Err(left(&x));
            }
            x = nx;
            v = nv;
            path.push(x.clone());
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::sym_to_vec;
    use crate::diffcore::{Jet, Polynomial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthant(n: usize) -> HessianStructure {
        HessianStructure::from_cone(&ConeSpec::Orthant(n)).unwrap()
    }

    fn quadratic() -> HessianStructure {
        // ½ xᵀAx with A = [[2, 1], [1, 3]]
        HessianStructure::new(ScalarField::new(2, |x| {
            &x[0] * &x[0] + &x[0] * &x[1] + 1.5 * (&x[1] * &x[1])
        }))
    }

    #[test]
    fn orthant_metric_examples() {
        let m = orthant(2).metric_at(&[1.0, 2.0]).unwrap();
        assert!((m.g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m.g[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(m.g[(0, 1)], 0.0);
        let one = orthant(1).metric_at(&[3.0]).unwrap();
        assert!((one.g[(0, 0)] - 1.0 / 9.0).abs() < 1e-15);
        assert!((&m.g * &m.g_inv - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn affine_potential_is_degenerate() {
        let h = HessianStructure::new(ScalarField::new(2, |x| 2.0 * &x[0] - &x[1]));
        assert!(matches!(
            h.metric_at(&[0.3, 0.1]),
            Err(GeometryError::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn orthant_christoffel_and_product() {
        let h = orthant(2);
        let g = h.christoffel_at(&[1.0, 2.0]).unwrap().0;
        assert!((g.get(0, 0, 0) + 1.0).abs() < 1e-14);
        assert!((g.get(1, 1, 1) + 0.5).abs() < 1e-14);
        for (i, j, k) in [(0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 0, 1), (0, 1, 1)] {
            assert_eq!(g.get(i, j, k), 0.0);
        }
        let x = [1.0, 2.0];
        let p = h.multiply_at(&x, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-14 && p[1] == 0.0);
        let p = h.multiply_at(&x, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!(p[0] == 0.0 && (p[1] - 0.5).abs() < 1e-14);
        // e_i = x_i ∂_i are orthogonal idempotents
        let e = [vec![1.0, 0.0], vec![0.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                let p = h.multiply_at(&x, &e[i], &e[j]).unwrap();
                let expected: Vec<f64> = if i == j { e[i].clone() } else { vec![0.0, 0.0] };
                assert!(norm2(&sub(&p, &expected)) < 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_potential_has_trivial_product() {
        let h = quadratic();
        let g = h.christoffel_at(&[0.4, -0.7]).unwrap().0;
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(
            h.multiply_at(&[0.4, -0.7], &[1.0, 2.0], &[3.0, -1.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            h.associator_residual(&[0.4, -0.7], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0])
                .unwrap(),
            0.0
        );
        let d = VectorField::coordinate(2, 0);
        assert_eq!(h.poisson_tensor(&d, &d, &d, &[0.1, 0.2]).unwrap(), vec![0.0, 0.0]);
        let c0 = VectorField::constant(&[0.0, 0.0]);
        assert_eq!(h.vector_potential_residual(&c0, 0, 1, &[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn christoffel_symmetric_on_spd() {
        let cone = ConeSpec::SpdReal(2);
        let h = HessianStructure::from_cone(&cone).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let x = cone.sample_interior(&mut rng);
            let g = h.christoffel_at(&x).unwrap().0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!((g.get(i, j, k) - g.get(i, k, j)).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn spd_product_is_jordan_product_at_identity() {
        // a∘b = ½(aX⁻¹b + bX⁻¹a); at X = I the associator of matrix units is
        // computed directly in matrix form and compared.
        let h = HessianStructure::from_cone(&ConeSpec::SpdReal(2)).unwrap();
        let x = sym_to_vec(&DMatrix::identity(2, 2));
        let units = [
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        ];
        let jordan = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a * b + b * a) * 0.5;
        let mut any_nonzero = false;
        for a in &units {
            for b in &units {
                let p = h.multiply_at(&x, &sym_to_vec(a), &sym_to_vec(b)).unwrap();
                let j = sym_to_vec(&jordan(a, b));
                assert!(norm2(&sub(&p, &j)) < 1e-12);
                for c in &units {
                    let oracle = (jordan(&jordan(a, b), c) - jordan(a, &jordan(b, c))).norm();
                    let r = h
                        .associator_residual(&x, &sym_to_vec(a), &sym_to_vec(b), &sym_to_vec(c))
                        .unwrap();
                    assert!((r - oracle).abs() < 1e-12);
                    any_nonzero |= r > 1e-3;
                }
            }
        }
        assert!(any_nonzero);
    }

    #[test]
    fn one_dimensional_poisson_tensor() {
        // [∂, (1/x)∂] = −(1/x²)∂; the two correction terms vanish
        let h = orthant(1);
        let d = VectorField::coordinate(1, 0);
        let p = h.poisson_tensor(&d, &d, &d, &[2.0]).unwrap();
        assert!((p[0] + 0.25).abs() < 1e-14, "{p:?}");
    }

    #[test]
    fn poisson_linear_in_last_slot() {
        let h = orthant(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = [1.3, 0.8];
        let xf = Polynomial::random_field(2, 2, &mut rng);
        let zf = Polynomial::random_field(2, 2, &mut rng);
        let wf = Polynomial::random_field(2, 2, &mut rng);
        let alpha = 0.37;
        let scaled = VectorField::new(
            wf.components()
                .iter()
                .map(|c| {
                    let c = c.clone();
                    ScalarField::new(2, move |x: &[Jet]| c.eval_jet(x).unwrap() * alpha)
                })
                .collect(),
        );
        let a = h.poisson_tensor(&xf, &zf, &wf, &x).unwrap();
        let b = h.poisson_tensor(&xf, &zf, &scaled, &x).unwrap();
        for i in 0..2 {
            assert!((alpha * a[i] - b[i]).abs() < 1e-9);
        }
    }

    /// Oracle: the product field evaluated at shifted points and
    /// differentiated by central differences.
    fn poisson_by_differences(
        h: &HessianStructure,
        xf: &VectorField,
        zf: &VectorField,
        wf: &VectorField,
        x: &[f64],
    ) -> Vec<f64> {
        let n = x.len();
        let prod = |p: &[f64], a: &VectorField, b: &VectorField| {
            h.multiply_at(p, &a.value(p).unwrap(), &b.value(p).unwrap()).unwrap()
        };
        let step = 1e-5;
        let mut jac = vec![vec![0.0; n]; n];
        for m in 0..n {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[m] += step;
            q[m] -= step;
            let fp = prod(&p, zf, wf);
            let fq = prod(&q, zf, wf);
            for i in 0..n {
                jac[i][m] = (fp[i] - fq[i]) / (2.0 * step);
            }
        }
        let zw = FieldJet {
            value: prod(x, zf, wf),
            jac,
        };
        let xj = FieldJet::of(xf, x).unwrap();
        let t1 = xj.bracket(&zw);
        let xz = crate::diffcore::lie_bracket(xf, zf, x).unwrap();
        let xw = crate::diffcore::lie_bracket(xf, wf, x).unwrap();
        let t2 = h.multiply_at(x, &xz, &wf.value(x).unwrap()).unwrap();
        let t3 = h.multiply_at(x, &zf.value(x).unwrap(), &xw).unwrap();
        (0..n).map(|i| t1[i] - t2[i] - t3[i]).collect()
    }

    #[test]
    fn poisson_matches_difference_oracle_on_spd() {
        let cone = ConeSpec::SpdReal(2);
        let h = HessianStructure::from_cone(&cone).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let x = cone.sample_interior(&mut rng);
            let xf = Polynomial::random_field(3, 2, &mut rng);
            let zf = Polynomial::random_field(3, 2, &mut rng);
            let wf = Polynomial::random_field(3, 2, &mut rng);
            let fast = h.poisson_tensor(&xf, &zf, &wf, &x).unwrap();
            let slow = poisson_by_differences(&h, &xf, &zf, &wf, &x);
            let scale = norm2(&slow).max(1.0);
            assert!(norm2(&sub(&fast, &slow)) / scale < 1e-6, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn orthant_f_identity_small_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for n in 2..=3 {
            let cone = ConeSpec::Orthant(n);
            let h = orthant(n);
            for _ in 0..5 {
                let x = cone.sample_interior(&mut rng);
                let f: Vec<VectorField> =
                    (0..4).map(|_| Polynomial::random_field(n, 3, &mut rng)).collect();
                let r = h.f_identity_residual(&f[0], &f[1], &f[2], &f[3], &x).unwrap();
                assert!(r < 1e-6, "n={n} residual {r}");
            }
        }
    }

    #[test]
    fn spd_f_identity_is_measured() {
        let cone = ConeSpec::SpdReal(2);
        let h = HessianStructure::from_cone(&cone).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = cone.sample_interior(&mut rng);
        let f: Vec<VectorField> = (0..4).map(|_| Polynomial::random_field(3, 2, &mut rng)).collect();
        let r = h.f_identity_residual(&f[0], &f[1], &f[2], &f[3], &x).unwrap();
        assert!(r.is_finite());
    }

    #[test]
    fn orthant_vector_potential() {
        let n = 3;
        let h = orthant(n);
        let c = VectorField::new(
            (0..n)
                .map(|k| ScalarField::new(n, move |x| &x[k] * x[k].ln() - &x[k]))
                .collect(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
            for i in 0..n {
                for j in 0..n {
                    assert!(h.vector_potential_residual(&c, i, j, &x).unwrap() < 1e-8);
                }
            }
        }
        let zero = VectorField::constant(&[0.0; 3]);
        let x = [1.0, 2.0, 4.0];
        let r = h.vector_potential_residual(&zero, 1, 1, &x).unwrap();
        assert!((r - 0.5).abs() < 1e-14);
        assert_eq!(h.vector_potential_residual(&zero, 0, 1, &x).unwrap(), 0.0);
    }

    #[test]
    fn curvature_modes() {
        let h = orthant(3);
        let x = [0.5, 1.5, 2.0];
        assert_eq!(h.connection_curvature(&x, ConnectionMode::ZeroGamma).unwrap().max_abs(), 0.0);
        assert!(h.connection_curvature(&x, ConnectionMode::FullGamma).unwrap().max_abs() < 1e-10);
        let one = orthant(1);
        for mode in [
            ConnectionMode::LeviCivitaHalf,
            ConnectionMode::FullGamma,
            ConnectionMode::ZeroGamma,
        ] {
            assert!(one.connection_curvature(&[1.7], mode).unwrap().max_abs() < 1e-12);
        }
        // the Levi-Civita connection of spd:2 is curved; its dual pair is flat
        let cone = ConeSpec::SpdReal(2);
        let spd = HessianStructure::from_cone(&cone).unwrap();
        let x = cone.unit_point();
        assert!(spd.connection_curvature(&x, ConnectionMode::FullGamma).unwrap().max_abs() < 1e-10);
        assert!(
            spd.connection_curvature(&x, ConnectionMode::LeviCivitaHalf)
                .unwrap()
                .max_abs()
                > 1e-3
        );
    }

    #[test]
    fn connection_derivatives_match_differences() {
        let cone = ConeSpec::SpdReal(2);
        let h = HessianStructure::from_cone(&cone).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = cone.sample_interior(&mut rng);
        let lc = h.local_connection(&x, ConnectionMode::FullGamma).unwrap();
        let step = 1e-5;
        for m in 0..3 {
            let mut p = x.clone();
            let mut q = x.clone();
            p[m] += step;
            q[m] -= step;
            let gp = h.christoffel_mode(&p, ConnectionMode::FullGamma).unwrap().0;
            let gq = h.christoffel_mode(&q, ConnectionMode::FullGamma).unwrap().0;
            let fd = Tensor3::from_fn(3, |i, j, k| (gp.get(i, j, k) - gq.get(i, j, k)) / (2.0 * step));
            assert!(lc.dgamma[m].max_abs_diff(&fd) < 1e-6);
        }
    }

    #[test]
    fn half_connection_is_half_of_full() {
        let cone = ConeSpec::HermComplex(2);
        let h = HessianStructure::from_cone(&cone).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = cone.sample_interior(&mut rng);
        let half = h.christoffel_at(&x).unwrap().0;
        let full = h.christoffel_mode(&x, ConnectionMode::FullGamma).unwrap().0;
        assert!(half.max_abs_diff(&full.scaled(0.5)) < 1e-10);
    }

    #[test]
    fn geodesics() {
        let one = orthant(1);
        let path = one
            .geodesic_shoot(&[1.0], &[1.0], 1.0, 1000, ConnectionMode::LeviCivitaHalf)
            .unwrap();
        assert!((path[1000][0] - 1f64.exp()).abs() < 1e-6);

        let h = orthant(2);
        let path = h
            .geodesic_shoot(&[1.0, 2.0], &[0.5, -0.25], 2.0, 50, ConnectionMode::ZeroGamma)
            .unwrap();
        let end = &path[50];
        assert!((end[0] - 2.0).abs() < 1e-12 && (end[1] - 1.5).abs() < 1e-12);

        let fwd = h
            .geodesic_shoot(&[1.0, 2.0], &[0.3, 0.2], 1.0, 1000, ConnectionMode::LeviCivitaHalf)
            .unwrap();
        // reverse: restart at the endpoint with the final velocity negated
        let n = fwd.len();
        let back_v = {
            // exact velocity along x(t) = x0·exp(v0 t / x0)
            let x0 = [1.0f64, 2.0];
            let v0 = [0.3f64, 0.2];
            (0..2)
                .map(|i| -v0[i] * (v0[i] / x0[i]).exp())
                .collect::<Vec<f64>>()
        };
        let back = h
            .geodesic_shoot(&fwd[n - 1], &back_v, 1.0, 1000, ConnectionMode::LeviCivitaHalf)
            .unwrap();
        assert!((back[1000][0] - 1.0).abs() < 1e-6 && (back[1000][1] - 2.0).abs() < 1e-6);

        match h.geodesic_shoot(&[1.0, 1.0], &[-2.0, 0.0], 1.0, 100, ConnectionMode::ZeroGamma) {
            Err(GeometryError::LeftDomain { last, .. }) => assert!(last[0] > 0.0),
            other => panic!("expected LeftDomain, got {other:?}"),
        }
    }
}
