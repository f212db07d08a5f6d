//! Potential pre-Frobenius data in flat coordinates: structure constants,
//! associativity (WDVV) residuals and the curvature of the structure
//! connection pencil `∇_λ = ∇₀ + λ X∘`.
//!
//! Storage: structure constants `A^c_{ab}` live at `t[c][a][b]`; curvature
//! tensors `R^c_{dab}` at `t[c][d][a][b]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{
    eval_derivatives, DerivativeBundle, DiffError, Monomial, Polynomial, ScalarField,
};
use crate::tensor::{Tensor3, Tensor4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WdvvError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("no flat identity index set")]
    IdentityNotSet,
    #[error("metric is singular or not symmetric")]
    SingularMetric,
    #[error("invalid potential data: {0}")]
    InvalidData(String),
}

impl WdvvError {
    pub fn code(&self) -> &'static str {
        match self {
            WdvvError::Diff(e) => e.code(),
            WdvvError::IdentityNotSet => "identity_not_set",
            WdvvError::SingularMetric => "singular_metric",
            WdvvError::InvalidData(_) => "invalid_data",
        }
    }
}

/// A potential `Φ` with a constant metric and optional flat identity index.
#[derive(Debug, Clone)]
pub struct FrobeniusPotentialData {
    potential: ScalarField,
    poly: Option<Polynomial>,
    metric: DMatrix<f64>,
    metric_inv: DMatrix<f64>,
    identity: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct PotentialJson {
    vars: usize,
    metric: Vec<Vec<f64>>,
    #[serde(default)]
    identity: Option<usize>,
    poly: Vec<Monomial>,
}

impl FrobeniusPotentialData {
    pub fn new(
        potential: ScalarField,
        metric: DMatrix<f64>,
        identity: Option<usize>,
    ) -> Result<Self, WdvvError> {
        let n = potential.nvars();
        if metric.nrows() != n || metric.ncols() != n {
            return Err(WdvvError::InvalidData(format!(
                "metric is {}x{}, potential has {n} variables",
                metric.nrows(),
                metric.ncols()
            )));
        }
        if (&metric - metric.transpose()).abs().max() > 1e-12 * metric.abs().max().max(1.0) {
            return Err(WdvvError::SingularMetric);
        }
        if let Some(e) = identity {
            if e >= n {
                return Err(WdvvError::InvalidData(format!("identity index {e} out of range")));
            }
        }
        let metric_inv = metric.clone().try_inverse().ok_or(WdvvError::SingularMetric)?;
        if !metric_inv.iter().all(|v| v.is_finite()) {
            return Err(WdvvError::SingularMetric);
        }
        Ok(FrobeniusPotentialData {
            potential,
            poly: None,
            metric,
            metric_inv,
            identity,
        })
    }

    pub fn from_polynomial(
        poly: Polynomial,
        metric: DMatrix<f64>,
        identity: Option<usize>,
    ) -> Result<Self, WdvvError> {
        let mut d = FrobeniusPotentialData::new(poly.to_field(), metric, identity)?;
        d.poly = Some(poly);
        Ok(d)
    }

    pub fn from_json(text: &str) -> Result<Self, WdvvError> {
        let raw: PotentialJson =
            serde_json::from_str(text).map_err(|e| WdvvError::InvalidData(e.to_string()))?;
        if raw.poly.iter().any(|m| m.powers.len() != raw.vars) {
            return Err(WdvvError::InvalidData("monomial arity differs from vars".into()));
        }
        if raw.metric.len() != raw.vars || raw.metric.iter().any(|r| r.len() != raw.vars) {
            return Err(WdvvError::InvalidData("metric shape differs from vars".into()));
        }
        let n = raw.vars;
        let metric = DMatrix::from_fn(n, n, |i, j| raw.metric[i][j]);
        FrobeniusPotentialData::from_polynomial(Polynomial::new(n, raw.poly), metric, raw.identity)
    }

    /// JSON form; only available for polynomial potentials.
    pub fn to_json(&self) -> Result<String, WdvvError> {
        let poly = self
            .poly
            .clone()
            .ok_or_else(|| WdvvError::InvalidData("potential is not polynomial".into()))?;
        let n = self.dim();
        let raw = PotentialJson {
            vars: n,
            metric: (0..n)
                .map(|i| (0..n).map(|j| self.metric[(i, j)]).collect())
                .collect(),
            identity: self.identity,
            poly: poly.terms().to_vec(),
        };
        serde_json::to_string_pretty(&raw).map_err(|e| WdvvError::InvalidData(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.potential.nvars()
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn polynomial(&self) -> Option<&Polynomial> {
        self.poly.as_ref()
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn metric_inv(&self) -> &DMatrix<f64> {
        &self.metric_inv
    }

    pub fn identity(&self) -> Option<usize> {
        self.identity
    }

    pub fn with_identity(mut self, e: Option<usize>) -> Self {
        self.identity = e;
        self
    }

    /// 2-norm condition number of the metric.
    pub fn condition_number(&self) -> f64 {
        let s = self.metric.clone().singular_values();
        s.max() / s.min()
    }

    fn raise(&self, b: &DerivativeBundle) -> Tensor3 {
        let n = self.dim();
        let gi = &self.metric_inv;
        Tensor3::from_fn(n, |c, a, bb| {
            (0..n).map(|e| b.d3(a, bb, e) * gi[(e, c)]).sum()
        })
    }

    /// `A^c_{ab} = Σ_e ∂_a∂_b∂_eΦ · g^{ec}`.
    pub fn structure_constants(&self, x: &[f64]) -> Result<Tensor3, WdvvError> {
        let b = eval_derivatives(&self.potential, x, 3)?;
        Ok(self.raise(&b))
    }

    /// `max_{abcd} |Σ Φ_{abe}g^{ef}Φ_{fcd} − Σ Φ_{bce}g^{ef}Φ_{fad}|`.
    pub fn wdvv_residual(&self, x: &[f64]) -> Result<f64, WdvvError> {
        let n = self.dim();
        let b = eval_derivatives(&self.potential, x, 3)?;
        let a = self.raise(&b);
        // m[a][b][c][d] = Σ_f A^f_{ab} Φ_{fcd}
        let m = Tensor4::from_fn(n, |i, j, k, l| {
            (0..n).map(|f| a.get(f, i, j) * b.d3(f, k, l)).sum()
        });
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max((m.get(i, j, k, l) - m.get(j, k, i, l)).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// `max_b ‖∂_e∘∂_b − ∂_b‖₂`.
    pub fn identity_check(&self, x: &[f64]) -> Result<f64, WdvvError> {
        let e = self.identity.ok_or(WdvvError::IdentityNotSet)?;
        let n = self.dim();
        let a = self.structure_constants(x)?;
        let mut worst: f64 = 0.0;
        for bb in 0..n {
            let err: f64 = (0..n)
                .map(|c| {
                    let d = a.get(c, e, bb) - if c == bb { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err);
        }
        Ok(worst)
    }

    /// `g(∂_a∘∂_b, ∂_c)` minus its transposition `(a,b,c) → (b,c,a)`, max-norm.
    pub fn compatibility_residual(&self, x: &[f64]) -> Result<f64, WdvvError> {
        let n = self.dim();
        let a = self.structure_constants(x)?;
        let low = Tensor3::from_fn(n, |i, j, k| {
            (0..n).map(|c| a.get(c, i, j) * self.metric[(c, k)]).sum()
        });
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((low.get(i, j, k) - low.get(j, k, i)).abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn pencil_curvature(&self, x: &[f64]) -> Result<PencilCurvature, WdvvError> {
        let n = self.dim();
        let b = eval_derivatives(&self.potential, x, 4)?;
        let a = self.raise(&b);
        let gi = &self.metric_inv;
        // da[m] holds ∂_m A^c_{ab}
        let da: Vec<Tensor3> = (0..n)
            .map(|m| {
                Tensor3::from_fn(n, |c, i, j| {
                    (0..n).map(|e| b.d4(i, j, e, m) * gi[(e, c)]).sum()
                })
            })
            .collect();
        let r1 = Tensor4::from_fn(n, |c, d, i, j| da[i].get(c, d, j) - da[j].get(c, d, i));
        let r2 = Tensor4::from_fn(n, |c, d, i, j| {
            (0..n)
                .map(|m| a.get(c, i, m) * a.get(m, j, d) - a.get(c, j, m) * a.get(m, i, d))
                .sum()
        });
        Ok(PencilCurvature { r1, r2 })
    }
}

/// The two coefficients of the pencil curvature `λR₁ + λ²R₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PencilCurvature {
    pub r1: Tensor4,
    pub r2: Tensor4,
}

impl PencilCurvature {
    pub fn r1_norm(&self) -> f64 {
        self.r1.max_abs()
    }

    pub fn r2_norm(&self) -> f64 {
        self.r2.max_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Jet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn antidiag() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn two_d(quartic: bool) -> FrobeniusPotentialData {
        let mut terms: Vec<(f64, &[u32])> = vec![(0.5, &[2, 1])];
        if quartic {
            terms.push((1.0, &[0, 4]));
        }
        FrobeniusPotentialData::from_polynomial(Polynomial::from_terms(2, &terms), antidiag(), Some(0))
            .unwrap()
    }

    fn bad3d() -> FrobeniusPotentialData {
        let p = Polynomial::from_terms(3, &[(1.0, &[1, 1, 1]), (1.0, &[0, 0, 3])]);
        FrobeniusPotentialData::from_polynomial(p, DMatrix::identity(3, 3), None).unwrap()
    }

    /// Brute-force residual straight from the defining sums.
    fn residual_oracle(f: &FrobeniusPotentialData, x: &[f64]) -> f64 {
        let n = f.dim();
        let b = eval_derivatives(f.potential(), x, 3).unwrap();
        let gi = f.metric_inv();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for bb in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut l = 0.0;
                        let mut r = 0.0;
                        for e in 0..n {
                            for ff in 0..n {
                                l += b.d3(a, bb, e) * gi[(e, ff)] * b.d3(ff, c, d);
                                r += b.d3(bb, c, e) * gi[(e, ff)] * b.d3(ff, a, d);
                            }
                        }
                        worst = worst.max((l - r).abs());
                    }
                }
            }
        }
        worst
    }

    #[test]
    fn two_d_structure_constants() {
        let f = two_d(false);
        let a = f.structure_constants(&[0.7, -1.2]).unwrap();
        // ∂₁∘∂₁ = ∂₁, ∂₁∘∂₂ = ∂₂, ∂₂∘∂₂ = 0
        assert_eq!(a.get(0, 0, 0), 1.0);
        assert_eq!(a.get(1, 0, 0), 0.0);
        assert_eq!(a.get(1, 0, 1), 1.0);
        assert_eq!(a.get(1, 1, 0), 1.0);
        assert_eq!(a.get(0, 0, 1), 0.0);
        assert_eq!(a.get(0, 1, 1), 0.0);
        assert_eq!(a.get(1, 1, 1), 0.0);

        let q = two_d(true);
        let x = [0.3, 0.8];
        let a = q.structure_constants(&x).unwrap();
        assert!((a.get(0, 1, 1) - 24.0 * 0.8).abs() < 1e-12);
        assert_eq!(a.get(1, 1, 1), 0.0);
    }

    #[test]
    fn quadratic_potential_has_zero_constants() {
        let p = Polynomial::from_terms(2, &[(1.0, &[2, 0]), (3.0, &[1, 1])]);
        let f = FrobeniusPotentialData::from_polynomial(p, antidiag(), Some(1)).unwrap();
        assert_eq!(f.structure_constants(&[1.0, 2.0]).unwrap().max_abs(), 0.0);
        assert!((f.identity_check(&[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        let f = f.with_identity(Some(0));
        assert!((f.identity_check(&[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn structure_constants_symmetric_exactly() {
        let f = bad3d();
        let a = f.structure_constants(&[0.4, 1.1, -0.6]).unwrap();
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(a.get(c, i, j), a.get(c, j, i));
                }
            }
        }
    }

    #[test]
    fn residual_examples() {
        let one = FrobeniusPotentialData::from_polynomial(
            Polynomial::from_terms(1, &[(1.0, &[5])]),
            DMatrix::from_element(1, 1, 2.0),
            None,
        )
        .unwrap();
        assert_eq!(one.wdvv_residual(&[1.3]).unwrap(), 0.0);

        let q = two_d(true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(q.wdvv_residual(&x).unwrap() < 1e-10);
        }
        let bad = bad3d();
        let r = bad.wdvv_residual(&[1.0, 1.0, 1.0]).unwrap();
        assert!(r > 1e-3);
        assert!((r - residual_oracle(&bad, &[1.0, 1.0, 1.0])).abs() < 1e-12);
    }

    #[test]
    fn identity_examples() {
        assert!(two_d(true).identity_check(&[0.2, 0.9]).unwrap() < 1e-15);
        assert!(matches!(
            bad3d().identity_check(&[1.0, 1.0, 1.0]),
            Err(WdvvError::IdentityNotSet)
        ));
    }

    #[test]
    fn pencil_examples() {
        let q = two_d(true);
        let pc = q.pencil_curvature(&[0.5, -0.4]).unwrap();
        assert!(pc.r1_norm() < 1e-8 && pc.r2_norm() < 1e-10);
        let pc = bad3d().pencil_curvature(&[1.0, 1.0, 1.0]).unwrap();
        assert!(pc.r1_norm() < 1e-8);
        assert!(pc.r2_norm() > 1e-3);
    }

    fn random_potential(rng: &mut ChaCha8Rng, n: usize) -> FrobeniusPotentialData {
        let p = Polynomial::random(n, 4, rng);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &m + m.transpose() + DMatrix::identity(n, n) * 3.0;
        FrobeniusPotentialData::from_polynomial(p, g, None).unwrap()
    }

    #[test]
    fn r1_vanishes_and_r2_tracks_wdvv() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let f = if trial % 2 == 0 {
                random_potential(&mut rng, 3)
            } else {
                two_d(true)
            };
            let x: Vec<f64> = (0..f.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pc = f.pencil_curvature(&x).unwrap();
            assert!(pc.r1_norm() < 1e-8);
            let w = f.wdvv_residual(&x).unwrap();
            assert_eq!(w < 1e-8, pc.r2_norm() < 1e-8, "trial {trial}: {w} vs {}", pc.r2_norm());
        }
    }

    #[test]
    fn residual_verdict_survives_linear_change() {
        let s = [[1.0, 0.5, 0.0], [0.0, 2.0, -1.0], [0.3, 0.0, 1.0]];
        let transform = |f: &FrobeniusPotentialData| {
            let sm = DMatrix::from_fn(3, 3, |i, j| s[i][j]);
            let g2 = sm.transpose() * f.metric() * &sm;
            let phi = f.potential().clone();
            let field = ScalarField::new(3, move |y: &[Jet]| {
                let x: Vec<Jet> = (0..3)
                    .map(|i| (0..3).map(|j| &y[j] * s[i][j]).sum::<Jet>())
                    .collect();
                phi.eval_jet(&x).expect("polynomial potential")
            });
            FrobeniusPotentialData::new(field, g2, None).unwrap()
        };
        let bad = bad3d();
        let good = {
            // a product of two copies of the 2-d algebra restricted to 3 vars
            let p = Polynomial::from_terms(3, &[(0.5, &[2, 1, 0]), (1.0, &[0, 4, 0]), (1.0 / 6.0, &[0, 0, 3])]);
            let g = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
            FrobeniusPotentialData::from_polynomial(p, g, None).unwrap()
        };
        let y = [0.4, -0.3, 0.8];
        assert!(good.wdvv_residual(&y).unwrap() < 1e-10);
        assert!(transform(&good).wdvv_residual(&y).unwrap() < 1e-10);
        assert!(bad.wdvv_residual(&y).unwrap() > 1e-3);
        assert!(transform(&bad).wdvv_residual(&y).unwrap() > 1e-3);
    }

    #[test]
    fn metric_compatibility_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        for _ in 0..5 {
            let f = random_potential(&mut rng, 3);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(f.compatibility_residual(&x).unwrap() < 1e-10);
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"vars": 3, "metric": [[1,0,0],[0,1,0],[0,0,1]], "identity": null,
            "poly": [{"coef": 1.0, "powers": [1,1,1]}, {"coef": 1.0, "powers": [0,0,3]}]}"#;
        let f = FrobeniusPotentialData::from_json(text).unwrap();
        assert!(f.wdvv_residual(&[1.0, 1.0, 1.0]).unwrap() > 1e-3);
        let back = FrobeniusPotentialData::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back.polynomial(), f.polynomial());
        assert_eq!(back.metric(), f.metric());
        assert!((f.condition_number() - 1.0).abs() < 1e-12);

        let bad = r#"{"vars": 2, "metric": [[1,2],[2,4]], "poly": []}"#;
        assert_eq!(FrobeniusPotentialData::from_json(bad).unwrap_err().code(), "singular_metric");
        let ragged = r#"{"vars": 2, "metric": [[1,0]], "poly": []}"#;
        assert_eq!(FrobeniusPotentialData::from_json(ragged).unwrap_err().code(), "invalid_data");
    }
}
