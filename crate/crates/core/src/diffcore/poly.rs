use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{ScalarField, VectorField};
use super::jet::Jet;

/// One term `coef · Π x_i^{powers[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Sparse multivariate polynomial with real coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(nvars: usize, terms: Vec<Monomial>) -> Self {
        assert!(
            terms.iter().all(|t| t.powers.len() == nvars),
            "monomial arity differs from nvars"
        );
        Polynomial { nvars, terms }
    }

    pub fn zero(nvars: usize) -> Self {
        Polynomial::new(nvars, Vec::new())
    }

    /// Convenience constructor from `(coef, powers)` pairs.
    pub fn from_terms(nvars: usize, terms: &[(f64, &[u32])]) -> Self {
        Polynomial::new(
            nvars,
            terms
                .iter()
                .map(|(c, p)| Monomial {
                    coef: *c,
                    powers: p.to_vec(),
                })
                .collect(),
        )
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.powers.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coef
                    * t.powers
                        .iter()
                        .zip(x)
                        .map(|(&p, &v)| v.powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn eval_jet(&self, x: &[Jet]) -> Jet {
        let mut acc = Jet::constant(0.0);
        for t in &self.terms {
            let mut m = Jet::constant(t.coef);
            for (v, &p) in x.iter().zip(&t.powers) {
                if p > 0 {
                    m = &m * &v.powi(p);
                }
            }
            acc += m;
        }
        acc
    }

    pub fn to_field(&self) -> ScalarField {
        let p = self.clone();
        ScalarField::new(self.nvars, move |x| p.eval_jet(x))
    }

    /// Uniform coefficients in `[-1, 1]` on every monomial of degree ≤ `degree`.
    pub fn random<R: Rng + ?Sized>(nvars: usize, degree: u32, rng: &mut R) -> Self {
        let mut terms = Vec::new();
        let mut powers = vec![0u32; nvars];
        fn rec<R: Rng + ?Sized>(
            pos: usize,
            left: u32,
            powers: &mut Vec<u32>,
            terms: &mut Vec<Monomial>,
            rng: &mut R,
        ) {
            if pos == powers.len() {
                terms.push(Monomial {
                    coef: rng.random_range(-1.0..=1.0),
                    powers: powers.clone(),
                });
                return;
            }
            for e in 0..=left {
                powers[pos] = e;
                rec(pos + 1, left - e, powers, terms, rng);
            }
            powers[pos] = 0;
        }
        rec(0, degree, &mut powers, &mut terms, rng);
        Polynomial::new(nvars, terms)
    }

    /// Random polynomial vector field with components of degree ≤ `degree`.
    pub fn random_field<R: Rng + ?Sized>(nvars: usize, degree: u32, rng: &mut R) -> VectorField {
        VectorField::new(
            (0..nvars)
                .map(|_| Polynomial::random(nvars, degree, rng).to_field())
                .collect(),
        )
    }
}
