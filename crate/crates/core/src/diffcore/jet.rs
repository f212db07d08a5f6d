//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] carries the Taylor coefficients of a smooth function around a
//! base point up to a fixed total degree. Arithmetic on jets is arithmetic on
//! truncated power series, so evaluating an ordinary formula on jets seeded
//! with `x_i + δ_i` yields every partial derivative up to the truncation order
//! in one pass. Coefficient of the monomial `δ^α` is `∂^α f / α!`.

use std::collections::HashMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

type SpaceCache = Mutex<HashMap<(usize, usize), Arc<JetSpace>>>;

/// Monomial layout and multiplication table for a given `(nvars, order)`.
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    products: Vec<(u32, u32, u32)>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("nvars", &self.nvars)
            .field("order", &self.order)
            .field("len", &self.monomials.len())
            .finish()
    }
}

fn enumerate_degree(nvars: usize, degree: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(pos: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e as u8;
            rec(pos + 1, left - e, cur, out);
        }
    }
    let mut cur = vec![0u8; nvars];
    rec(0, degree, &mut cur, out);
}

impl JetSpace {
    fn build(nvars: usize, order: usize) -> Self {
        assert!(nvars >= 1, "jet space needs at least one variable");
        let mut monomials = Vec::new();
        for d in 0..=order {
            enumerate_degree(nvars, d, &mut monomials);
        }
        let lookup: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::new();
        let mut sum = vec![0u8; nvars];
        for (a, ma) in monomials.iter().enumerate() {
            let da: usize = ma.iter().map(|&e| e as usize).sum();
            for (b, mb) in monomials.iter().enumerate() {
                let db: usize = mb.iter().map(|&e| e as usize).sum();
                if da + db > order {
                    // monomials are sorted by degree
                    break;
                }
                for k in 0..nvars {
                    sum[k] = ma[k] + mb[k];
                }
                let c = lookup[&sum];
                products.push((a as u32, b as u32, c as u32));
            }
        }
        JetSpace {
            nvars,
            order,
            monomials,
            lookup,
            products,
        }
    }

    /// Shared space for `nvars` variables truncated at total degree `order`.
    pub fn get(nvars: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<SpaceCache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, idx: usize) -> &[u8] {
        &self.monomials[idx]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }
}

/// Truncated Taylor expansion of a scalar quantity.
///
/// A jet without a space is a plain constant; it combines with any other jet.
#[derive(Clone)]
pub struct Jet {
    space: Option<Arc<JetSpace>>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet").field("coeffs", &self.coeffs).finish()
    }
}

impl From<f64> for Jet {
    fn from(c: f64) -> Self {
        Jet::constant(c)
    }
}

impl Jet {
    pub fn constant(c: f64) -> Self {
        Jet {
            space: None,
            coeffs: vec![c],
        }
    }

    /// The seed `value + δ_var` in `space`.
    pub fn variable(space: &Arc<JetSpace>, var: usize, value: f64) -> Self {
        assert!(var < space.nvars, "variable index out of range");
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        if space.order >= 1 {
            let mut e = vec![0u8; space.nvars];
            e[var] = 1;
            coeffs[space.lookup[&e]] = 1.0;
        }
        Jet {
            space: Some(space.clone()),
            coeffs,
        }
    }

    /// Seeds one variable jet per coordinate of `x`, truncated at `order`.
    pub fn seed(x: &[f64], order: usize) -> Vec<Jet> {
        let space = JetSpace::get(x.len(), order);
        x.iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(&space, i, v))
            .collect()
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn space(&self) -> Option<&Arc<JetSpace>> {
        self.space.as_ref()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_constant(&self) -> bool {
        self.space.is_none()
    }

    /// Taylor coefficient of `δ^exponents` (zero when beyond the truncation).
    pub fn coeff(&self, exponents: &[u8]) -> f64 {
        match &self.space {
            None => {
                if exponents.iter().all(|&e| e == 0) {
                    self.coeffs[0]
                } else {
                    0.0
                }
            }
            Some(s) => s.index_of(exponents).map_or(0.0, |i| self.coeffs[i]),
        }
    }

    fn zeros_like(space: &Arc<JetSpace>) -> Self {
        Jet {
            space: Some(space.clone()),
            coeffs: vec![0.0; space.len()],
        }
    }

    fn promote(&self, space: &Arc<JetSpace>) -> Jet {
        match &self.space {
            Some(_) => self.clone(),
            None => {
                let mut j = Jet::zeros_like(space);
                j.coeffs[0] = self.coeffs[0];
                j
            }
        }
    }

    fn common_space(a: &Jet, b: &Jet) -> Option<Arc<JetSpace>> {
        match (&a.space, &b.space) {
            (Some(sa), Some(sb)) => {
                assert!(
                    Arc::ptr_eq(sa, sb) || (sa.nvars == sb.nvars && sa.order == sb.order),
                    "mixing jets from different spaces"
                );
                Some(sa.clone())
            }
            (Some(s), None) | (None, Some(s)) => Some(s.clone()),
            (None, None) => None,
        }
    }

    fn mul_jets(a: &Jet, b: &Jet) -> Jet {
        match (&a.space, &b.space) {
            (None, _) => b.scale(a.coeffs[0]),
            (_, None) => a.scale(b.coeffs[0]),
            (Some(s), Some(_)) => {
                let mut out = vec![0.0; s.len()];
                for &(i, j, k) in &s.products {
                    out[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
                }
                Jet {
                    space: Some(s.clone()),
                    coeffs: out,
                }
            }
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    /// Composes a univariate function given its derivatives at the base value:
    /// `derivs[k] = f^(k)(value)`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let space = match &self.space {
            None => return Jet::constant(derivs[0]),
            Some(s) => s.clone(),
        };
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let mut out = Jet::zeros_like(&space);
        out.coeffs[0] = derivs[0];
        let mut power = delta.clone();
        let mut factorial = 1.0;
        for k in 1..=space.order.min(derivs.len() - 1) {
            factorial *= k as f64;
            let c = derivs[k] / factorial;
            for (o, p) in out.coeffs.iter_mut().zip(&power.coeffs) {
                *o += c * p;
            }
            if k < space.order {
                power = Jet::mul_jets(&power, &delta);
            }
        }
        out
    }

    fn order_hint(&self) -> usize {
        self.space.as_ref().map_or(0, |s| s.order)
    }

    pub fn ln(&self) -> Jet {
        let v = self.value();
        let n = self.order_hint();
        let mut d = vec![v.ln()];
        // (ln)^(k)(v) = (-1)^(k-1) (k-1)! / v^k
        let mut fact = 1.0;
        for k in 1..=n {
            if k > 1 {
                fact *= (k - 1) as f64;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign * fact / v.powi(k as i32));
        }
        self.compose(&d)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order_hint() + 1])
    }

    pub fn powf(&self, p: f64) -> Jet {
        let v = self.value();
        let n = self.order_hint();
        let mut d = Vec::with_capacity(n + 1);
        let mut falling = 1.0;
        for k in 0..=n {
            d.push(falling * v.powf(p - k as f64));
            falling *= p - k as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    /// Integer power by repeated multiplication (exact for polynomials).
    pub fn powi(&self, p: u32) -> Jet {
        let mut result = Jet::constant(1.0);
        let mut base = self.clone();
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                result = Jet::mul_jets(&result, &base);
            }
            e >>= 1;
            if e > 0 {
                base = Jet::mul_jets(&base, &base);
            }
        }
        result
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order_hint()).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order_hint()).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        match Jet::common_space(self, rhs) {
            None => Jet::constant(self.coeffs[0] + rhs.coeffs[0]),
            Some(s) => {
                let mut out = self.promote(&s);
                let r = rhs.promote(&s);
                for (o, v) in out.coeffs.iter_mut().zip(&r.coeffs) {
                    *o += v;
                }
                out
            }
        }
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self + &(-rhs)
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        Jet::mul_jets(self, rhs)
    }
}

impl Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        if rhs.is_constant() {
            return self.scale(1.0 / rhs.coeffs[0]);
        }
        Jet::mul_jets(self, &rhs.recip())
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet {
                (&self).$m(&Jet::constant(rhs))
            }
        }
        impl $tr<f64> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet {
                self.$m(&Jet::constant(rhs))
            }
        }
        impl $tr<Jet> for f64 {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&Jet::constant(self)).$m(&rhs)
            }
        }
        impl $tr<&Jet> for f64 {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&Jet::constant(self)).$m(rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        *self = &*self + rhs;
    }
}

impl AddAssign<Jet> for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self = &*self + &rhs;
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        *self = &*self - rhs;
    }
}

impl MulAssign<&Jet> for Jet {
    fn mul_assign(&mut self, rhs: &Jet) {
        *self = &*self * rhs;
    }
}

impl Sum for Jet {
    fn sum<I: Iterator<Item = Jet>>(iter: I) -> Jet {
        iter.fold(Jet::constant(0.0), |acc, j| acc + j)
    }
}

impl<'a> Sum<&'a Jet> for Jet {
    fn sum<I: Iterator<Item = &'a Jet>>(iter: I) -> Jet {
        iter.fold(Jet::constant(0.0), |acc, j| acc + j)
    }
}

/// Determinant of a square matrix of jets by Gaussian elimination without
/// pivoting. Valid whenever every leading principal minor is nonzero at the
/// base point, which covers positive-definite inputs.
pub fn jet_determinant(mut m: Vec<Vec<Jet>>) -> Jet {
    let n = m.len();
    let mut det = Jet::constant(1.0);
    for k in 0..n {
        let pivot = m[k][k].clone();
        det = &det * &pivot;
        if k + 1 == n {
            break;
        }
        let inv = pivot.recip();
        for i in (k + 1)..n {
            let factor = &m[i][k] * &inv;
            for j in (k + 1)..n {
                let t = &factor * &m[k][j];
                m[i][j] -= &t;
            }
        }
    }
    det
}
