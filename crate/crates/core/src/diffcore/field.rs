use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::jet::Jet;
use super::DiffError;

pub const MAX_ORDER: usize = 4;

type JetFn = Arc<dyn Fn(&[Jet]) -> Jet + Send + Sync>;
type PlainFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
type TensorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Taylor(JetFn),
    Plain(PlainFn),
}

/// How derivatives are obtained in [`eval_derivatives_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMethod {
    /// Analytic evaluators where present, then Taylor mode, then finite differences.
    Auto,
    /// Taylor mode only (ignores analytic evaluators).
    Taylor,
    /// Central differences with Richardson extrapolation.
    FiniteDifference,
}

/// A real-valued field on an open subset of `R^n`.
#[derive(Clone)]
pub struct ScalarField {
    nvars: usize,
    eval: Evaluator,
    domain: Option<DomainFn>,
    analytic: BTreeMap<usize, TensorFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("nvars", &self.nvars)
            .field("taylor", &matches!(self.eval, Evaluator::Taylor(_)))
            .field("analytic_orders", &self.analytic.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ScalarField {
    /// A field written against jet arithmetic; supports Taylor-mode derivatives.
    pub fn new<F>(nvars: usize, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    {
        ScalarField {
            nvars,
            eval: Evaluator::Taylor(Arc::new(f)),
            domain: None,
            analytic: BTreeMap::new(),
        }
    }

    /// A field with only a plain evaluator; derivatives fall back to finite differences.
    pub fn plain<F>(nvars: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            nvars,
            eval: Evaluator::Plain(Arc::new(f)),
            domain: None,
            analytic: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        ScalarField::new(nvars, move |_| Jet::constant(c))
    }

    pub fn zero(nvars: usize) -> Self {
        ScalarField::constant(nvars, 0.0)
    }

    /// The coordinate function `x_i`.
    pub fn coordinate(nvars: usize, i: usize) -> Self {
        ScalarField::new(nvars, move |x| x[i].clone())
    }

    pub fn with_domain<D>(mut self, d: D) -> Self
    where
        D: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(d));
        self
    }

    /// Registers a closed-form evaluator for the order-`order` derivative
    /// tensor, returned flattened row-major (`n^order` entries).
    pub fn with_analytic<F>(mut self, order: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        assert!(order <= MAX_ORDER);
        self.analytic.insert(order, Arc::new(f));
        self
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_taylor(&self) -> bool {
        matches!(self.eval, Evaluator::Taylor(_))
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.nvars
            && x.iter().all(|v| v.is_finite())
            && self.domain.as_ref().is_none_or(|d| d(x))
    }

    fn check_point(&self, x: &[f64]) -> Result<(), DiffError> {
        if x.len() != self.nvars {
            return Err(DiffError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        if !self.in_domain(x) {
            return Err(DiffError::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        match &self.eval {
            Evaluator::Plain(f) => f(x),
            Evaluator::Taylor(f) => {
                let c: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
                f(&c).value()
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, DiffError> {
        self.check_point(x)?;
        Ok(self.raw_value(x))
    }

    /// Evaluates on caller-supplied jets (composition with other jet code).
    pub fn eval_jet(&self, x: &[Jet]) -> Option<Jet> {
        match &self.eval {
            Evaluator::Taylor(f) => Some(f(x)),
            Evaluator::Plain(_) => None,
        }
    }

    /// Pointwise sum of two fields over the same variables.
    pub fn add(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.nvars, other.nvars);
        let (a, b) = (self.clone(), other.clone());
        let domain_a = self.domain.clone();
        let domain_b = other.domain.clone();
        let mut out = match (&a.eval, &b.eval) {
            (Evaluator::Taylor(fa), Evaluator::Taylor(fb)) => {
                let (fa, fb) = (fa.clone(), fb.clone());
                ScalarField::new(self.nvars, move |x| fa(x) + fb(x))
            }
            _ => ScalarField::plain(self.nvars, move |x| a.raw_value(x) + b.raw_value(x)),
        };
        if domain_a.is_some() || domain_b.is_some() {
            out.domain = Some(Arc::new(move |x| {
                domain_a.as_ref().is_none_or(|d| d(x)) && domain_b.as_ref().is_none_or(|d| d(x))
            }));
        }
        out
    }
}

/// Value and symmetric partial-derivative tensors of a scalar field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    nvars: usize,
    order: usize,
    /// `tensors[k]` is the flattened order-`k` tensor with `n^k` entries.
    tensors: Vec<Vec<f64>>,
}

impl DerivativeBundle {
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.tensors[0][0]
    }

    pub fn gradient(&self) -> &[f64] {
        &self.tensors[1]
    }

    pub fn tensor(&self, k: usize) -> &[f64] {
        &self.tensors[k]
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nvars, self.nvars, &self.tensors[2])
    }

    /// Partial derivative along the multi-index `idx` (any order of indices).
    pub fn partial(&self, idx: &[usize]) -> f64 {
        let k = idx.len();
        assert!(k <= self.order, "order {k} not computed");
        let mut flat = 0;
        for &i in idx {
            flat = flat * self.nvars + i;
        }
        self.tensors[k][flat]
    }

    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.tensors[3][(i * self.nvars + j) * self.nvars + k]
    }

    pub fn d4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.tensors[4][((i * self.nvars + j) * self.nvars + k) * self.nvars + l]
    }
}

/// Iterates all index tuples in `[0, n)^k`, row-major.
fn for_each_tuple(n: usize, k: usize, mut f: impl FnMut(usize, &[usize])) {
    let total = n.pow(k as u32);
    let mut idx = vec![0usize; k];
    for flat in 0..total {
        let mut r = flat;
        for slot in (0..k).rev() {
            idx[slot] = r % n;
            r /= n;
        }
        f(flat, &idx);
    }
}

fn tensors_from_jet(jet: &Jet, n: usize, order: usize) -> Vec<Vec<f64>> {
    let mut tensors = vec![vec![jet.value()]];
    for k in 1..=order {
        let mut t = vec![0.0; n.pow(k as u32)];
        let mut exps = vec![0u8; n];
        for_each_tuple(n, k, |flat, idx| {
            exps.iter_mut().for_each(|e| *e = 0);
            for &i in idx {
                exps[i] += 1;
            }
            // ∂^α f = α! · coefficient
            let fact: f64 = exps
                .iter()
                .map(|&e| (1..=e as u32).product::<u32>() as f64)
                .product();
            t[flat] = fact * jet.coeff(&exps);
        });
        tensors.push(t);
    }
    tensors
}

fn nested_central(f: &ScalarField, x: &[f64], idx: &[usize], steps: &[f64]) -> f64 {
    let k = idx.len();
    let mut acc = 0.0;
    let mut p = x.to_vec();
    for mask in 0..(1usize << k) {
        p.copy_from_slice(x);
        let mut sign = 1.0;
        for (bit, &i) in idx.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                p[i] -= steps[i];
                sign = -sign;
            } else {
                p[i] += steps[i];
            }
        }
        acc += sign * f.raw_value(&p);
    }
    let denom: f64 = idx.iter().map(|&i| 2.0 * steps[i]).product();
    acc / denom
}

fn tensors_by_differences(f: &ScalarField, x: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut tensors = vec![vec![f.raw_value(x)]];
    for k in 1..=order {
        let base = f64::EPSILON.powf(1.0 / (k as f64 + 2.0));
        let h: Vec<f64> = x.iter().map(|v| base * v.abs().max(1.0)).collect();
        let h2: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
        let mut t = vec![0.0; n.pow(k as u32)];
        let mut cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for_each_tuple(n, k, |flat, idx| {
            let mut key = idx.to_vec();
            key.sort_unstable();
            let v = *cache.entry(key.clone()).or_insert_with(|| {
                let coarse = nested_central(f, x, &key, &h);
                let fine = nested_central(f, x, &key, &h2);
                // error expansion of central differences is even in h
                (4.0 * fine - coarse) / 3.0
            });
            t[flat] = v;
        });
        tensors.push(t);
    }
    tensors
}

/// Partial derivatives of `f` at `x` through `order`, automatic method.
pub fn eval_derivatives(
    f: &ScalarField,
    x: &[f64],
    order: usize,
) -> Result<DerivativeBundle, DiffError> {
    eval_derivatives_with(f, x, order, DiffMethod::Auto)
}

pub fn eval_derivatives_with(
    f: &ScalarField,
    x: &[f64],
    order: usize,
    method: DiffMethod,
) -> Result<DerivativeBundle, DiffError> {
    if order > MAX_ORDER {
        return Err(DiffError::OrderUnsupported(order));
    }
    f.check_point(x)?;
    let n = x.len();
    let mut tensors = match (&f.eval, method) {
        (Evaluator::Taylor(g), DiffMethod::Auto | DiffMethod::Taylor) => {
            let seeds = Jet::seed(x, order);
            tensors_from_jet(&g(&seeds), n, order)
        }
        _ => tensors_by_differences(f, x, order),
    };
    if method == DiffMethod::Auto {
        for (&k, g) in f.analytic.range(..=order) {
            let t = g(x);
            assert_eq!(t.len(), n.pow(k as u32), "analytic tensor of wrong size");
            tensors[k] = t;
        }
    }
    Ok(DerivativeBundle {
        nvars: n,
        order,
        tensors,
    })
}

/// A tangent field given by component functions in ambient coordinates.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Self {
        assert!(!components.is_empty());
        let n = components[0].nvars();
        assert!(components.iter().all(|c| c.nvars() == n));
        VectorField { components }
    }

    /// The constant field with the given components.
    pub fn constant(v: &[f64]) -> Self {
        let n = v.len();
        VectorField::new(v.iter().map(|&c| ScalarField::constant(n, c)).collect())
    }

    /// The coordinate field `∂_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        VectorField::constant(&v)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>, DiffError> {
        self.components.iter().map(|c| c.value(x)).collect()
    }

    /// Values and Jacobian `jac[i][m] = ∂_m V^i` at `x`.
    pub fn jet1(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), DiffError> {
        let mut value = Vec::with_capacity(self.dim());
        let mut jac = Vec::with_capacity(self.dim());
        for c in &self.components {
            let b = eval_derivatives(c, x, 1)?;
            value.push(b.value());
            jac.push(b.gradient().to_vec());
        }
        Ok((value, jac))
    }

    /// Component-wise second derivatives `hess[i]` of `V^i` at `x`.
    pub fn hessians(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, DiffError> {
        self.components
            .iter()
            .map(|c| eval_derivatives(c, x, 2).map(|b| b.hessian()))
            .collect()
    }
}

/// `[X, Y](x) = (J_Y X - J_X Y)(x)`.
pub fn lie_bracket(xf: &VectorField, yf: &VectorField, x: &[f64]) -> Result<Vec<f64>, DiffError> {
    if xf.dim() != yf.dim() {
        return Err(DiffError::DimensionMismatch {
            expected: xf.dim(),
            got: yf.dim(),
        });
    }
    let (xv, xj) = xf.jet1(x)?;
    let (yv, yj) = yf.jet1(x)?;
    let n = xf.dim();
    Ok((0..n)
        .map(|i| (0..n).map(|m| xv[m] * yj[i][m] - yv[m] * xj[i][m]).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_third_partials() {
        let f = ScalarField::new(2, |x| &x[0] * &x[0] * &x[1]);
        let b = eval_derivatives(&f, &[3.0, 5.0], 3).unwrap();
        assert_eq!(b.value(), 45.0);
        assert_eq!(b.partial(&[0, 0, 1]), 2.0);
        assert_eq!(b.partial(&[1, 0, 0]), 2.0);
        assert_eq!(b.partial(&[0, 0, 0]), 0.0);
    }

    #[test]
    fn constant_field_has_zero_partials() {
        let f = ScalarField::constant(3, 7.0);
        let b = eval_derivatives(&f, &[0.1, -2.0, 5.0], 2).unwrap();
        assert_eq!(b.value(), 7.0);
        assert!(b.gradient().iter().all(|&v| v == 0.0));
        assert!(b.tensor(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minus_log_third_derivative_all_paths() {
        let taylor = ScalarField::new(1, |x| -x[0].ln()).with_domain(|x| x[0] > 0.0);
        let plain = ScalarField::plain(1, |x| -x[0].ln()).with_domain(|x| x[0] > 0.0);
        let t = eval_derivatives(&taylor, &[2.0], 3).unwrap();
        assert!((t.partial(&[0, 0, 0]) + 0.25).abs() < 1e-15);
        let fd = eval_derivatives(&plain, &[2.0], 3).unwrap();
        assert!((fd.partial(&[0, 0, 0]) + 0.25).abs() < 1e-6);
    }

    #[test]
    fn analytic_evaluator_takes_precedence() {
        let f = ScalarField::new(1, |x| x[0].powi(3)).with_analytic(2, |x| vec![6.0 * x[0] + 1.0]);
        let b = eval_derivatives(&f, &[1.0], 2).unwrap();
        assert_eq!(b.partial(&[0, 0]), 7.0);
        let t = eval_derivatives_with(&f, &[1.0], 2, DiffMethod::Taylor).unwrap();
        assert_eq!(t.partial(&[0, 0]), 6.0);
    }

    #[test]
    fn domain_and_order_errors() {
        let f = ScalarField::new(1, |x| x[0].ln()).with_domain(|x| x[0] > 0.0);
        assert!(matches!(
            eval_derivatives(&f, &[-1.0], 1),
            Err(DiffError::Domain { .. })
        ));
        assert_eq!(
            eval_derivatives(&f, &[1.0], 5),
            Err(DiffError::OrderUnsupported(5))
        );
        assert!(matches!(
            eval_derivatives(&f, &[1.0, 2.0], 1),
            Err(DiffError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bracket_of_coordinate_fields_vanishes() {
        let d1 = VectorField::coordinate(2, 0);
        let d2 = VectorField::coordinate(2, 1);
        assert_eq!(lie_bracket(&d1, &d2, &[0.3, 0.7]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn bracket_hand_example() {
        // X = x2 ∂1, Y = ∂2 → [X, Y] = -∂1
        let xf = VectorField::new(vec![ScalarField::coordinate(2, 1), ScalarField::zero(2)]);
        let yf = VectorField::coordinate(2, 1);
        assert_eq!(lie_bracket(&xf, &yf, &[1.0, 1.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(lie_bracket(&xf, &xf, &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }
}
