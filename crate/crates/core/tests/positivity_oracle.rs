//! Positivity verdicts against a root-free oracle: the characteristic
//! polynomial of the `e₊` factor is real-rooted exactly when its discriminant
//! is nonnegative, and a real-rooted polynomial has only positive roots
//! exactly when its coefficients alternate in sign.

use fgeom::paracomplex::{pcm_positivity, random_positive_plus, ParacomplexMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Monic characteristic polynomial `λⁿ + c₁λⁿ⁻¹ + … + cₙ`, returned as `[1, c₁, …]`.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    match n {
        1 => vec![1.0, -a[(0, 0)]],
        2 => vec![1.0, -a.trace(), a.determinant()],
        3 => {
            let minors = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
                + a[(0, 0)] * a[(2, 2)] - a[(0, 2)] * a[(2, 0)]
                + a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)];
            vec![1.0, -a.trace(), minors, -a.determinant()]
        }
        _ => unreachable!(),
    }
}

/// `None` when the discriminant sits too close to zero to call.
fn oracle(a: &DMatrix<f64>) -> Option<bool> {
    let c = char_poly(a);
    let disc = match c.len() {
        2 => 1.0,
        3 => c[1] * c[1] - 4.0 * c[2],
        4 => {
            let (b, cc, d) = (c[1], c[2], c[3]);
            18.0 * b * cc * d - 4.0 * b.powi(3) * d + b * b * cc * cc - 4.0 * cc.powi(3) - 27.0 * d * d
        }
        _ => unreachable!(),
    };
    let scale = a.norm().powi(2 * (c.len() as i32 - 1)).max(1e-300);
    if disc.abs() < 1e-9 * scale {
        return None;
    }
    if disc < 0.0 {
        return Some(false);
    }
    // Sign of λⁿ⁻ᵏ coefficient must be (−1)ᵏ.
    Some(c.iter().enumerate().all(|(k, &ck)| {
        let want = if k % 2 == 0 { 1.0 } else { -1.0 };
        ck * want > 0.0
    }))
}

fn draw(n: usize, kind: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    match kind {
        0 => random_positive_plus(n, rng),
        1 => -random_positive_plus(n, rng),
        2 => DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
        3 => {
            let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            (&s + s.transpose()) * 0.5 + DMatrix::identity(n, n) * rng.random_range(0.0..2.0)
        }
        _ => {
            // rotation-like block: complex pair on top of a positive shift
            let mut m = random_positive_plus(n, rng);
            if n > 1 {
                let w = rng.random_range(0.5..2.0);
                m[(0, 1)] += w;
                m[(1, 0)] -= w;
            }
            m
        }
    }
}

#[test]
fn positivity_matches_discriminant_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut decided = 0;
    let mut positives = 0;
    let mut total = 0;
    while total < 200 {
        let n = 1 + total % 3;
        let plus = draw(n, (total / 3) % 5, &mut rng);
        total += 1;
        let m = ParacomplexMatrix::self_adjoint_from_plus(&plus);
        let verdict = pcm_positivity(&m).unwrap().positive;
        let Some(expected) = oracle(&plus) else { continue };
        decided += 1;
        positives += expected as usize;
        assert_eq!(verdict, expected, "plus = {plus}");
    }
    assert!(decided >= 190, "only {decided} of 200 cases decidable");
    assert!(positives > 40 && positives < decided - 40, "unbalanced sample: {positives}/{decided}");
}

#[test]
fn non_self_adjoint_is_rejected() {
    let plus = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let minus = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 1.0]);
    assert!(pcm_positivity(&ParacomplexMatrix::from_split(&plus, &minus)).is_err());
    let ok = ParacomplexMatrix::from_split(&plus, &plus.transpose());
    assert!(pcm_positivity(&ok).unwrap().positive);
}
