use fgeom::cones::ConeSpec;
use fgeom::diffcore::{Jet, ScalarField};
use fgeom::hessian_geometry::{ConnectionMode, HessianStructure};
use fgeom::saito::{export_frobenius_data, UnfoldingAn};
use fgeom::statman::{
    coarse_grain, fisher_metric, markov_apply, simplex_geodesic, simplex_to_cone,
    FiniteDistribution, FisherNormalization, MarkovKernel, PartitionSigmaAlgebra,
};
use fgeom::wdvv::FrobeniusPotentialData;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interior(n: usize, rng: &mut ChaCha8Rng) -> FiniteDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    FiniteDistribution::new(w.iter().map(|v| v / s).collect()).unwrap()
}

fn tangent(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    u
}

#[test]
fn exported_potential_survives_json_and_passes_wdvv() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 3] {
        let ex = export_frobenius_data(n).unwrap();
        let text = ex.data.to_json().unwrap();
        let back = FrobeniusPotentialData::from_json(&text).unwrap();
        assert_eq!(back.identity(), ex.data.identity());
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(back.wdvv_residual(&x).unwrap() < 1e-8);
            assert!(back.identity_check(&x).unwrap() < 1e-9);
            let a = back.structure_constants(&x).unwrap();
            let b = ex.data.structure_constants(&x).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }
}

#[test]
fn flat_metric_is_the_exported_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [2, 3] {
        let ex = export_frobenius_data(n).unwrap();
        for _ in 0..10 {
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = ex.flat.metric_at(&s);
            assert!((g - ex.data.metric()).amax() < 1e-8, "n={n} s={s:?}");
        }
    }
}

// The residue metric pulled back through the flat chart must agree with a
// direct computation on the unfolding at the mapped parameters.
#[test]
fn flat_chart_pullback_matches_unfolding() {
    let ex = export_frobenius_data(3).unwrap();
    let s = [0.3, -0.2, 0.5];
    let t = ex.flat.to_t(&s);
    let eta = UnfoldingAn::new(3, t).unwrap().residue_metric();
    let j = ex.flat.jacobian(&s);
    let pulled = j.transpose() * eta * j;
    assert!((pulled - ex.flat.metric_at(&s)).amax() < 1e-12);
}

#[test]
fn fisher_matches_orthant_hessian_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in 2..=5 {
        let h = HessianStructure::from_cone(&ConeSpec::Orthant(n)).unwrap();
        for _ in 0..50 {
            let d = interior(n, &mut rng);
            let x = simplex_to_cone(&d, 1.0).unwrap();
            let g = h.metric_at(&x).unwrap().g;
            let (u, v) = (tangent(n, &mut rng), tangent(n, &mut rng));
            let hess = (DMatrix::from_row_slice(1, n, &u) * &g * DMatrix::from_column_slice(n, 1, &v))[(0, 0)];
            let f = fisher_metric(&d, &u, &v, FisherNormalization::OrthantHessian).unwrap();
            assert!((f - hess).abs() <= 1e-10 * hess.abs().max(1.0));
        }
    }
}

#[test]
fn classical_fisher_is_entropy_hessian() {
    let n = 4;
    let entropy = ScalarField::new(n, |x: &[Jet]| x.iter().map(|v| v * v.ln()).sum());
    let h = HessianStructure::new(entropy);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let d = interior(n, &mut rng);
        let g = h.metric_at(d.probabilities()).unwrap().g;
        let (u, v) = (tangent(n, &mut rng), tangent(n, &mut rng));
        let direct: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| u[i] * g[(i, j)] * v[j])
            .sum();
        let f = fisher_metric(&d, &u, &v, FisherNormalization::Classical).unwrap();
        assert!((f - direct).abs() < 1e-10);
    }
}

#[test]
fn coarse_grain_is_indicator_pushforward() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let s = PartitionSigmaAlgebra::new(6, vec![vec![4, 0], vec![1, 2, 5], vec![3]]).unwrap();
    let k = s.indicator_kernel();
    for _ in 0..100 {
        let d = interior(6, &mut rng);
        assert_eq!(coarse_grain(&d, &s).unwrap(), markov_apply(&k, &d).unwrap());
    }
}

#[test]
fn kernels_move_geodesic_endpoints_consistently() {
    // A kernel is affine on distributions, so the image of the flat segment
    // is the flat segment between the images.
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let k = MarkovKernel::random(4, 3, &mut rng);
    let (d0, d1) = (interior(4, &mut rng), interior(4, &mut rng));
    let seg = simplex_geodesic(&d0, &d1, 40).unwrap();
    let (q0, q1) = (markov_apply(&k, &d0).unwrap(), markov_apply(&k, &d1).unwrap());
    for (step, x) in seg.path.iter().enumerate() {
        let t = step as f64 / 40.0;
        let q = markov_apply(&k, &FiniteDistribution::new(x.clone()).unwrap()).unwrap();
        for j in 0..3 {
            let line = (1.0 - t) * q0.probabilities()[j] + t * q1.probabilities()[j];
            assert!((q.probabilities()[j] - line).abs() < 1e-12);
        }
    }
}

#[test]
fn product_cone_geometry_splits() {
    let spec: ConeSpec = "product:orthant:2,spd:2".parse().unwrap();
    let h = HessianStructure::from_cone(&spec).unwrap();
    let ho = HessianStructure::from_cone(&ConeSpec::Orthant(2)).unwrap();
    let hs = HessianStructure::from_cone(&ConeSpec::SpdReal(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let x = spec.sample_interior(&mut rng);
        let g = h.metric_at(&x).unwrap().g;
        let go = ho.metric_at(&x[..2]).unwrap().g;
        let gs = hs.metric_at(&x[2..]).unwrap().g;
        assert!((g.view((0, 0), (2, 2)) - &go).amax() < 1e-10);
        assert!((g.view((2, 2), (3, 3)) - &gs).amax() < 1e-10);
        assert!(g.view((0, 2), (2, 3)).amax() < 1e-10);
        let r = h.connection_curvature(&x, ConnectionMode::FullGamma).unwrap();
        assert!(r.max_abs() < 1e-5);
    }
}
