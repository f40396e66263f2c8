use fluxiso::nullquadric::*;
use fluxiso::path::PeriodicPath;
use fluxiso::vec3::*;
use fluxiso::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn norm_c(z: &C3) -> f64 {
    z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn close3(a: &C3, b: &C3, tol: f64) -> bool {
    (0..3).all(|i| (a[i] - b[i]).norm() <= tol)
}

#[test]
fn residual_examples() {
    assert_eq!(null_residual(&[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]), 0.0);
    assert_eq!(null_residual(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]), 1.0);
    assert_eq!(null_residual(&[c(0.0, 0.0), c(0.0, 2.0), c(2.0, 0.0)]), 0.0);
}

#[test]
fn spinor_map_examples() {
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    assert!(close3(&spinor_to_null(&SpinorPair::new(one, zero)), &[one, c(0.0, 1.0), zero], 0.0));
    assert!(close3(&spinor_to_null(&SpinorPair::new(one, one)), &[zero, c(0.0, 2.0), c(2.0, 0.0)], 0.0));
    assert!(close3(&spinor_to_null(&SpinorPair::new(zero, one)), &[-one, c(0.0, 1.0), zero], 0.0));
    let s = null_to_spinor(&[one, c(0.0, 1.0), zero], DEFAULT_TOL_NULL).unwrap();
    assert!(s.dist(&SpinorPair::new(one, zero)) < 1e-15);
    let s = null_to_spinor(&[zero, c(0.0, 2.0), c(2.0, 0.0)], DEFAULT_TOL_NULL).unwrap();
    assert!(s.dist(&SpinorPair::new(one, one)) < 1e-15);
}

/// Seeded brute force: 100 random spinors survive the round trip up to sign.
#[test]
fn spinor_round_trip_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let s = SpinorPair::new(c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)), c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
        let back = null_to_spinor(&spinor_to_null(&s), DEFAULT_TOL_NULL).unwrap();
        let d = back.dist(&s).min(back.dist(&s.neg()));
        assert!(d < 1e-12 * (1.0 + s.norm()), "{s:?} -> {back:?}");
    }
}

#[test]
fn fiber_point_examples() {
    let e1 = [1.0, 0.0, 0.0];
    let z = fiber_point(&e1, 0.0).unwrap();
    assert_eq!(real_projection(&z), e1);
    let n1 = im3(&z);
    assert!(dot3(&n1, &e1).abs() < 1e-15 && (norm3(&n1) - 1.0).abs() < 1e-15);
    assert!(null_residual(&z) < 1e-15);
    let w = fiber_point(&e1, 2.0 * PI).unwrap();
    assert!(close3(&z, &w, 1e-15));
    for k in 0..16 {
        let xi = [0.3, -1.2, 0.7];
        let p = fiber_point(&xi, k as f64 * 0.4).unwrap();
        assert_eq!(real_projection(&p), xi);
    }
}

#[test]
fn flow_examples() {
    let z = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)];
    let w = TangentFlow::Scaling.flow(&z, c(2f64.ln(), 0.0));
    assert!(close3(&w, &[c(2.0, 0.0), c(0.0, 2.0), c(0.0, 0.0)], 1e-15));
    assert_eq!(TangentFlow::Rotation(0, 1).flow(&z, c(0.0, 0.0)), z);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let t = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        assert!(null_residual(&TangentFlow::Rotation(0, 1).flow(&z, t)) < 1e-12);
    }
}

#[test]
fn pi1_examples() {
    let constant = PeriodicPath::from_fn(64, |_| [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
    assert_eq!(pi1_class(&constant).unwrap(), Z2::ZERO);
    // The continuous lift a(x) = e^{i pi x} ends at -a(0): class 1.
    let half = PeriodicPath::from_fn(256, |x| spinor_to_null(&SpinorPair::new(C64::from_polar(1.0, PI * x), c(0.0, 0.0)))).unwrap();
    assert_eq!(pi1_class(&half).unwrap(), Z2::ONE);
    assert_eq!(pi1_class(&half.concat(&half).unwrap()).unwrap(), Z2::ZERO);
}

/// A smooth loop in the quadric whose spinor lift is
/// e^{i pi k x} (p(x), q(x)) with trigonometric p, q and p near 1; its class
/// is k mod 2.
fn spinor_loop(k: i64, coef: &[(f64, f64)], n: usize) -> PeriodicPath {
    PeriodicPath::from_fn(n, |x| {
        let mut p = c(1.0, 0.0);
        let mut q = c(0.0, 0.0);
        for (m, &(a, b)) in coef.iter().enumerate() {
            let e = C64::from_polar(1.0, 2.0 * PI * (m as f64 + 1.0) * x);
            p += e * (0.3 * a / (m + 1) as f64);
            q += e.conj() * c(b, a);
        }
        let w = C64::from_polar(1.0, PI * k as f64 * x);
        spinor_to_null(&SpinorPair::new(w * p, w * q))
    })
    .unwrap()
}

fn coefs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spinor_image_is_null(a in (-3.0f64..3.0, -3.0f64..3.0), b in (-3.0f64..3.0, -3.0f64..3.0)) {
        let s = SpinorPair::new(c(a.0, a.1), c(b.0, b.1));
        let z = spinor_to_null(&s);
        let sq: C64 = z.iter().map(|v| v * v).sum();
        prop_assert!(sq.norm() <= 1e-14 * (1.0 + s.norm().powi(4)));
    }

    #[test]
    fn flow_group_laws(a in (-1.0f64..1.0, -1.0f64..1.0), b in (-1.0f64..1.0, -1.0f64..1.0), s in (-1.0f64..1.0, -1.0f64..1.0), t in (-1.0f64..1.0, -1.0f64..1.0), which in 0usize..4) {
        let f = TangentFlow::ALL[which];
        let z = spinor_to_null(&SpinorPair::new(c(a.0 + 1.5, a.1), c(b.0, b.1)));
        let (s, t) = (c(s.0, s.1), c(t.0, t.1));
        prop_assert_eq!(f.flow(&z, c(0.0, 0.0)), z);
        let two = f.flow(&f.flow(&z, s), t);
        let one = f.flow(&z, s + t);
        let scale = z.iter().map(|v| v.norm()).sum::<f64>() * 20.0;
        prop_assert!(close3(&two, &one, 1e-13 * scale));
        prop_assert!(null_residual(&one) < 1e-12);
    }

    #[test]
    fn class_matches_construction_and_resampling(k in 0i64..4, co in coefs()) {
        let want = Z2::from_int(k);
        for n in [64, 128, 256, 512, 1024] {
            prop_assert_eq!(pi1_class(&spinor_loop(k, &co, n)).unwrap(), want);
        }
    }

    #[test]
    fn class_stable_under_small_perturbation(k in 0i64..2, co in coefs(), seed in 0u64..1000) {
        let base = spinor_loop(k, &co, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = TangentFlow::ALL[rng.gen_range(0..4)];
        let (a, b) = (c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        // A smooth complex-time flow of size 1e-3 keeps the loop on the quadric.
        let pert = base.map(|j, z| f.flow(z, (a + b * (2.0 * PI * j as f64 / 256.0).cos()) * 1e-3));
        prop_assert!(pert.samples().iter().zip(base.samples()).all(|(p, q)| close3(p, q, 1e-2 * (1.0 + norm_c(q)))));
        prop_assert_eq!(pi1_class(&pert).unwrap(), Z2::from_int(k));
    }

    #[test]
    fn square_of_loop_is_trivial(k in 0i64..4, co in coefs()) {
        let g = spinor_loop(k, &co, 128);
        prop_assert_eq!(pi1_class(&g.concat(&g).unwrap()).unwrap(), Z2::ZERO);
    }
}
