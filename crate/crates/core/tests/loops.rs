mod common;

use common::{catenoid_loop, circle, random_circle};
use fluxiso::loops::*;
use fluxiso::nullquadric::{pi1_class, Z2};
use fluxiso::path::PeriodicPath;
use fluxiso::vec3::*;
use fluxiso::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

fn close3(a: &C3, b: &C3, tol: f64) -> bool {
    (0..3).all(|i| (a[i] - b[i]).norm() <= tol)
}

fn speed_fd(h: &[R3], k: usize) -> f64 {
    // Fourth-order central difference, independent of the spectral derivative.
    let n = h.len();
    let at = |d: isize| h[((k as isize + d).rem_euclid(n as isize)) as usize];
    let d = sub3(&add3(&scale3(8.0, &sub3(&at(1), &at(-1))), &at(-2)), &at(2));
    norm3(&d) * n as f64 / 12.0
}

#[test]
fn period_examples() {
    let osc = PeriodicPath::from_fn(64, |x| {
        let e = C64::from_polar(1.0, 2.0 * PI * x);
        [e, c(0.0, 1.0) * e, c(0.0, 0.0)]
    })
    .unwrap();
    assert!(close3(&period(&osc), &[c(0.0, 0.0); 3], 1e-15));
    let constant = PeriodicPath::from_fn(64, |_| [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
    assert!(close3(&period(&constant), &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)], 1e-15));
    // Constant Fourier coefficients: (0, 0, 1).
    let cat = PeriodicPath::from_fn(256, |x| {
        let em = C64::from_polar(1.0, -2.0 * PI * x);
        let e2 = C64::from_polar(1.0, 4.0 * PI * x);
        [em * (c(1.0, 0.0) - e2) * 0.5, c(0.0, 1.0) * em * (c(1.0, 0.0) + e2) * 0.5, c(1.0, 0.0)]
    })
    .unwrap();
    assert!(close3(&period(&cat), &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], 1e-15));
}

#[test]
fn circle_pair_lies_on_quadric() {
    let h: Vec<R3> = circle(256, 1.0 / (2.0 * PI));
    let dh = real_derivative(&h);
    // h' rotated by +90 degrees in the plane.
    let g: Vec<R3> = dh.iter().map(|d| [-d[1], d[0], 0.0]).collect();
    let p = ConformalPair::new(h, g).unwrap();
    assert!(p.residuals().max() < 1e-12);
    let s = pair_to_loop(&p);
    assert!(s.max_null_residual() < 1e-12);
    assert!(re3(&period(&s)).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn constant_pair_is_isotropic_vector() {
    let n = 64;
    let p = ConformalPair::from_derivative(vec![[1.0, 0.0, 0.0]; n], vec![[0.0, 1.0, 0.0]; n], 0, [0.0; 3]).unwrap();
    for z in pair_to_loop(&p).samples() {
        assert_eq!(*z, [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
    }
}

#[test]
fn zero_period_pair_on_round_circle() {
    let h = circle(256, 1.0);
    let z = make_zero_period_pair(&h, 1, 0.05).unwrap();
    assert!(z.pair.residuals().max() <= 1e-10);
    assert!(norm3(&z.pair.g_integral()) <= 1e-10);
    assert_eq!(pi1_class(&pair_to_loop(&z.pair)).unwrap(), Z2::ONE);
    // Every condition is homogeneous in h.
    let big: Vec<R3> = h.iter().map(|p| scale3(3.7, p)).collect();
    let zb = make_zero_period_pair(&big, 1, 0.05).unwrap();
    assert!(zb.pair.residuals().max() <= 1e-10);
    assert!(norm3(&zb.pair.g_integral()) / 3.7 <= 1e-10);
    assert_eq!(zb.spin_class, Z2::ONE);
}

#[test]
fn period_isotopy_already_at_target() {
    let p0 = loop_to_pair(&catenoid_loop(256), 0, [0.0; 3]);
    let fixed = Segment::new(0.0, 0.25).unwrap();
    let fam = prescribe_period_isotopy(&p0, p0.g_integral(), fixed, None, 8).unwrap();
    assert!(fam.max_device_correction <= 1e-9);
    for p in &fam.pairs {
        assert!(p.residuals().max() <= 1e-9);
        assert!(norm3(&sub3(&p.g_integral(), &p0.g_integral())) <= 1e-9);
    }
}

#[test]
fn catenoid_pair_to_zero_period() {
    let p0 = loop_to_pair(&catenoid_loop(256), 0, [0.0; 3]);
    let fixed = Segment::new(0.02, 0.16).unwrap();
    let fam = prescribe_period_isotopy(&p0, [0.0; 3], fixed, None, 64).unwrap();
    assert_eq!(fam.pairs.len(), 64);
    assert_eq!(fam.pairs[0], p0);
    assert!(norm3(&fam.pairs[63].g_integral()) <= 1e-8);
    for p in &fam.pairs {
        assert!(p.residuals().max() <= 1e-9);
        // Fixed on the fixed segment.
        for k in fixed.indices(256) {
            assert_eq!(p.dh[k], p0.dh[k]);
            assert_eq!(p.g[k], p0.g[k]);
            assert!(norm3(&sub3(&p.h[k], &p0.h[k])) <= 1e-12);
        }
    }
}

#[test]
fn connect_identical_curves() {
    let h = circle(64, 1.0);
    let path = connect_immersions(&h, &h, None, 8, 0).unwrap();
    assert_eq!(path.attempts, 1);
    assert!(path.curves.iter().all(|c| *c == h));
}

/// Brute-force minimum of |h_t'| over the grid of the path.
fn min_speed(path: &ImmersionPath) -> f64 {
    path.curves.iter().flat_map(|h| (0..h.len()).map(move |k| speed_fd(h, k))).fold(f64::INFINITY, f64::min)
}

#[test]
fn connect_circle_to_double() {
    let h0 = circle(256, 1.0);
    let h1 = circle(256, 2.0);
    let path = connect_immersions(&h0, &h1, None, 64, 0).unwrap();
    assert_eq!(path.attempts, 1);
    // |h_t'| = 2 pi (1 + t) >= 2 pi for the straight line; the oracle uses
    // finite differences on the sampled curves.
    assert!(min_speed(&path) >= 1.0);
}

#[test]
fn connect_circle_to_ellipse() {
    let h0 = circle(256, 1.0);
    let h1: Vec<R3> = h0.iter().map(|p| [p[0], 2.0 * p[1], 0.0]).collect();
    let path = connect_immersions(&h0, &h1, None, 64, 0).unwrap();
    assert!(min_speed(&path) > 0.0);
}

/// Complex singular values of the normalized samples on a segment.
fn sing_vals(sigma: &PeriodicPath, seg: &Segment) -> Vec<f64> {
    let idx = seg.indices(sigma.len());
    let m = DMatrix::from_fn(idx.len(), 3, |r, col| {
        let z = sigma.samples()[idx[r]];
        let n = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        z[col] / n
    });
    m.singular_values().iter().copied().collect()
}

#[test]
fn nondegeneracy_examples() {
    let constant = PeriodicPath::from_fn(64, |_| [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
    let seg = Segment::new(0.0, 0.5).unwrap();
    assert!(!nondegenerate_on(&constant, &seg).unwrap());
    let ray = PeriodicPath::from_fn(64, |x| {
        let e = C64::from_polar(1.0, 2.0 * PI * x);
        [e, c(0.0, 1.0) * e, c(0.0, 0.0)]
    })
    .unwrap();
    assert!(!nondegenerate_on(&ray, &seg).unwrap());
    let cat = catenoid_loop(256);
    let quarter = Segment::new(0.0, 0.25).unwrap();
    assert!(nondegenerate_on(&cat, &quarter).unwrap());
    // SVD oracle: the ray stays on one complex line, the catenoid arc does not.
    let s = sing_vals(&cat, &quarter);
    assert!(s[1] > 1e-3 * s[0], "{s:?}");
    let s = sing_vals(&ray, &seg);
    assert!(s[1] < 1e-12 * s[0], "{s:?}");
}

fn smooth_loop(co: &[(f64, f64)], n: usize) -> PeriodicPath {
    PeriodicPath::from_fn(n, |x| {
        let mut z = [c(0.5, 0.0), c(0.0, 0.0), c(0.0, -0.2)];
        for (m, &(a, b)) in co.iter().enumerate() {
            let e = C64::from_polar(1.0, 2.0 * PI * (m as f64 + 1.0) * x);
            z[m % 3] += e * c(a, b);
        }
        z
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn period_is_linear(co1 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6), co2 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6), a in (-2.0f64..2.0, -2.0f64..2.0), b in (-2.0f64..2.0, -2.0f64..2.0)) {
        let (s, t) = (smooth_loop(&co1, 128), smooth_loop(&co2, 128));
        let (a, b) = (c(a.0, a.1), c(b.0, b.1));
        let mix = PeriodicPath::new(s.samples().iter().zip(t.samples()).map(|(x, y)| std::array::from_fn(|i| a * x[i] + b * y[i])).collect()).unwrap();
        let (ps, pt, pm) = (period(&s), period(&t), period(&mix));
        for i in 0..3 {
            prop_assert!((pm[i] - (a * ps[i] + b * pt[i])).norm() < 1e-13);
        }
    }

    #[test]
    fn quadrature_converges(co in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12)) {
        let (p1, p2) = (period(&smooth_loop(&co, 256)), period(&smooth_loop(&co, 512)));
        prop_assert!(close3(&p1, &p2, 1e-12));
    }

    #[test]
    fn real_period_of_pair_vanishes(seed in 0u64..10_000) {
        let h = random_circle(seed, 256);
        let dh = real_derivative(&h);
        let g: Vec<R3> = dh.iter().map(|d| [-d[1], d[0], 0.0]).collect();
        let p = ConformalPair::new(h, g).unwrap();
        prop_assert!(re3(&period(&pair_to_loop(&p))).iter().all(|v| v.abs() < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn zero_period_pair_class(seed in 0u64..10_000, k in 0i64..4) {
        let h = random_circle(seed, 256);
        let z = make_zero_period_pair(&h, k, 0.05).unwrap();
        prop_assert!(z.pair.residuals().max() <= 1e-10);
        prop_assert!(norm3(&z.pair.g_integral()) <= 1e-10);
        prop_assert_eq!(pi1_class(&pair_to_loop(&z.pair)).unwrap(), Z2::from_int(k));
        prop_assert!(pair_to_loop(&z.pair).max_null_residual() < 1e-10);
    }
}
