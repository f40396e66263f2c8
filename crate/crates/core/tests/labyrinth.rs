mod common;

use common::c;
use fluxiso::isotopy::{constant_isotopy, IsotopyOptions};
use fluxiso::labyrinth::*;
use fluxiso::laurent::Laurent;
use fluxiso::riemann::Theta;
use fluxiso::vec3::*;
use fluxiso::weierstrass::{catalog, metric_density, WeierstrassData};
use fluxiso::{Error, C64};
use proptest::prelude::*;
use std::f64::consts::PI;

fn ts(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

const ENDS: [(f64, f64); 2] = [(0.5, 1.5), (1.0, 3.0)];

#[test]
fn bands_for_nonvanishing_data() {
    let set = find_bands(&ts(9), 0.5, &ENDS, &|_, _, _| c(1.0, 0.0)).unwrap();
    assert_eq!(set.brackets, vec![0.5, 1.0]);
    assert_eq!(set.bands.len(), 2);
    for (b, &(lo, hi)) in set.bands.iter().zip(&ENDS) {
        let mid = 0.5 * (lo + hi);
        assert!(b.r < mid && mid < b.big_r, "{b:?}");
    }
    assert!(set.check(&ENDS));
    assert!(set.min_abs.iter().all(|m| *m == 1.0));
}

#[test]
fn bands_avoid_a_moving_zero() {
    let f = |t: f64, end: usize, z: C64| if end == 0 { z - (0.8 + 0.1 * t) } else { c(1.0, 0.0) };
    let set = find_bands(&ts(17), 0.25, &ENDS, &f).unwrap();
    assert!(set.check(&ENDS));
    for (i, b) in set.bands.iter().enumerate().filter(|(_, b)| b.end == 0) {
        assert!(b.big_r < 0.8 || b.r > 0.9, "{b:?}");
        // Brute-force oracle: no zero of f on the band for the bracket.
        let (ta, tb) = set.bracket(b.k);
        for t in ts(17).into_iter().filter(|&t| t >= ta && t <= tb) {
            for k in 0..=50 {
                let r = b.r + (b.big_r - b.r) * k as f64 / 50.0;
                for a in 0..64 {
                    let v = f(t, 0, C64::from_polar(r, 2.0 * PI * a as f64 / 64.0)).norm();
                    assert!(v >= set.min_abs[i] * 0.999);
                }
            }
        }
    }
}

#[test]
fn no_band_when_everything_vanishes() {
    let r = find_bands(&ts(5), 0.5, &ENDS, &|_, _, _| c(0.0, 0.0));
    assert!(matches!(r, Err(Error::NoBandFound { .. })));
}

fn band() -> AnnulusBand {
    AnnulusBand { end: 0, k: 0, r: 1.0, big_r: 2.5 }
}

#[test]
fn labyrinth_examples() {
    assert_eq!(build_labyrinth(&band(), 2).unwrap().sets.len(), 8);
    let lab = build_labyrinth(&AnnulusBand { end: 0, k: 0, r: 1.0, big_r: 2.0 }, 3).unwrap();
    assert_eq!(lab.sets.len(), 18);
    for w in lab.sets.windows(2) {
        assert!((w[0].r_lo - w[1].r_hi - 1.0 / 54.0).abs() < 1e-15);
    }
    assert!(matches!(build_labyrinth(&AnnulusBand { end: 0, k: 0, r: 1.0, big_r: 2.0 }, 2), Err(Error::BandTooThin { n: 2 })));
}

/// Exhaustive pairwise check of radial ranges, plus the angular rule
/// arg((-1)^n zeta) in [1/N^2, 2 pi - 1/N^2] at probe points.
#[test]
fn labyrinth_sets_are_disjoint_and_alternate() {
    for n in 2..=6 {
        let lab = build_labyrinth(&band(), n).unwrap();
        let s = &lab.sets;
        assert_eq!(s.len(), 2 * n * n);
        for i in 0..s.len() {
            assert!(s[i].r_lo < s[i].r_hi && s[i].r_lo > 1.0 && s[i].r_hi < 2.5);
            for j in i + 1..s.len() {
                assert!(s[j].r_hi < s[i].r_lo || s[i].r_hi < s[j].r_lo);
            }
        }
        let gap = 1.0 / (n * n) as f64;
        for set in s {
            let r = 0.5 * (set.r_lo + set.r_hi);
            for k in 0..720 {
                let zeta = C64::from_polar(r, 2.0 * PI * (k as f64 + 0.25) / 720.0);
                let sign = if set.n % 2 == 0 { 1.0 } else { -1.0 };
                let a = (zeta * sign).arg().rem_euclid(2.0 * PI);
                assert_eq!(set.contains(zeta), a >= gap && a <= 2.0 * PI - gap, "n={n} set {}", set.n);
            }
        }
        let cert = lab.certify();
        assert!(cert.pairwise_disjoint && cert.clearances_exact && cert.inside_band);
        assert!(cert.max_gap_width < 1e-14);
    }
}

#[test]
fn lambda_and_epsilon() {
    // (1 + 62 * 1/2) * 1 = 32 = 2 * 2^4.
    assert_eq!(lambda_for(1.0, 2, 0.5, 0.0), 62.0);
    for n in 1..5 {
        let c0 = 0.5;
        assert_eq!(lambda_holds(0.0, 0.5, c0, n), c0 > 2.0 * (n as f64).powi(4));
    }
    let set = BandSet { brackets: vec![0.5, 1.0], bands: vec![AnnulusBand { end: 0, k: 0, r: 1.0, big_r: 2.5 }], min_abs: vec![1.0] };
    let one = |_: f64, _: usize, _: C64| c(1.0, 0.0);
    let p = choose_params(&ts(9), &set, 2, &one, &one, 0.1).unwrap();
    assert_eq!(p.epsilon, 0.5);
    assert_eq!(p.c0, 1.0);
    assert!((p.lambda - (35.2 - 1.0) / 0.5).abs() < 1e-12);
    // Without margin the strict inequality fails at t0.
    assert!(matches!(choose_params(&ts(9), &set, 2, &one, &one, 0.0), Err(Error::EstimateNotMet { .. })));
    let zero = |_: f64, _: usize, _: C64| c(0.0, 0.0);
    assert!(matches!(choose_params(&ts(9), &set, 2, &one, &zero, 0.1), Err(Error::GaussMapTooSmall(_))));
}

fn random_f(seed: u64) -> (C64, C64, C3) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = C64::from_polar(rng.gen_range(0.2..3.0), rng.gen_range(0.0..6.3));
    let f3 = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let f = fluxiso::weierstrass::assemble_f(g, f3).unwrap();
    (g, f3, f)
}

#[test]
fn lopez_ros_examples() {
    let (_, _, f) = random_f(1);
    let h = lopez_ros(&f, c(1.0, 0.0));
    assert!(cnorm(&csub(&h, &f)) <= 1e-15 * cnorm(&f));
    for seed in 0..50 {
        let (g, f3, f) = random_f(seed);
        let mu = 1.0 + 7.3 * (seed as f64 / 50.0);
        let h = lopez_ros(&f, c(mu, 0.0));
        assert_eq!(h[2], f[2]);
        let gh = h[2] / (h[0] - c(0.0, 1.0) * h[1]);
        assert!((gh - g * mu).norm() <= 1e-12 * (g * mu).norm());
        // Density in closed form, theta = dz.
        let want = 0.25 * (1.0 / (mu * g.norm()) + mu * g.norm()).powi(2) * f3.norm_sqr();
        let got = 0.5 * cnorm(&h).powi(2);
        assert!((got - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn est1_follows_from_the_lambda_inequality() {
    // |f3 theta / dzeta| >= eps and mu |g| > 2 N^4 give density > N^8 eps^2.
    for seed in 0..50 {
        let (g, f3, f) = random_f(seed);
        let n = 2 + (seed % 3) as usize;
        let eps = 0.5 * f3.norm();
        let mu = 2.0 * (n as f64).powi(4) / g.norm() * 1.01;
        let h = lopez_ros(&f, c(mu, 0.0));
        assert!(0.5 * cnorm(&h).powi(2) > (n as f64).powi(8) * eps * eps);
    }
}

fn flat_annulus_distance(n_r: usize, n_a: usize, scale: f64) -> f64 {
    let g = MetricGraph::uniform(c(0.0, 0.0), 1.0, 2.0, n_r, n_a);
    intrinsic_distance(&g, &|_| scale, c(1.0, 0.0), &[2.0], 1.0).unwrap().graph
}

#[test]
fn intrinsic_distance_examples() {
    let o = CompleteOptions::default();
    let d = flat_annulus_distance(o.n_radial, o.n_angular, 1.0);
    assert!((d - 1.0).abs() <= 0.02, "{d}");
    let fine = flat_annulus_distance(2 * o.n_radial, 2 * o.n_angular, 1.0);
    assert!((fine - d).abs() <= 0.01 * d);
    let four = flat_annulus_distance(o.n_radial, o.n_angular, 4.0);
    assert!((four - 2.0 * d).abs() <= 1e-12);
    // Off-axis start with a non-radial best path through a conformal metric:
    // density 1/|z|^2 makes the distance ln 2 from |z| = 1 to |z| = 2.
    let g = MetricGraph::uniform(c(0.0, 0.0), 1.0, 2.0, 256, 256);
    let d = intrinsic_distance(&g, &|z| 1.0 / z.norm_sqr(), C64::from_polar(1.0, 0.7), &[2.0], 1.0).unwrap();
    assert!((d.graph - 2f64.ln()).abs() <= 0.02 * 2f64.ln());
    let k = calibrate(&g, c(1.0, 0.0), &[2.0]).unwrap();
    assert!(k >= 1.0 - 1e-12 && k < 1.02);
}

#[test]
fn vanishing_density_is_rejected() {
    let g = MetricGraph::uniform(c(0.0, 0.0), 1.0, 2.0, 8, 8);
    assert!(intrinsic_distance(&g, &|_| 0.0, c(1.0, 0.0), &[2.0], 1.0).is_err());
}

#[test]
fn lopez_ros_density_matches_metric_density() {
    let data = WeierstrassData::gauss(Laurent::monomial(c(0.0, 0.0), 1, c(3.0, 0.0)), Laurent::constant(c(1.0, 0.0)), Theta::DzOverZ { center: c(0.0, 0.0) });
    let scaled = WeierstrassData::gauss(Laurent::monomial(c(0.0, 0.0), 1, c(1.0, 0.0)), Laurent::constant(c(1.0, 0.0)), Theta::DzOverZ { center: c(0.0, 0.0) });
    for k in 0..20 {
        let z = C64::from_polar(0.6 + 0.07 * k as f64, 0.3 * k as f64);
        let h = lopez_ros(&scaled.f(z), c(3.0, 0.0));
        let d = 0.5 * cnorm(&h).powi(2) * z.norm_sqr().recip();
        assert!((d - metric_density(&data, z)).abs() <= 1e-12 * d);
    }
}

#[test]
fn complete_step_rejects_bad_input() {
    let fam = constant_isotopy(&catalog("catenoid").unwrap(), &IsotopyOptions { n_t: 4, ..Default::default() }).unwrap();
    let core = AnnularCore { r_in: 0.8, r_out: 1.25 };
    let o = CompleteOptions::default();
    assert!(matches!(complete_step(&fam, core, c(1.0, 0.0), 0.0, &o), Err(Error::InvalidDelta(_))));
    assert!(complete_step(&fam, AnnularCore { r_in: 0.3, r_out: 1.25 }, c(1.0, 0.0), 0.5, &o).is_err());
    assert!(complete_step(&fam, core, c(1.9, 0.0), 0.5, &o).is_err());
    let flat = constant_isotopy(&catalog("flat_exponential").unwrap(), &IsotopyOptions { n_t: 4, ..Default::default() }).unwrap();
    assert!(matches!(complete_step(&flat, core, c(1.0, 0.0), 0.5, &o), Err(Error::FlatInput)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labyrinth_invariants(n in 1usize..8, r in 0.2f64..2.0, w in 0.0f64..3.0) {
        let b = AnnulusBand { end: 0, k: 0, r, big_r: r + 2.0 / n as f64 + 0.01 + w };
        let lab = build_labyrinth(&b, n).unwrap();
        let cert = lab.certify();
        prop_assert_eq!(cert.count, 2 * n * n);
        prop_assert!(cert.pairwise_disjoint && cert.clearances_exact && cert.inside_band);
    }

    #[test]
    fn located_points_lie_in_their_set(n in 2usize..5, rho in 0.0f64..1.0, a in 0.0f64..6.28) {
        let lab = build_labyrinth(&band(), n).unwrap();
        let zeta = C64::from_polar(1.0 + 1.5 * rho, a);
        match lab.locate(zeta) {
            Some(m) => prop_assert!(lab.sets[m].contains(zeta)),
            None => prop_assert!(lab.sets.iter().all(|s| !s.contains(zeta))),
        }
    }
}
