//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use fluxiso::path::PeriodicPath;
use fluxiso::vec3::*;
use fluxiso::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Catenoid data restricted to the unit circle, (f theta)(dz/dx):
/// (2 pi sin 2 pi x, -2 pi cos 2 pi x, 2 pi i).
pub fn catenoid_loop(n: usize) -> PeriodicPath {
    PeriodicPath::from_fn(n, |x| {
        let p = 2.0 * PI * x;
        [c(2.0 * PI * p.sin(), 0.0), c(-2.0 * PI * p.cos(), 0.0), c(0.0, 2.0 * PI)]
    })
    .unwrap()
}

pub fn circle(n: usize, r: f64) -> Vec<R3> {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect()
}

/// Round circle plus a seeded smooth space perturbation with at most four
/// harmonics; the derivative of the perturbation stays below half the
/// circle's speed, so the curve is immersed.
pub fn random_circle(seed: u64, n: usize) -> Vec<R3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = vec![];
    let mut budget = 0.5;
    for m in 2..=5 {
        let amp: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let size = rng.gen_range(0.0..budget / 2.0);
        budget -= size;
        terms.push((m as f64, amp, size / (m as f64 * 6f64.sqrt())));
    }
    (0..n)
        .map(|k| {
            let x = k as f64 / n as f64;
            let a = 2.0 * PI * x;
            let mut p = [a.cos(), a.sin(), 0.0];
            for (m, amp, s) in &terms {
                let (cs, sn) = ((m * a).cos(), (m * a).sin());
                for i in 0..3 {
                    p[i] += s * (amp[2 * i] * cs + amp[2 * i + 1] * sn);
                }
            }
            p
        })
        .collect()
}
