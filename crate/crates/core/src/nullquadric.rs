//! The punctured null quadric {z1^2 + z2^2 + z3^2 = 0} \ {0}, its spinor
//! double cover, the real fibration over R^3 \ {0}, and the holomorphic
//! tangent flows used by sprays.

use crate::error::{Error, Result};
use crate::path::PeriodicPath;
use crate::vec3::*;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::ops::Add;

pub const DEFAULT_TOL_NULL: f64 = 1e-10;

/// Element of Z_2, written additively.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub struct Z2(pub u8);

impl Z2 {
    pub const ZERO: Z2 = Z2(0);
    pub const ONE: Z2 = Z2(1);
    pub fn from_int(k: i64) -> Z2 {
        Z2(k.rem_euclid(2) as u8)
    }
}

impl Add for Z2 {
    type Output = Z2;
    fn add(self, o: Z2) -> Z2 {
        Z2((self.0 + o.0) % 2)
    }
}

impl std::fmt::Display for Z2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinorPair {
    pub a: C64,
    pub b: C64,
}

impl SpinorPair {
    pub fn new(a: C64, b: C64) -> Self {
        SpinorPair { a, b }
    }
    pub fn neg(&self) -> Self {
        SpinorPair { a: -self.a, b: -self.b }
    }
    pub fn dist(&self, o: &SpinorPair) -> f64 {
        ((self.a - o.a).norm_sqr() + (self.b - o.b).norm_sqr()).sqrt()
    }
    pub fn norm(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr()).sqrt()
    }
}

/// A point xi + i eta of the quadric written through its real and imaginary
/// parts; xi . eta = 0 and |xi| = |eta| > 0.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RealFiberPoint {
    pub xi: R3,
    pub eta: R3,
}

/// Holomorphic vector fields tangent to the quadric. `Rotation(i, j)` is
/// z_i d/dz_j - z_j d/dz_i.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TangentFlow {
    Rotation(usize, usize),
    Scaling,
}

impl TangentFlow {
    pub const ALL: [TangentFlow; 4] = [
        TangentFlow::Rotation(0, 1),
        TangentFlow::Rotation(0, 2),
        TangentFlow::Rotation(1, 2),
        TangentFlow::Scaling,
    ];

    /// Value of the field at z.
    pub fn field(&self, z: &C3) -> C3 {
        match *self {
            TangentFlow::Rotation(i, j) => {
                let mut v = ZERO3;
                v[i] = -z[j];
                v[j] = z[i];
                v
            }
            TangentFlow::Scaling => *z,
        }
    }

    /// Complex-time flow, in closed form.
    pub fn flow(&self, z: &C3, t: C64) -> C3 {
        match *self {
            TangentFlow::Rotation(i, j) => {
                let (s, c) = (t.sin(), t.cos());
                let mut w = *z;
                w[i] = z[i] * c - z[j] * s;
                w[j] = z[j] * c + z[i] * s;
                w
            }
            TangentFlow::Scaling => cscale(t.exp(), z),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TangentFlow::Rotation(i, j) => format!("rot{}{}", i + 1, j + 1),
            TangentFlow::Scaling => "scale".into(),
        }
    }
}

/// |z1^2 + z2^2 + z3^2| / |z|^2, scale invariant.
pub fn null_residual(z: &C3) -> f64 {
    let n2 = cnorm(z).powi(2);
    if n2 == 0.0 {
        return 0.0;
    }
    csquare(z).norm() / n2
}

pub fn spinor_to_null(s: &SpinorPair) -> C3 {
    let a2 = s.a * s.a;
    let b2 = s.b * s.b;
    [a2 - b2, I * (a2 + b2), 2.0 * s.a * s.b]
}

/// Apply the branch rule: Re a >= 0, ties broken by Im a >= 0. When a = 0
/// the rule is applied to b.
fn canonical_sign(s: SpinorPair) -> SpinorPair {
    let key = if s.a != C64::new(0.0, 0.0) { s.a } else { s.b };
    if key.re < 0.0 || (key.re == 0.0 && key.im < 0.0) {
        s.neg()
    } else {
        s
    }
}

/// Inverse of the double cover, choosing the canonical branch.
pub fn null_to_spinor(z: &C3, tol: f64) -> Result<SpinorPair> {
    let n = cnorm(z);
    if n == 0.0 {
        return Err(Error::ZeroBase);
    }
    let r = null_residual(z);
    if r > tol {
        return Err(Error::NotOnQuadric { residual: r, tol });
    }
    let a2 = (z[0] - I * z[1]) * 0.5;
    let b2 = (-z[0] - I * z[1]) * 0.5;
    let s = if a2.norm() >= b2.norm() {
        let a = a2.sqrt();
        SpinorPair::new(a, z[2] / (2.0 * a))
    } else {
        let b = b2.sqrt();
        SpinorPair::new(z[2] / (2.0 * b), b)
    };
    Ok(canonical_sign(s))
}

/// The two-to-one nature of the cover: both lifts of z.
pub fn spinor_lifts(z: &C3, tol: f64) -> Result<[SpinorPair; 2]> {
    let s = null_to_spinor(z, tol)?;
    Ok([s, s.neg()])
}

pub fn real_projection(z: &C3) -> R3 {
    re3(z)
}

/// Orthonormal frame (n1, n2) of the plane orthogonal to xi, built from the
/// standard basis vector least aligned with xi.
pub fn normal_frame(xi: &R3) -> (R3, R3) {
    let u = normalize3(xi);
    let e = least_aligned_axis(&u);
    let n1 = normalize3(&sub3(&e, &scale3(dot3(&e, &u), &u)));
    let n2 = cross3(&u, &n1);
    (n1, n2)
}

/// Point of the fiber circle over xi at angle phi.
pub fn fiber_point(xi: &R3, phi: f64) -> Result<C3> {
    let r = norm3(xi);
    if r == 0.0 {
        return Err(Error::ZeroBase);
    }
    let (n1, n2) = normal_frame(xi);
    let eta = add3(&scale3(r * phi.cos(), &n1), &scale3(r * phi.sin(), &n2));
    Ok(complexify(xi, &eta))
}

pub fn split_fiber(z: &C3) -> RealFiberPoint {
    RealFiberPoint { xi: re3(z), eta: im3(z) }
}

/// Result of continuing a spinor lift around a sampled loop.
#[derive(Clone, Debug)]
pub struct SpinorLift {
    /// Lift in original index order; continuous except between
    /// `start - 1` and `start`.
    pub spinors: Vec<SpinorPair>,
    pub start: usize,
    /// True when the continued lift returns to its starting sign.
    pub closes: bool,
}

/// Largest accepted ratio min/max between the distances to the two sign
/// candidates. Above it the sign choice is not trustworthy.
const AMBIGUITY_RATIO: f64 = 0.5;

fn choose_sign(prev: &SpinorPair, s: SpinorPair, index: usize) -> Result<SpinorPair> {
    let dp = s.dist(prev);
    let dm = s.neg().dist(prev);
    let (lo, hi) = if dp <= dm { (dp, dm) } else { (dm, dp) };
    if hi == 0.0 || lo / hi > AMBIGUITY_RATIO {
        return Err(Error::UndersampledLoop { index });
    }
    Ok(if dp <= dm { s } else { s.neg() })
}

/// Continue a lift of the sampled loop starting at `start`.
pub fn lift_loop(samples: &[C3], start: usize, tol: f64) -> Result<SpinorLift> {
    let n = samples.len();
    let mut spinors = vec![SpinorPair::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); n];
    let first = null_to_spinor(&samples[start], tol)?;
    spinors[start] = first;
    let mut prev = first;
    for step in 1..n {
        let k = (start + step) % n;
        let s = null_to_spinor(&samples[k], tol)?;
        let s = choose_sign(&prev, s, k)?;
        spinors[k] = s;
        prev = s;
    }
    let back = choose_sign(&prev, first, start)?;
    Ok(SpinorLift { spinors, start, closes: back == first })
}

/// Homotopy class in pi_1(Q*) = Z_2 of a sampled loop: 0 when the spinor
/// lift closes, 1 when it returns with the opposite sign.
pub fn pi1_class(path: &PeriodicPath) -> Result<Z2> {
    pi1_class_samples(path.samples(), DEFAULT_TOL_NULL)
}

pub fn pi1_class_samples(samples: &[C3], tol: f64) -> Result<Z2> {
    let lift = lift_loop(samples, 0, tol)?;
    Ok(if lift.closes { Z2::ZERO } else { Z2::ONE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn spinor_examples() {
        let z = spinor_to_null(&SpinorPair::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0)));
        assert_eq!(z, [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let z = spinor_to_null(&SpinorPair::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0)));
        assert_eq!(z, [c(0.0, 0.0), c(0.0, 2.0), c(2.0, 0.0)]);
        let s = null_to_spinor(&z, 1e-12).unwrap();
        assert!((s.a - 1.0).norm() < 1e-15 && (s.b - 1.0).norm() < 1e-15);
    }

    #[test]
    fn branch_rule_on_imaginary_a() {
        // a = i: Re a = 0, Im a > 0 is kept.
        let s = SpinorPair::new(c(0.0, 1.0), c(0.3, 0.1));
        let t = null_to_spinor(&spinor_to_null(&s), 1e-12).unwrap();
        assert!(t.dist(&s) < 1e-14);
        let t = null_to_spinor(&spinor_to_null(&s.neg()), 1e-12).unwrap();
        assert!(t.dist(&s) < 1e-14);
    }

    #[test]
    fn rejects_off_quadric_and_zero() {
        assert!(matches!(null_to_spinor(&[c(1.0, 0.0), ZERO3[0], ZERO3[0]], 1e-10), Err(Error::NotOnQuadric { .. })));
        assert_eq!(null_to_spinor(&ZERO3, 1e-10), Err(Error::ZeroBase));
    }

    #[test]
    fn fiber_point_is_null() {
        let xi = [0.3, -2.0, 0.7];
        for k in 0..7 {
            let z = fiber_point(&xi, k as f64).unwrap();
            assert!(null_residual(&z) < 1e-15);
            assert_eq!(re3(&z), xi);
        }
    }

    #[test]
    fn rotation_flow_closed_form() {
        let z = [c(1.0, 0.2), c(0.0, 1.0), c(0.5, -0.5)];
        let f = TangentFlow::Rotation(0, 1);
        let t = c(0.3, 0.1);
        // Derivative of the flow at t equals the field at the flowed point.
        let h = 1e-6;
        let zp = f.flow(&z, t + h);
        let zm = f.flow(&z, t - h);
        let d = cscale(c(1.0 / (2.0 * h), 0.0), &csub(&zp, &zm));
        let v = f.field(&f.flow(&z, t));
        assert!(cnorm(&csub(&d, &v)) < 1e-8);
    }

    #[test]
    fn flows_preserve_quadric() {
        let z = spinor_to_null(&SpinorPair::new(c(0.7, 0.1), c(-0.2, 1.1)));
        for f in TangentFlow::ALL {
            let w = f.flow(&z, c(0.4, -0.9));
            assert!(null_residual(&w) < 1e-14);
        }
    }

    #[test]
    fn fiber_loop_is_nontrivial() {
        let n = 64;
        let s: Vec<C3> = (0..n)
            .map(|k| fiber_point(&[1.0, 0.0, 0.0], 2.0 * PI * k as f64 / n as f64).unwrap())
            .collect();
        assert_eq!(pi1_class_samples(&s, 1e-10).unwrap(), Z2::ONE);
    }
}
