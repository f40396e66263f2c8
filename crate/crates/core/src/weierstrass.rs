//! Weierstrass data (g, f3, theta) of conformal minimal immersions and the
//! quantities derived from it: the null map f, metric, flux and periods.

use crate::error::{Error, Result};
use crate::laurent::Laurent;
use crate::linalg::singular_values;
use crate::nullquadric::null_residual;
use crate::riemann::{homology_basis, restrict_to_curve, CircularDomain, CurveChart, Disk, SpinorExtension, Theta};
use crate::vec3::*;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// The holomorphic null map f, in one of three encodings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NullMap {
    /// f = (1/2 (1/g - g), i/2 (1/g + g), 1) f3.
    Gauss { g: Laurent, f3: Laurent },
    /// f = prod (z - c_j) (a^2 - b^2, i(a^2 + b^2), 2ab).
    Spinor(SpinorExtension),
    /// f given componentwise; used for flat data where g is constant 0 or
    /// infinite.
    Components([Laurent; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeierstrassData {
    pub map: NullMap,
    pub theta: Theta,
}

pub fn assemble_f(g: C64, f3: C64) -> Result<C3> {
    if g == C64::new(0.0, 0.0) || !g.is_finite() {
        return Err(Error::GaussMapVanishes { re: g.re, im: g.im });
    }
    let gi = g.inv();
    Ok([0.5 * (gi - g) * f3, 0.5 * I * (gi + g) * f3, f3])
}

/// g = f3 / (f1 - i f2).
pub fn gauss_map(f: &C3) -> Result<C64> {
    let den = f[0] - I * f[1];
    if den.norm() <= 1e-14 * cnorm(f) {
        return Err(Error::DegenerateDenominator { re: den.re, im: den.im });
    }
    Ok(f[2] / den)
}

impl WeierstrassData {
    pub fn gauss(g: Laurent, f3: Laurent, theta: Theta) -> Self {
        WeierstrassData { map: NullMap::Gauss { g, f3 }, theta }
    }

    /// f at z; fails where the Gauss-map encoding breaks down.
    pub fn try_f(&self, z: C64) -> Result<C3> {
        match &self.map {
            NullMap::Gauss { g, f3 } => assemble_f(g.eval(z), f3.eval(z)),
            NullMap::Spinor(s) => Ok(s.f(z)),
            NullMap::Components(c) => Ok([c[0].eval(z), c[1].eval(z), c[2].eval(z)]),
        }
    }

    pub fn f(&self, z: C64) -> C3 {
        self.try_f(z).unwrap_or([C64::new(f64::NAN, f64::NAN); 3])
    }

    pub fn f3(&self, z: C64) -> C64 {
        match &self.map {
            NullMap::Gauss { f3, .. } => f3.eval(z),
            _ => self.f(z)[2],
        }
    }

    pub fn gauss_at(&self, z: C64) -> Result<C64> {
        match &self.map {
            NullMap::Gauss { g, .. } => Ok(g.eval(z)),
            _ => gauss_map(&self.f(z)),
        }
    }

    /// f theta / dz at z.
    pub fn form(&self, z: C64) -> C3 {
        cscale(self.theta.factor(z), &self.f(z))
    }

    pub fn truncation_bound(&self) -> f64 {
        match &self.map {
            NullMap::Gauss { g, f3 } => g.truncation_bound + f3.truncation_bound,
            NullMap::Spinor(s) => s.truncation_bound(),
            NullMap::Components(c) => c.iter().map(|l| l.truncation_bound).sum(),
        }
    }
}

/// 1/2 |f theta/dz|^2.
pub fn metric_density(data: &WeierstrassData, z: C64) -> f64 {
    0.5 * cnorm(&data.form(z)).powi(2)
}

/// The same density written through the Gauss map:
/// 1/4 (1/|g| + |g|)^2 |f3|^2 |theta/dz|^2.
pub fn metric_density_gauss(g: C64, f3: C64, theta_factor: C64) -> f64 {
    let a = g.norm();
    0.25 * (1.0 / a + a).powi(2) * f3.norm_sqr() * theta_factor.norm_sqr()
}

/// Largest relative null residual of f over the points.
pub fn conformality_residual(data: &WeierstrassData, pts: &[C64]) -> f64 {
    pts.iter().map(|&z| null_residual(&data.f(z))).fold(0.0, f64::max)
}

/// Complex period of f theta over a curve chart, with n-point trapezoid.
pub fn complex_period(data: &WeierstrassData, chart: &CurveChart, n: usize) -> Result<C3> {
    Ok(restrict_to_curve(&|z| data.f(z), &data.theta, chart, n)?.period())
}

/// Flux = Im of the period.
pub fn flux(data: &WeierstrassData, chart: &CurveChart, n: usize) -> Result<R3> {
    Ok(im3(&complex_period(data, chart, n)?))
}

pub fn real_period(data: &WeierstrassData, chart: &CurveChart, n: usize) -> Result<R3> {
    Ok(re3(&complex_period(data, chart, n)?))
}

/// Gauss map at every value. Fails when f1 - i f2 degenerates on more
/// than 1% of the values, which flags flat and vertical data; isolated
/// degenerate points give an infinite entry.
pub fn gauss_map_values(vals: &[C3]) -> Result<Vec<C64>> {
    let mut bad = None;
    let mut count = 0;
    let g: Vec<C64> = vals
        .iter()
        .map(|f| {
            gauss_map(f).unwrap_or_else(|e| {
                count += 1;
                bad.get_or_insert(e);
                C64::new(f64::INFINITY, 0.0)
            })
        })
        .collect();
    match bad {
        Some(e) if count * 100 > vals.len() => Err(e),
        _ => Ok(g),
    }
}

/// Flat test: all values of f on the grid lie on one complex ray. Returns
/// the ray when flat.
pub fn is_flat(data: &WeierstrassData, pts: &[C64]) -> (bool, Option<C3>) {
    let vals: Vec<C3> = pts.iter().map(|&z| data.f(z)).collect();
    is_flat_values(&vals)
}

/// Flatness test on values of f already computed at sample points.
pub fn is_flat_values(vals: &[C3]) -> (bool, Option<C3>) {
    let vals: Vec<C3> = vals.iter().copied().filter(|v| cnorm(v) > 0.0 && v.iter().all(|c| c.is_finite())).collect();
    if vals.is_empty() {
        return (false, None);
    }
    let m = DMatrix::from_fn(vals.len(), 3, |r, c| vals[r][c] / cnorm(&vals[r]));
    let s = singular_values(&m);
    if s[1] < 1e-8 * s[0] {
        let v = vals[0];
        (true, Some(cscale(C64::new(1.0 / cnorm(&v), 0.0), &v)))
    } else {
        (false, None)
    }
}

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.0950125098376374, 0.1894506104550685),
    (0.2816035507792589, 0.1826034150449236),
    (0.4580167776572274, 0.1691565193950025),
    (0.6178762444026438, 0.1495959888165767),
    (0.7554044083550030, 0.1246289712555339),
    (0.8656312023878318, 0.0951585116824928),
    (0.9445750230732326, 0.0622535239386479),
    (0.9894009349916499, 0.0271524594117541),
];

pub fn gl_segment(form: &dyn Fn(C64) -> C3, a: C64, b: C64) -> C3 {
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let mut acc = ZERO3;
    for &(x, w) in &GL16 {
        for s in [-1.0, 1.0] {
            let v = form(mid + half * (s * x));
            acc = cadd(&acc, &cscale(half * w, &v));
        }
    }
    acc
}

fn adaptive(form: &dyn Fn(C64) -> C3, a: C64, b: C64, whole: C3, tol: f64, depth: usize) -> C3 {
    let m = (a + b) * 0.5;
    let l = gl_segment(form, a, m);
    let r = gl_segment(form, m, b);
    let both = cadd(&l, &r);
    if depth == 0 || cnorm(&csub(&both, &whole)) <= tol {
        return both;
    }
    cadd(&adaptive(form, a, m, l, 0.5 * tol, depth - 1), &adaptive(form, m, b, r, 0.5 * tol, depth - 1))
}

/// Complex integral of f theta along a polyline.
pub fn integrate_form(data: &WeierstrassData, path: &[C64], tol: f64) -> C3 {
    let form = |z: C64| data.form(z);
    let mut acc = ZERO3;
    for w in path.windows(2) {
        let whole = gl_segment(&form, w[0], w[1]);
        acc = cadd(&acc, &adaptive(&form, w[0], w[1], whole, tol, 30));
    }
    acc
}

/// A conformal minimal immersion u(z) = value + Re int_{basepoint}^z f theta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalImmersion {
    pub data: WeierstrassData,
    pub domain: CircularDomain,
    pub basepoint: C64,
    pub value: R3,
}

impl MinimalImmersion {
    /// Checks vanishing real periods on the homology basis and positivity
    /// of the metric on a verification grid.
    pub fn validate(&self, tol_period: f64) -> Result<()> {
        for ch in homology_basis(&self.domain)? {
            let rp = real_period(&self.data, &ch, 512)?;
            if norm3(&rp) > tol_period {
                return Err(Error::RealPeriodNonzero(norm3(&rp)));
            }
        }
        // A zero of f shows up as a density at round-off level next to the
        // rest of the grid.
        let dens: Vec<(f64, C64)> = self.domain.grid(16, 64, 0.01).into_iter().map(|z| (metric_density(&self.data, z), z)).collect();
        let max = dens.iter().map(|d| d.0).fold(0.0, f64::max);
        for &(d, z) in &dens {
            if !(d > 1e-20 * max) {
                return Err(Error::GaussMapVanishes { re: z.re, im: z.im });
            }
        }
        Ok(())
    }

    pub fn charts(&self) -> Result<Vec<CurveChart>> {
        homology_basis(&self.domain)
    }

    pub fn fluxes(&self, n: usize) -> Result<Vec<R3>> {
        self.charts()?.iter().map(|c| flux(&self.data, c, n)).collect()
    }

    /// u along a polyline from the basepoint; errors if the path leaves the
    /// domain.
    pub fn integrate(&self, path: &[C64]) -> Result<R3> {
        if path.first() != Some(&self.basepoint) {
            return Err(Error::PathOutsideDomain);
        }
        for w in path.windows(2) {
            for k in 0..=32 {
                let z = w[0] + (w[1] - w[0]) * (k as f64 / 32.0);
                if !self.domain.contains(z) {
                    return Err(Error::PathOutsideDomain);
                }
            }
        }
        let v = integrate_form(&self.data, path, 1e-13);
        Ok(add3(&self.value, &re3(&v)))
    }
}

/// u at the end of a path from the basepoint, after checking that the real
/// periods vanish so that the value does not depend on the path.
pub fn integrate_immersion(u: &MinimalImmersion, path: &[C64], tol_period: f64) -> Result<R3> {
    for ch in u.charts()? {
        let rp = norm3(&real_period(&u.data, &ch, 512)?);
        if rp > tol_period {
            return Err(Error::RealPeriodNonzero(rp));
        }
    }
    if path.len() <= 1 && path.first().map_or(true, |p| *p == u.basepoint) {
        return Ok(u.value);
    }
    u.integrate(path)
}

/// Path from the basepoint to z: along the circle of the basepoint radius
/// around the outer center, then radially. Valid for annuli and disks.
pub fn polar_path(domain: &CircularDomain, basepoint: C64, z: C64) -> Vec<C64> {
    let c0 = domain.outer.center;
    let r0 = (basepoint - c0).norm();
    let a0 = (basepoint - c0).arg();
    let mut a1 = (z - c0).arg();
    while a1 - a0 > std::f64::consts::PI {
        a1 -= 2.0 * std::f64::consts::PI;
    }
    while a1 - a0 < -std::f64::consts::PI {
        a1 += 2.0 * std::f64::consts::PI;
    }
    let steps = (((a1 - a0).abs() / 0.1).ceil() as usize).max(1);
    let mut path: Vec<C64> = (0..=steps).map(|k| c0 + C64::from_polar(r0, a0 + (a1 - a0) * k as f64 / steps as f64)).collect();
    path.push(z);
    path
}

/// Named examples.
pub fn catalog(name: &str) -> Result<MinimalImmersion> {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let annulus = CircularDomain::annulus(0.5, 2.0)?;
    let m = match name {
        // g = z, f3 = 1, theta = dz/z on 1/2 < |z| < 2.
        "catenoid" => MinimalImmersion {
            data: WeierstrassData::gauss(Laurent::monomial(o, 1, one), Laurent::constant(one), Theta::DzOverZ { center: o }),
            domain: annulus,
            basepoint: one,
            value: [0.0; 3],
        },
        // g = z, f3 = z, theta = dz; f is polynomial, so every period is 0.
        "enneper_annulus" => MinimalImmersion {
            data: WeierstrassData::gauss(Laurent::monomial(o, 1, one), Laurent::monomial(o, 1, one), Theta::Dz),
            domain: annulus,
            basepoint: one,
            value: [0.0; 3],
        },
        // f = e^z (0, i, 1), theta = dz.
        "flat_exponential" => {
            let e = Laurent::exp_taylor(48, 2.0);
            MinimalImmersion {
                data: WeierstrassData { map: NullMap::Components([Laurent::zero(), e.scaled(I), e]), theta: Theta::Dz },
                domain: annulus,
                basepoint: one,
                value: [0.0; 3],
            }
        }
        // f = (1, i, 0), a plane with constant third coordinate.
        "vertical_plane" => MinimalImmersion {
            data: WeierstrassData {
                map: NullMap::Components([Laurent::constant(one), Laurent::constant(I), Laurent::zero()]),
                theta: Theta::Dz,
            },
            domain: annulus,
            basepoint: one,
            value: [0.0; 3],
        },
        // a = 1/(z + 1), b = 1/(z - 1): two holes, real residues.
        "two_holes" => {
            let outer = Disk { center: o, radius: 3.0 };
            let holes = vec![Disk { center: C64::new(-1.0, 0.0), radius: 0.3 }, Disk { center: one, radius: 0.3 }];
            MinimalImmersion {
                data: WeierstrassData {
                    map: NullMap::Spinor(SpinorExtension::from_laurent(
                        Laurent::monomial(C64::new(-1.0, 0.0), -1, one),
                        Laurent::monomial(one, -1, one),
                    )),
                    theta: Theta::Dz,
                },
                domain: CircularDomain::new(outer, holes)?,
                basepoint: C64::new(0.0, 2.0),
                value: [0.0; 3],
            }
        }
        _ => return Err(Error::UnknownName(name.to_string())),
    };
    Ok(m)
}

pub const CATALOG: [&str; 5] = ["catenoid", "enneper_annulus", "flat_exponential", "vertical_plane", "two_holes"];
