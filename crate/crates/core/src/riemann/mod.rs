//! Circular planar domains, their homology bases, restriction of 1-forms to
//! curves, and Runge-type extension of loops in the quadric.

pub mod arnoldi;
mod runge;

pub use runge::{RungeConfig, RungeExtender, SpinorExtension, SpinorRep};

use crate::error::{Error, Result};
use crate::path::PeriodicPath;
use crate::vec3::*;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: C64,
    pub radius: f64,
}

/// Open disk minus finitely many pairwise disjoint closed disks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularDomain {
    pub outer: Disk,
    pub holes: Vec<Disk>,
}

impl CircularDomain {
    pub fn new(outer: Disk, holes: Vec<Disk>) -> Result<Self> {
        if !(outer.radius > 0.0) {
            return Err(Error::InvalidDomain("outer radius must be positive".into()));
        }
        for (i, h) in holes.iter().enumerate() {
            if !(h.radius > 0.0) || (h.center - outer.center).norm() + h.radius >= outer.radius {
                return Err(Error::InvalidDomain(format!("hole {i} is not inside the outer disk")));
            }
            for (j, k) in holes.iter().enumerate().skip(i + 1) {
                if (h.center - k.center).norm() <= h.radius + k.radius {
                    return Err(Error::InvalidDomain(format!("holes {i} and {j} intersect")));
                }
            }
        }
        Ok(CircularDomain { outer, holes })
    }

    pub fn annulus(r_in: f64, r_out: f64) -> Result<Self> {
        let o = C64::new(0.0, 0.0);
        Self::new(Disk { center: o, radius: r_out }, vec![Disk { center: o, radius: r_in }])
    }

    pub fn disk(r: f64) -> Result<Self> {
        Self::new(Disk { center: C64::new(0.0, 0.0), radius: r }, vec![])
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.outer.center).norm() < self.outer.radius && self.holes.iter().all(|h| (z - h.center).norm() > h.radius)
    }

    /// Distance from z to the boundary (negative outside).
    pub fn clearance(&self, z: C64) -> f64 {
        let mut d = self.outer.radius - (z - self.outer.center).norm();
        for h in &self.holes {
            d = d.min((z - h.center).norm() - h.radius);
        }
        d
    }

    pub fn is_annulus(&self) -> bool {
        self.holes.len() == 1 && self.holes[0].center == self.outer.center
    }

    /// Polar verification grid around the outer center: `n_r` radii and
    /// `n_theta` angles, keeping points at least `margin` (relative to the
    /// outer radius) inside the domain.
    pub fn grid(&self, n_r: usize, n_theta: usize, margin: f64) -> Vec<C64> {
        let m = margin * self.outer.radius;
        let (r0, r1) = if self.is_annulus() {
            (self.holes[0].radius + m, self.outer.radius - m)
        } else {
            (m, self.outer.radius - m)
        };
        let mut pts = Vec::with_capacity(n_r * n_theta);
        for i in 0..n_r {
            let r = if n_r == 1 { 0.5 * (r0 + r1) } else { r0 + (r1 - r0) * i as f64 / (n_r - 1) as f64 };
            for k in 0..n_theta {
                let a = 2.0 * PI * (k as f64 + 0.5 * (i % 2) as f64) / n_theta as f64;
                let z = self.outer.center + C64::from_polar(r, a);
                if self.clearance(z) >= m * 0.999 {
                    pts.push(z);
                }
            }
        }
        pts
    }
}

/// Parametrized circle z(x) = center + radius e^{2 pi i x}, x in [0, 1).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveChart {
    pub center: C64,
    pub radius: f64,
}

impl CurveChart {
    pub fn z(&self, x: f64) -> C64 {
        self.center + C64::from_polar(self.radius, 2.0 * PI * x)
    }
    pub fn dz_dx(&self, x: f64) -> C64 {
        C64::from_polar(2.0 * PI * self.radius, 2.0 * PI * x) * I
    }
    pub fn points(&self, n: usize) -> Vec<C64> {
        (0..n).map(|k| self.z(k as f64 / n as f64)).collect()
    }
}

/// Nowhere-vanishing holomorphic 1-form theta, through the factor theta/dz.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Theta {
    Dz,
    DzOverZ { center: C64 },
}

impl Theta {
    pub fn factor(&self, z: C64) -> C64 {
        match *self {
            Theta::Dz => C64::new(1.0, 0.0),
            Theta::DzOverZ { center } => (z - center).inv(),
        }
    }
}

/// One circle per hole, between the hole radius and the largest concentric
/// radius that stays clear of the other holes and the outer boundary (at
/// the geometric mean for a single hole). Curve j winds once around hole j
/// only.
pub fn homology_basis(domain: &CircularDomain) -> Result<Vec<CurveChart>> {
    let holes = &domain.holes;
    let mut charts = Vec::with_capacity(holes.len());
    for (j, h) in holes.iter().enumerate() {
        let mut big = domain.outer.radius - (h.center - domain.outer.center).norm();
        for (i, k) in holes.iter().enumerate() {
            if i != j {
                big = big.min((h.center - k.center).norm() - k.radius);
            }
        }
        if big <= h.radius {
            return Err(Error::InvalidDomain(format!("hole {j} has no clearance")));
        }
        // With several holes the curves are pulled toward their holes: the
        // joint fit on all curves converges at a rate set by how far apart
        // the curves are relative to the poles available inside them.
        let radius = if holes.len() == 1 { (h.radius * big).sqrt() } else { h.radius.powf(0.75) * big.powf(0.25) };
        charts.push(CurveChart { center: h.center, radius });
    }
    for i in 0..charts.len() {
        for j in i + 1..charts.len() {
            let d = (charts[i].center - charts[j].center).norm();
            if d <= charts[i].radius + charts[j].radius {
                return Err(Error::NoClearance(i, j));
            }
        }
    }
    Ok(charts)
}

/// sigma(x) = f(z(x)) theta/dz dz/dx on the chart: the loop whose trapezoid
/// integral is the period of f theta.
pub fn restrict_to_curve(f: &dyn Fn(C64) -> C3, theta: &Theta, chart: &CurveChart, n: usize) -> Result<PeriodicPath> {
    PeriodicPath::from_fn(n, |x| {
        let z = chart.z(x);
        cscale(theta.factor(z) * chart.dz_dx(x), &f(z))
    })
}

/// Winding number of the chart around p.
pub fn winding_number(chart: &CurveChart, p: C64) -> i64 {
    let n = 1024;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let x = k as f64 / n as f64;
        acc += chart.dz_dx(x) / (chart.z(x) - p);
    }
    (acc / n as f64 / (2.0 * PI * I)).re.round() as i64
}
