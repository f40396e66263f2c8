//! Extension of loops in the quadric, given on the homology curves, to a
//! holomorphic null map on the whole domain.
//!
//! The loop F = sigma / (theta/dz dz/dx) is lifted to spinors (a, b) and
//! divided by s(z) = prod_{tagged} (z - c_j)^{1/2}, which carries the
//! sign twist of curves in the odd class. The single-valued quotients are
//! fitted jointly on all curves by Laurent series: a Taylor block at the
//! outer center and a principal block at each hole. With several curves
//! the blocks are orthogonalised by Arnoldi on the sample points, since
//! raw monomials lose all accuracy there. The null map is then
//! s^2 (A^2 - B^2, i(A^2 + B^2), 2AB), which lies on the quadric exactly.

use super::arnoldi::{ArnoldiBasis, BlockKind};
use super::{CircularDomain, CurveChart, Theta};
use crate::error::{Error, Result};
use crate::laurent::{Laurent, LaurentBlock};
use crate::linalg::pinv;
use crate::nullquadric::{lift_loop, spinor_to_null, SpinorPair, Z2, DEFAULT_TOL_NULL};
use crate::path::PeriodicPath;
use crate::vec3::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RungeConfig {
    /// Relative sup error on the curves that the fit must reach.
    pub tol: f64,
    pub min_degree: usize,
    pub max_degree: usize,
    /// Largest accepted growth factor of the basis on the domain.
    pub growth_cap: f64,
}

impl Default for RungeConfig {
    fn default() -> Self {
        RungeConfig { tol: 1e-6, min_degree: 16, max_degree: 512, growth_cap: 1e100 }
    }
}

/// A holomorphic null map given by spinor Laurent data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinorExtension {
    pub rep: SpinorRep,
    /// Centers c_j of the factor prod (z - c_j) multiplying the null map.
    pub half_centers: Vec<C64>,
    pub sup_error: f64,
    pub degree: usize,
}

/// The spinor quotients (A, B), as explicit Laurent series or as
/// coefficients in a shared orthogonalised basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpinorRep {
    Laurent { a: Laurent, b: Laurent },
    Arnoldi { basis: Arc<ArnoldiBasis>, a: Vec<C64>, b: Vec<C64> },
}

impl SpinorExtension {
    pub fn from_laurent(a: Laurent, b: Laurent) -> Self {
        SpinorExtension { rep: SpinorRep::Laurent { a, b }, half_centers: vec![], sup_error: 0.0, degree: 0 }
    }

    pub fn prefactor(&self, z: C64) -> C64 {
        self.half_centers.iter().map(|c| z - c).product()
    }

    pub fn spinor(&self, z: C64) -> SpinorPair {
        match &self.rep {
            SpinorRep::Laurent { a, b } => SpinorPair::new(a.eval(z), b.eval(z)),
            SpinorRep::Arnoldi { basis, a, b } => {
                let v = basis.eval(z);
                let dot = |c: &[C64]| v.iter().zip(c).map(|(x, y)| x * y).sum::<C64>();
                SpinorPair::new(dot(a), dot(b))
            }
        }
    }

    pub fn f(&self, z: C64) -> C3 {
        cscale(self.prefactor(z), &spinor_to_null(&self.spinor(z)))
    }

    pub fn truncation_bound(&self) -> f64 {
        match &self.rep {
            SpinorRep::Laurent { a, b } => a.truncation_bound + b.truncation_bound,
            SpinorRep::Arnoldi { .. } => 0.0,
        }
    }
}

#[derive(Copy, Clone, Debug)]
struct BasisFn {
    center: C64,
    scale: f64,
    exp: i32,
}

impl BasisFn {
    fn eval(&self, z: C64) -> C64 {
        ((z - self.center) / self.scale).powi(self.exp)
    }
}

/// Precomputed least-squares extension for a fixed family of curves.
#[derive(Clone, Debug)]
pub struct RungeExtender {
    pub charts: Vec<CurveChart>,
    pub theta: Theta,
    pub tags: Vec<Z2>,
    pub half_centers: Vec<C64>,
    pub degree: usize,
    /// Sup error of the fit over the calibration family.
    pub calibration_error: f64,
    n: usize,
    basis: Vec<BasisFn>,
    col_norm: Vec<f64>,
    arnoldi: Option<Arc<ArnoldiBasis>>,
    /// Basis values at the 4n quadrature points of each curve, columns
    /// matching the fitted coefficient vectors.
    quad: Vec<DMatrix<C64>>,
    /// prod (z - c) at the quadrature points.
    quad_prefactor: Vec<Vec<C64>>,
    /// theta/dz dz/dx at the quadrature points.
    quad_jac: Vec<Vec<C64>>,
    pinv: DMatrix<C64>,
    s_vals: Vec<Vec<C64>>,
    jac: Vec<Vec<C64>>,
    refs: Vec<Vec<Vec<SpinorPair>>>,
}

fn build_basis(domain: &CircularDomain, charts: &[CurveChart], k: usize) -> (Vec<BasisFn>, f64) {
    let c0 = domain.outer.center;
    let mut extent: f64 = 0.0;
    for ch in charts {
        extent = extent.max((ch.center - c0).norm() + ch.radius);
    }
    if charts.is_empty() {
        extent = 0.5 * domain.outer.radius;
    }
    let mut basis: Vec<BasisFn> = (0..=k as i32).map(|e| BasisFn { center: c0, scale: extent, exp: e }).collect();
    let mut growth = (domain.outer.radius / extent).powi(k as i32);
    for (ch, hole) in charts.iter().zip(&domain.holes) {
        for e in 1..=k as i32 {
            basis.push(BasisFn { center: ch.center, scale: ch.radius, exp: -e });
        }
        growth = growth.max((ch.radius / hole.radius).powi(k as i32));
    }
    (basis, growth)
}

impl RungeExtender {
    /// Calibrate on a base family `base[t][curve]` of loops: decide the
    /// sign tags from t = 0, pick the degree, and record reference lifts
    /// continued in t for later sign alignment.
    pub fn new(domain: &CircularDomain, charts: &[CurveChart], theta: Theta, base: &[Vec<PeriodicPath>], cfg: &RungeConfig) -> Result<Self> {
        let l = charts.len();
        let n = base[0][0].len();
        let jac: Vec<Vec<C64>> = charts
            .iter()
            .map(|ch| (0..n).map(|k| {
                let x = k as f64 / n as f64;
                theta.factor(ch.z(x)) * ch.dz_dx(x)
            }).collect())
            .collect();
        // Tags from the parity of the unmodified loops.
        let mut tags = Vec::with_capacity(l);
        for (j, lp) in base[0].iter().enumerate() {
            let f: Vec<C3> = lp.samples().iter().zip(&jac[j]).map(|(z, d)| cscale(d.inv(), z)).collect();
            let lift = lift_loop(&f, 0, DEFAULT_TOL_NULL)?;
            tags.push(if lift.closes { Z2::ZERO } else { Z2::ONE });
        }
        let half_centers: Vec<C64> = charts.iter().zip(&tags).filter(|(_, t)| **t == Z2::ONE).map(|(c, _)| c.center).collect();
        let s_vals: Vec<Vec<C64>> = charts.iter().map(|ch| continued_sqrt_prefactor(&half_centers, ch, n)).collect();

        let mut ext = RungeExtender {
            charts: charts.to_vec(),
            theta,
            tags,
            half_centers,
            degree: 0,
            calibration_error: f64::INFINITY,
            n,
            basis: vec![],
            col_norm: vec![],
            arnoldi: None,
            quad: vec![],
            quad_prefactor: vec![],
            quad_jac: vec![],
            pinv: DMatrix::zeros(0, 0),
            s_vals,
            jac,
            refs: vec![],
        };

        // Degree ladder: doubling, plus the largest feasible degree.
        let holes = l.max(0);
        let max_k_samples = if l == 0 { 0 } else { (l * n - 1) / (1 + holes) };
        let mut ladder = vec![];
        let mut k = cfg.min_degree;
        while k <= cfg.max_degree && k <= max_k_samples {
            ladder.push(k);
            k *= 2;
        }
        let cap = cfg.max_degree.min(max_k_samples);
        if ladder.last() != Some(&cap) && cap >= 1 {
            ladder.push(cap);
        }
        let mut last_err = (f64::INFINITY, 0);
        for &k in &ladder {
            let (basis, growth) = build_basis(domain, charts, k);
            if growth > cfg.growth_cap {
                break;
            }
            ext.set_basis(basis, k);
            ext.refs = ext.calibrate_refs(base)?;
            let err = ext.calibration_sup_error(base)?;
            last_err = (err, k);
            if err <= cfg.tol {
                ext.calibration_error = err;
                return Ok(ext);
            }
        }
        Err(Error::ApproximationBudgetExceeded { error: last_err.0, degree: last_err.1 })
    }

    fn set_basis(&mut self, basis: Vec<BasisFn>, k: usize) {
        let rows: Vec<C64> = self.charts.iter().flat_map(|ch| ch.points(self.n)).collect();
        if self.charts.len() >= 2 {
            let kinds: Vec<(BlockKind, usize)> = basis
                .iter()
                .filter(|b| b.exp == 1 || b.exp == -1)
                .map(|b| {
                    let kind = if b.exp > 0 {
                        BlockKind::Polynomial { center: b.center, scale: b.scale }
                    } else {
                        BlockKind::Principal { center: b.center, scale: b.scale }
                    };
                    (kind, k)
                })
                .collect();
            let (ab, m) = ArnoldiBasis::build(&rows, &kinds);
            self.pinv = pinv(&m, 1e-13);
            self.col_norm = vec![1.0; m.ncols()];
            self.arnoldi = Some(Arc::new(ab));
        } else {
            let mut m = DMatrix::from_fn(rows.len(), basis.len(), |r, c| basis[c].eval(rows[r]));
            let mut norms = vec![0.0; basis.len()];
            for c in 0..basis.len() {
                let nrm = m.column(c).norm().max(1e-300);
                norms[c] = nrm;
                m.column_mut(c).scale_mut(1.0 / nrm);
            }
            self.pinv = pinv(&m, 1e-13);
            self.col_norm = norms;
            self.arnoldi = None;
        }
        let m = 4 * self.n;
        self.quad = self
            .charts
            .iter()
            .map(|ch| {
                let pts: Vec<C64> = (0..m).map(|i| ch.z(i as f64 / m as f64)).collect();
                match &self.arnoldi {
                    Some(ab) => {
                        let rows: Vec<Vec<C64>> = pts.iter().map(|&z| ab.eval(z)).collect();
                        DMatrix::from_fn(m, ab.len(), |r, c| rows[r][c])
                    }
                    None => DMatrix::from_fn(m, basis.len(), |r, c| basis[c].eval(pts[r]) / self.col_norm[c]),
                }
            })
            .collect();
        self.quad_prefactor = self
            .charts
            .iter()
            .map(|ch| (0..m).map(|i| self.half_centers.iter().map(|c| ch.z(i as f64 / m as f64) - c).product()).collect())
            .collect();
        self.quad_jac = self
            .charts
            .iter()
            .map(|ch| {
                (0..m)
                    .map(|i| {
                        let x = i as f64 / m as f64;
                        self.theta.factor(ch.z(x)) * ch.dz_dx(x)
                    })
                    .collect()
            })
            .collect();
        self.basis = basis;
        self.degree = k;
    }

    /// F of the fitted extension at the quadrature points of curve j.
    fn quad_f(&self, j: usize, ca: &DVector<C64>, cb: &DVector<C64>) -> Vec<C3> {
        let a = &self.quad[j] * ca;
        let b = &self.quad[j] * cb;
        a.iter()
            .zip(b.iter())
            .zip(&self.quad_prefactor[j])
            .map(|((a, b), p)| cscale(*p, &spinor_to_null(&SpinorPair::new(*a, *b))))
            .collect()
    }

    fn periods_of(&self, ca: &DVector<C64>, cb: &DVector<C64>) -> Vec<C3> {
        let m = 4 * self.n;
        (0..self.charts.len())
            .map(|j| {
                let mut acc = ZERO3;
                for (v, d) in self.quad_f(j, ca, cb).iter().zip(&self.quad_jac[j]) {
                    acc = cadd(&acc, &cscale(*d, v));
                }
                cscale(C64::new(1.0 / m as f64, 0.0), &acc)
            })
            .collect()
    }

    /// Relative sup error against the trigonometric interpolant of F on a
    /// doubled grid (every other quadrature point).
    fn sup_error_of(&self, ca: &DVector<C64>, cb: &DVector<C64>, f: &[Vec<C3>]) -> f64 {
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..self.charts.len() {
            let fine = PeriodicPath::new(f[j].clone()).unwrap().resample(2 * self.n).unwrap();
            let vals = self.quad_f(j, ca, cb);
            for (k, target) in fine.samples().iter().enumerate() {
                err = err.max(cnorm(&csub(&vals[2 * k], target)));
                scale = scale.max(cnorm(target));
            }
        }
        err / scale.max(1e-300)
    }

    fn f_samples(&self, j: usize, lp: &PeriodicPath) -> Vec<C3> {
        lp.samples().iter().zip(&self.jac[j]).map(|(z, d)| cscale(d.inv(), z)).collect()
    }

    /// Lift divided by s(z), before sign alignment.
    fn divided_lift(&self, j: usize, lp: &PeriodicPath) -> Result<Vec<SpinorPair>> {
        let f = self.f_samples(j, lp);
        let lift = lift_loop(&f, 0, DEFAULT_TOL_NULL)?;
        let twisted = self.tags[j] == Z2::ONE;
        if lift.closes == twisted {
            return Err(Error::ParityMismatch { curve: j });
        }
        Ok(lift
            .spinors
            .iter()
            .zip(&self.s_vals[j])
            .map(|(s, q)| SpinorPair::new(s.a / q, s.b / q))
            .collect())
    }

    fn calibrate_refs(&self, base: &[Vec<PeriodicPath>]) -> Result<Vec<Vec<Vec<SpinorPair>>>> {
        let l = self.charts.len();
        let mut refs: Vec<Vec<Vec<SpinorPair>>> = Vec::with_capacity(base.len());
        for (ti, loops) in base.iter().enumerate() {
            let mut lifts: Vec<Vec<SpinorPair>> = (0..l).map(|j| self.divided_lift(j, &loops[j])).collect::<Result<_>>()?;
            if ti == 0 {
                // Choose relative signs with the best joint fit.
                let mut best = (f64::INFINITY, 0usize);
                for pattern in 0..(1usize << l.saturating_sub(1)) {
                    let trial = apply_pattern(&lifts, pattern);
                    let e = self.fit_error(&trial, &loops.iter().enumerate().map(|(j, lp)| self.f_samples(j, lp)).collect::<Vec<_>>());
                    if e < best.0 {
                        best = (e, pattern);
                    }
                }
                lifts = apply_pattern(&lifts, best.1);
            } else {
                for j in 0..l {
                    align(&mut lifts[j], &refs[ti - 1][j]);
                }
            }
            refs.push(lifts);
        }
        Ok(refs)
    }

    fn fit_coeffs(&self, lifts: &[Vec<SpinorPair>]) -> (DVector<C64>, DVector<C64>) {
        let da = DVector::from_iterator(self.charts.len() * self.n, lifts.iter().flat_map(|v| v.iter().map(|s| s.a)));
        let db = DVector::from_iterator(self.charts.len() * self.n, lifts.iter().flat_map(|v| v.iter().map(|s| s.b)));
        (&self.pinv * da, &self.pinv * db)
    }

    fn laurent_from(&self, coef: &DVector<C64>) -> Laurent {
        // Group consecutive basis functions of the same block.
        let mut blocks: Vec<LaurentBlock> = vec![];
        let mut i = 0;
        while i < self.basis.len() {
            let b0 = self.basis[i];
            let mut j = i;
            while j < self.basis.len() && self.basis[j].center == b0.center && self.basis[j].scale == b0.scale && (self.basis[j].exp >= 0) == (b0.exp >= 0) {
                j += 1;
            }
            let mut entries: Vec<(i32, C64)> = (i..j).map(|m| (self.basis[m].exp, coef[m] / self.col_norm[m])).collect();
            entries.sort_by_key(|e| e.0);
            let min_exp = entries[0].0;
            let max_exp = entries.last().unwrap().0;
            let mut coeffs = vec![C64::new(0.0, 0.0); (max_exp - min_exp + 1) as usize];
            for (e, v) in entries {
                coeffs[(e - min_exp) as usize] = v;
            }
            blocks.push(LaurentBlock { center: b0.center, scale: b0.scale, min_exp, coeffs });
            i = j;
        }
        Laurent { blocks, truncation_bound: 0.0 }
    }

    fn make_extension(&self, lifts: &[Vec<SpinorPair>]) -> SpinorExtension {
        let (ca, cb) = self.fit_coeffs(lifts);
        let rep = match &self.arnoldi {
            Some(basis) => SpinorRep::Arnoldi { basis: basis.clone(), a: ca.iter().copied().collect(), b: cb.iter().copied().collect() },
            None => SpinorRep::Laurent { a: self.laurent_from(&ca), b: self.laurent_from(&cb) },
        };
        SpinorExtension { rep, half_centers: self.half_centers.clone(), sup_error: 0.0, degree: self.degree }
    }

    fn fit_error(&self, lifts: &[Vec<SpinorPair>], f: &[Vec<C3>]) -> f64 {
        let (ca, cb) = self.fit_coeffs(lifts);
        self.sup_error_of(&ca, &cb, f)
    }

    fn calibration_sup_error(&self, base: &[Vec<PeriodicPath>]) -> Result<f64> {
        let mut e: f64 = 0.0;
        for (ti, loops) in base.iter().enumerate() {
            let f: Vec<Vec<C3>> = loops.iter().enumerate().map(|(j, lp)| self.f_samples(j, lp)).collect();
            e = e.max(self.fit_error(&self.refs[ti], &f));
        }
        Ok(e)
    }

    fn aligned_lifts(&self, t: usize, loops: &[PeriodicPath]) -> Result<Vec<Vec<SpinorPair>>> {
        (0..self.charts.len())
            .map(|j| {
                let mut v = self.divided_lift(j, &loops[j])?;
                align(&mut v, &self.refs[t][j]);
                Ok(v)
            })
            .collect()
    }

    /// Extend loops (one per curve) that are close to the calibration loops
    /// at time index `t`.
    pub fn extend(&self, t: usize, loops: &[PeriodicPath]) -> Result<SpinorExtension> {
        let lifts = self.aligned_lifts(t, loops)?;
        let mut ext = self.make_extension(&lifts);
        let (ca, cb) = self.fit_coeffs(&lifts);
        let f: Vec<Vec<C3>> = loops.iter().enumerate().map(|(j, lp)| self.f_samples(j, lp)).collect();
        ext.sup_error = self.sup_error_of(&ca, &cb, &f);
        Ok(ext)
    }

    /// Periods of the extension of `loops`, without assembling it.
    pub fn extension_periods(&self, t: usize, loops: &[PeriodicPath]) -> Result<Vec<C3>> {
        let lifts = self.aligned_lifts(t, loops)?;
        let (ca, cb) = self.fit_coeffs(&lifts);
        Ok(self.periods_of(&ca, &cb))
    }

    /// Periods of the extension over the curves, using 4n-point trapezoid.
    pub fn periods(&self, ext: &SpinorExtension) -> Vec<C3> {
        let m = 4 * self.n;
        self.charts
            .iter()
            .map(|ch| {
                let mut acc = ZERO3;
                for k in 0..m {
                    let x = k as f64 / m as f64;
                    let z = ch.z(x);
                    acc = cadd(&acc, &cscale(self.theta.factor(z) * ch.dz_dx(x), &ext.f(z)));
                }
                cscale(C64::new(1.0 / m as f64, 0.0), &acc)
            })
            .collect()
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }
}

fn apply_pattern(lifts: &[Vec<SpinorPair>], pattern: usize) -> Vec<Vec<SpinorPair>> {
    lifts
        .iter()
        .enumerate()
        .map(|(j, v)| {
            if j > 0 && (pattern >> (j - 1)) & 1 == 1 {
                v.iter().map(|s| s.neg()).collect()
            } else {
                v.clone()
            }
        })
        .collect()
}

fn align(v: &mut [SpinorPair], reference: &[SpinorPair]) {
    let mut ip = 0.0;
    for (s, r) in v.iter().zip(reference) {
        ip += (s.a * r.a.conj() + s.b * r.b.conj()).re;
    }
    if ip < 0.0 {
        for s in v.iter_mut() {
            *s = s.neg();
        }
    }
}

/// s(z) = prod_{c in centers} (z - c)^{1/2} continued along the chart from
/// the principal branch at x = 0.
fn continued_sqrt_prefactor(centers: &[C64], ch: &CurveChart, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0); n];
    for c in centers {
        let mut prev = (ch.z(0.0) - c).sqrt();
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = (ch.z(k as f64 / n as f64) - c).sqrt();
            if (s - prev).norm() > (s + prev).norm() {
                s = -s;
            }
            *o *= s;
            prev = s;
        }
    }
    out
}
