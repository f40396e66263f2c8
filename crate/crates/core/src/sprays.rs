//! Period-dominating sprays of loops in the quadric, and the continuation
//! solver for the control path w(t).

use crate::error::{Error, Result};
use crate::linalg::{damped_lstsq, singular_values};
use crate::loops::{nondegenerate_on, Segment};
use crate::nullquadric::TangentFlow;
use crate::path::PeriodicPath;
use crate::vec3::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SprayMode {
    /// Three flows per curve; all period components are controlled.
    Full,
    /// Two multiplicative Gauss-map controls per curve, g -> e^{w h} g with
    /// the third component fixed; components 1 and 2 are controlled.
    FixedThird,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub curve: usize,
    pub field: TangentFlow,
    pub center: f64,
    pub width: f64,
}

/// Raised cosine of full width `width` centred at `center`, on R/Z.
pub fn bump(center: f64, width: f64, x: f64) -> f64 {
    let mut d = (x - center).rem_euclid(1.0);
    if d > 0.5 {
        d -= 1.0;
    }
    if d.abs() >= 0.5 * width {
        0.0
    } else {
        0.5 * (1.0 + (2.0 * PI * d / width).cos())
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SprayConfig {
    pub width: f64,
    pub radius_w: f64,
    pub h_fd: f64,
    /// Smallest singular value the certified Jacobian must exceed.
    pub sigma_min_threshold: f64,
}

impl Default for SprayConfig {
    fn default() -> Self {
        SprayConfig { width: 0.05, radius_w: 0.5, h_fd: 1e-5 * 0.5, sigma_min_threshold: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct LoopSpray {
    /// base[t][curve]
    pub base: Vec<Vec<PeriodicPath>>,
    pub controls: Vec<Control>,
    pub mode: SprayMode,
    pub config: SprayConfig,
    /// Smallest singular value of the certified period Jacobian, per t.
    pub sigma_min: Vec<f64>,
    pub sigma_max: Vec<f64>,
    bumps: Vec<Vec<f64>>,
}

impl LoopSpray {
    pub fn n_curves(&self) -> usize {
        self.base[0].len()
    }

    pub fn components(&self) -> usize {
        match self.mode {
            SprayMode::Full => 3,
            SprayMode::FixedThird => 2,
        }
    }

    /// sigma_{t,w} on every curve. Controls of one curve are applied in
    /// reverse order, so the first control is the outermost flow.
    pub fn loops(&self, t: usize, w: &[C64]) -> Vec<PeriodicPath> {
        let mut out = Vec::with_capacity(self.n_curves());
        for (j, base) in self.base[t].iter().enumerate() {
            let ctrl: Vec<usize> = (0..self.controls.len()).filter(|&i| self.controls[i].curve == j).collect();
            out.push(base.map(|k, z| {
                let mut v = *z;
                for &i in ctrl.iter().rev() {
                    let s = w[i] * self.bumps[i][k];
                    if s == C64::new(0.0, 0.0) {
                        continue;
                    }
                    v = match self.mode {
                        SprayMode::Full => self.controls[i].field.flow(&v, s),
                        SprayMode::FixedThird => fixed_third_flow(&v, s),
                    };
                }
                v
            }));
        }
        out
    }

    pub fn loop_periods(&self, loops: &[PeriodicPath]) -> Vec<C64> {
        let m = self.components();
        loops.iter().flat_map(|l| l.period()[..m].to_vec()).collect()
    }
}

/// u = z1 + i z2 -> e^s u, v = z1 - i z2 -> e^{-s} v, z3 fixed. This is the
/// rotation flow in the (1, 2) plane at imaginary time, and multiplies the
/// Gauss map z3/(z1 - i z2) by e^s.
pub fn fixed_third_flow(z: &C3, s: C64) -> C3 {
    TangentFlow::Rotation(0, 1).flow(z, -I * s)
}

/// Derivative at w = 0 of the period under one control.
fn control_column(base: &PeriodicPath, field: Option<TangentFlow>, bumpv: &[f64]) -> C3 {
    let mut acc = ZERO3;
    for (k, z) in base.samples().iter().enumerate() {
        if bumpv[k] == 0.0 {
            continue;
        }
        let v = match field {
            Some(f) => f.field(z),
            None => [I * z[1], -I * z[0], C64::new(0.0, 0.0)],
        };
        acc = cadd(&acc, &cscale(C64::new(bumpv[k], 0.0), &v));
    }
    cscale(C64::new(1.0 / base.len() as f64, 0.0), &acc)
}

fn sampled_bump(center: f64, width: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| bump(center, width, k as f64 / n as f64)).collect()
}

fn candidate_centers(seg: &Segment, width: f64) -> Result<Vec<f64>> {
    if seg.length() < 2.0 * width {
        return Err(Error::InvalidSegment { start: seg.start, end: seg.end });
    }
    let lo = 0.5 * width / seg.length() + 0.01;
    let hi = 1.0 - lo;
    Ok((0..7).map(|i| seg.at(lo + (hi - lo) * i as f64 / 6.0)).collect())
}

/// Choose `per_curve` controls on each curve maximising the worst-case
/// smallest singular value of the linearised period map over t.
fn choose_controls(base: &[Vec<PeriodicPath>], segments: &[Segment], mode: SprayMode, cfg: &SprayConfig) -> Result<Vec<Control>> {
    let l = base.first().map_or(0, |b| b.len());
    if segments.len() != l {
        return Err(Error::Config(format!("{} segments for {l} curves", segments.len())));
    }
    let mut controls = vec![];
    for j in 0..l {
        let n = base[0][j].len();
        let seg = &segments[j];
        for (ti, t) in base.iter().enumerate() {
            let nd = nondegenerate_on(&t[j], seg)?;
            if !nd {
                let _ = ti;
                return Err(Error::DegenerateLoop { curve: j });
            }
            if mode == SprayMode::FixedThird {
                let idx = seg.indices(n);
                let smax = t[j].samples().iter().map(cnorm).fold(0.0, f64::max);
                if idx.iter().any(|&k| t[j].samples()[k][2].norm() <= 1e-12 * smax) {
                    return Err(Error::ThirdComponentVanishes { curve: j });
                }
            }
        }
        let centers = candidate_centers(seg, cfg.width)?;
        let fields: Vec<Option<TangentFlow>> = match mode {
            SprayMode::Full => TangentFlow::ALL.iter().map(|f| Some(*f)).collect(),
            SprayMode::FixedThird => vec![None],
        };
        let m = if mode == SprayMode::Full { 3 } else { 2 };
        // cols[c][f][t]
        let bumps: Vec<Vec<f64>> = centers.iter().map(|&c| sampled_bump(c, cfg.width, n)).collect();
        let cols: Vec<Vec<Vec<C3>>> = bumps
            .iter()
            .map(|b| fields.iter().map(|f| base.iter().map(|t| control_column(&t[j], *f, b)).collect()).collect())
            .collect();
        let mut best: (f64, Vec<(usize, usize)>) = (-1.0, vec![]);
        let nc = centers.len();
        let nf = fields.len();
        let mut choose = |sel: Vec<(usize, usize)>| {
            let mut worst = f64::INFINITY;
            for ti in 0..base.len() {
                let mat = DMatrix::from_fn(m, m, |r, c| cols[sel[c].0][sel[c].1][ti][r]);
                let s = singular_values(&mat);
                worst = worst.min(*s.last().unwrap());
            }
            if worst > best.0 {
                best = (worst, sel);
            }
        };
        for a in 0..nc {
            for b in a + 1..nc {
                if m == 2 {
                    choose(vec![(a, 0), (b, 0)]);
                    continue;
                }
                for c in b + 1..nc {
                    for fa in 0..nf {
                        for fb in 0..nf {
                            for fc in 0..nf {
                                choose(vec![(a, fa), (b, fb), (c, fc)]);
                            }
                        }
                    }
                }
            }
        }
        for (ci, fi) in best.1 {
            controls.push(Control {
                curve: j,
                field: fields[fi].unwrap_or(TangentFlow::Rotation(0, 1)),
                center: centers[ci],
                width: cfg.width,
            });
        }
    }
    Ok(controls)
}

/// Spray with explicitly chosen controls, certified like `build_spray`.
pub fn spray_with_controls(base: Vec<Vec<PeriodicPath>>, controls: Vec<Control>, mode: SprayMode, cfg: SprayConfig) -> Result<LoopSpray> {
    if let Some(c) = controls.iter().find(|c| base.first().map_or(true, |b| c.curve >= b.len())) {
        return Err(Error::Config(format!("control on missing curve {}", c.curve)));
    }
    assemble_spray(base, controls, mode, cfg)
}

fn assemble_spray(base: Vec<Vec<PeriodicPath>>, controls: Vec<Control>, mode: SprayMode, cfg: SprayConfig) -> Result<LoopSpray> {
    let bumps = controls.iter().map(|c| sampled_bump(c.center, c.width, base[0][c.curve].len())).collect();
    let mut spray = LoopSpray { base, controls, mode, config: cfg, sigma_min: vec![], sigma_max: vec![], bumps };
    let w0 = vec![C64::new(0.0, 0.0); spray.dim_w()];
    for t in 0..spray.n_t() {
        if w0.is_empty() {
            break;
        }
        let j = spray.jacobian(t, &w0)?;
        let s = singular_values(&j);
        let (smax, smin) = (s[0], *s.last().unwrap());
        if !(smin > spray.config.sigma_min_threshold) {
            return Err(Error::DominationFailed { t: spray.t_value(t), sigma_min: smin });
        }
        spray.sigma_min.push(smin);
        spray.sigma_max.push(smax);
    }
    Ok(spray)
}

/// Period-dominating spray with three flow controls per curve, supported
/// inside `segments[j]` on curve j.
pub fn build_spray(base: Vec<Vec<PeriodicPath>>, segments: &[Segment], cfg: SprayConfig) -> Result<LoopSpray> {
    let controls = choose_controls(&base, segments, SprayMode::Full, &cfg)?;
    assemble_spray(base, controls, SprayMode::Full, cfg)
}

/// Spray acting through the multiplicative Gauss map with f3 fixed,
/// dominating period components 1 and 2.
pub fn build_spray_fixed_third(base: Vec<Vec<PeriodicPath>>, segments: &[Segment], cfg: SprayConfig) -> Result<LoopSpray> {
    let controls = choose_controls(&base, segments, SprayMode::FixedThird, &cfg)?;
    assemble_spray(base, controls, SprayMode::FixedThird, cfg)
}

/// A family of period maps w -> P(t, w) sampled on a t-grid.
pub trait PeriodMap {
    fn n_t(&self) -> usize;
    fn dim_w(&self) -> usize;
    fn periods(&self, t: usize, w: &[C64]) -> Result<Vec<C64>>;
    fn h_fd(&self) -> f64;

    fn t_value(&self, t: usize) -> f64 {
        if self.n_t() <= 1 {
            0.0
        } else {
            t as f64 / (self.n_t() - 1) as f64
        }
    }

    /// Central complex finite differences; P is holomorphic in w.
    fn jacobian(&self, t: usize, w: &[C64]) -> Result<DMatrix<C64>> {
        let h = self.h_fd();
        let mut cols = vec![];
        let mut wp = w.to_vec();
        for k in 0..w.len() {
            wp[k] = w[k] + h;
            let p = self.periods(t, &wp)?;
            wp[k] = w[k] - h;
            let m = self.periods(t, &wp)?;
            wp[k] = w[k];
            cols.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        let rows = cols.first().map_or(0, |c| c.len());
        Ok(DMatrix::from_fn(rows, w.len(), |r, c| cols[c][r]))
    }
}

impl PeriodMap for LoopSpray {
    fn n_t(&self) -> usize {
        self.base.len()
    }
    fn dim_w(&self) -> usize {
        self.controls.len()
    }
    fn periods(&self, t: usize, w: &[C64]) -> Result<Vec<C64>> {
        Ok(self.loop_periods(&self.loops(t, w)))
    }
    fn h_fd(&self) -> f64 {
        self.config.h_fd
    }

    /// Central differences with step h_fd, taken sample by sample on the
    /// curve a control acts on. Differencing before summing keeps the
    /// round-off at the size of the samples instead of the periods.
    fn jacobian(&self, t: usize, w: &[C64]) -> Result<DMatrix<C64>> {
        let h = self.config.h_fd;
        let m = self.components();
        let mut jac = DMatrix::zeros(m * self.n_curves(), w.len());
        let mut wp = w.to_vec();
        for (i, ctl) in self.controls.iter().enumerate() {
            wp[i] = w[i] + h;
            let p = self.loops(t, &wp).swap_remove(ctl.curve);
            wp[i] = w[i] - h;
            let q = self.loops(t, &wp).swap_remove(ctl.curve);
            wp[i] = w[i];
            let mut acc = ZERO3;
            for (a, b) in p.samples().iter().zip(q.samples()) {
                acc = cadd(&acc, &csub(a, b));
            }
            let scale = C64::new(1.0 / (2.0 * h * p.len() as f64), 0.0);
            for r in 0..m {
                jac[(ctl.curve * m + r, i)] = acc[r] * scale;
            }
        }
        Ok(jac)
    }
}

pub fn period_jacobian(map: &dyn PeriodMapDyn, t: usize, w: &[C64]) -> Result<DMatrix<C64>> {
    map.jacobian_dyn(t, w)
}

/// Object-safe view of `PeriodMap`.
pub trait PeriodMapDyn {
    fn jacobian_dyn(&self, t: usize, w: &[C64]) -> Result<DMatrix<C64>>;
}

impl<T: PeriodMap> PeriodMapDyn for T {
    fn jacobian_dyn(&self, t: usize, w: &[C64]) -> Result<DMatrix<C64>> {
        self.jacobian(t, w)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub radius_w: f64,
    pub max_iter: usize,
    pub tikhonov: f64,
    pub min_substep: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, radius_w: 0.5, max_iter: 30, tikhonov: 1e-12, min_substep: 1.0 / 1024.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub ts: Vec<f64>,
    pub w: Vec<Vec<C64>>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub max_norm: f64,
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn newton_to(map: &dyn PeriodMapFull, t: usize, w0: &[C64], target: &[C64], opts: &SolveOptions) -> Result<Option<(Vec<C64>, usize, f64)>> {
    let mut w = w0.to_vec();
    let resid = |w: &[C64]| -> Result<Vec<C64>> { Ok(map.periods_f(t, w)?.iter().zip(target).map(|(a, b)| a - b).collect()) };
    let mut r = resid(&w)?;
    let mut rn = vnorm(&r);
    let mut it = 0;
    while rn > opts.tol && it < opts.max_iter {
        it += 1;
        let j = map.jacobian_f(t, &w)?;
        let step = damped_lstsq(&j, &DVector::from_vec(r.clone()), opts.tikhonov);
        let mut lam = 1.0;
        let mut ok = false;
        for _ in 0..20 {
            let wn: Vec<C64> = w.iter().zip(step.iter()).map(|(a, s)| a - s * lam).collect();
            let rnew = resid(&wn)?;
            if vnorm(&rnew) < rn {
                w = wn;
                r = rnew;
                rn = vnorm(&r);
                ok = true;
                break;
            }
            lam *= 0.5;
        }
        if !ok {
            break;
        }
    }
    Ok(if rn <= opts.tol { Some((w, it, rn)) } else { None })
}

/// Internal object-safe access used by the solver.
pub trait PeriodMapFull {
    fn periods_f(&self, t: usize, w: &[C64]) -> Result<Vec<C64>>;
    fn jacobian_f(&self, t: usize, w: &[C64]) -> Result<DMatrix<C64>>;
}

impl<T: PeriodMap> PeriodMapFull for T {
    fn periods_f(&self, t: usize, w: &[C64]) -> Result<Vec<C64>> {
        self.periods(t, w)
    }
    fn jacobian_f(&self, t: usize, w: &[C64]) -> Result<DMatrix<C64>> {
        self.jacobian(t, w)
    }
}

/// Solve P(t, w(t)) = targets[t] for all t with w(0) = 0, by Newton at each
/// grid point started from the previous solution. When Newton fails the
/// target is approached by a homotopy from the current periods, halving the
/// homotopy step down to `min_substep`.
pub fn solve_w<M: PeriodMap>(map: &M, targets: &[Vec<C64>], opts: &SolveOptions) -> Result<ControlPath> {
    let n_t = map.n_t();
    let dim = map.dim_w();
    let zero = vec![C64::new(0.0, 0.0); dim];
    let p0 = map.periods(0, &zero)?;
    let r0 = vnorm(&p0.iter().zip(&targets[0]).map(|(a, b)| a - b).collect::<Vec<_>>());
    if r0 > opts.tol.max(1e-10) {
        return Err(Error::InconsistentTargets(r0));
    }
    let mut ws = vec![zero.clone()];
    let mut iters = vec![0];
    let mut res = vec![r0];
    let mut max_norm: f64 = 0.0;
    let mut w = zero;
    for t in 1..n_t {
        let tv = map.t_value(t);
        let (wn, it, rn) = match newton_to(map, t, &w, &targets[t], opts)? {
            Some(x) => x,
            None => {
                // Homotopy between the current periods and the target.
                let start = map.periods(t, &w)?;
                let mut s: f64 = 0.0;
                let mut h: f64 = 0.5;
                let mut cur = w.clone();
                let mut total_it = 0;
                let mut last = f64::INFINITY;
                while s < 1.0 {
                    let sn = (s + h).min(1.0);
                    let tgt: Vec<C64> = start.iter().zip(&targets[t]).map(|(a, b)| a * (1.0 - sn) + b * sn).collect();
                    match newton_to(map, t, &cur, &tgt, opts)? {
                        Some((wn, it, rn)) => {
                            cur = wn;
                            s = sn;
                            total_it += it;
                            last = rn;
                            h = (2.0 * h).min(0.5);
                        }
                        None => {
                            h *= 0.5;
                            if h < opts.min_substep {
                                return Err(Error::ContinuationStalled { t: tv, reason: "Newton failed under step halving".into() });
                            }
                        }
                    }
                }
                (cur, total_it, last)
            }
        };
        let nrm = vnorm(&wn);
        if nrm > opts.radius_w {
            return Err(Error::LeftDomain { t: tv, radius: opts.radius_w });
        }
        max_norm = max_norm.max(nrm);
        w = wn;
        ws.push(w.clone());
        iters.push(it);
        res.push(rn);
    }
    Ok(ControlPath { ts: (0..n_t).map(|t| map.t_value(t)).collect(), w: ws, iterations: iters, residuals: res, max_norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catenoid_loop(n: usize) -> PeriodicPath {
        PeriodicPath::from_fn(n, |x| {
            let p = 2.0 * PI * x;
            [c(2.0 * PI * p.sin(), 0.0), c(-2.0 * PI * p.cos(), 0.0), c(0.0, 2.0 * PI)]
        })
        .unwrap()
    }

    #[test]
    fn raised_cosine_support() {
        assert_eq!(bump(0.5, 0.05, 0.5), 1.0);
        assert_eq!(bump(0.5, 0.05, 0.53), 0.0);
        assert!(bump(0.99, 0.05, 0.005) > 0.0);
    }

    #[test]
    fn fixed_third_flow_scales_gauss_map() {
        let z = crate::nullquadric::spinor_to_null(&crate::nullquadric::SpinorPair::new(c(0.5, 0.2), c(1.0, -0.1)));
        let s = c(0.3, -0.7);
        let w = fixed_third_flow(&z, s);
        assert_eq!(w[2], z[2]);
        let g0 = z[2] / (z[0] - I * z[1]);
        let g1 = w[2] / (w[0] - I * w[1]);
        assert!((g1 - s.exp() * g0).norm() < 1e-13);
    }

    #[test]
    fn catenoid_spray_dominates() {
        let base = vec![vec![catenoid_loop(256)]; 3];
        let seg = Segment::new(0.05, 0.3).unwrap();
        let spray = build_spray(base.clone(), &[seg], SprayConfig::default()).unwrap();
        assert!(spray.sigma_min.iter().all(|&s| s > 1e-4));
        let fixed = build_spray_fixed_third(base, &[seg], SprayConfig::default()).unwrap();
        let w = vec![c(0.1, 0.05), c(-0.2, 0.0)];
        let lp = fixed.loops(1, &w);
        for (a, b) in lp[0].samples().iter().zip(catenoid_loop(256).samples()) {
            assert_eq!(a[2], b[2]);
        }
    }

    #[test]
    fn solve_w_hits_targets() {
        let base = vec![vec![catenoid_loop(256)]; 5];
        let seg = Segment::new(0.05, 0.3).unwrap();
        let spray = build_spray(base, &[seg], SprayConfig::default()).unwrap();
        let zero = vec![c(0.0, 0.0); 3];
        let p0 = spray.periods(0, &zero).unwrap();
        let targets: Vec<Vec<C64>> = (0..5).map(|t| p0.iter().map(|v| v + c(0.01 * t as f64, 0.0)).collect()).collect();
        let path = solve_w(&spray, &targets, &SolveOptions::default()).unwrap();
        assert_eq!(path.w[0], zero);
        for t in 0..5 {
            let p = spray.periods(t, &path.w[t]).unwrap();
            for (a, b) in p.iter().zip(&targets[t]) {
                assert!((a - b).norm() < 1e-11);
            }
        }
    }
}
