//! Drivers: isotopies of minimal immersions that deform the flux to zero
//! (or to a prescribed value), and their verification.
//!
//! Pipeline for each homology curve: restrict f theta to a loop, deform it
//! by the period-prescribing isotopy of conformal pairs, add a dominating
//! spray on a fixed segment, extend every loop to the domain through the
//! spinor Runge step, and solve for the control path so the extended
//! family has exactly the prescribed periods.

use crate::error::{Error, Result};
use crate::loops::{is_nonflat_on, loop_to_pair, prescribe_period_isotopy_with, Segment};
use crate::nullquadric::{null_residual, pi1_class, spinor_to_null, SpinorPair, Z2};
use crate::path::PeriodicPath;
use crate::riemann::arnoldi::ArnoldiBasis;
use crate::riemann::{homology_basis, restrict_to_curve, CircularDomain, CurveChart, RungeConfig, RungeExtender, SpinorExtension, SpinorRep};
use crate::sprays::{build_spray, solve_w, ControlPath, LoopSpray, PeriodMap, SolveOptions, SprayConfig};
use crate::vec3::*;
use crate::weierstrass::{complex_period, integrate_form, is_flat, is_flat_values, MinimalImmersion, NullMap, WeierstrassData};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub struct IsotopyOptions {
    pub n_t: usize,
    pub n_s: usize,
    pub tol_flux: f64,
    pub tol_period: f64,
    pub tol_null: f64,
    pub runge: RungeConfig,
    pub spray: SprayConfig,
    /// Radial and angular counts of the verification grid before doubling.
    pub grid: (usize, usize),
    pub seed: u64,
}

impl Default for IsotopyOptions {
    fn default() -> Self {
        IsotopyOptions {
            n_t: 64,
            n_s: 256,
            tol_flux: 1e-8,
            tol_period: 1e-9,
            tol_null: 1e-10,
            runge: RungeConfig::default(),
            spray: SprayConfig::default(),
            grid: (64, 256),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub t: f64,
    pub data: WeierstrassData,
    pub w: Vec<C64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    FluxToZero,
    PrescribeFlux,
    Constant,
}

/// Discrete family t -> u_t on the t-grid, all on one domain with one
/// base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmersionFamily {
    pub kind: FamilyKind,
    pub domain: CircularDomain,
    pub basepoint: C64,
    pub value: R3,
    pub charts: Vec<CurveChart>,
    pub members: Vec<FamilyMember>,
    pub target_flux: Vec<R3>,
    /// flux_trace[t][curve]
    pub flux_trace: Vec<Vec<R3>>,
    /// Complex periods of f theta, period_trace[t][curve].
    pub period_trace: Vec<Vec<C3>>,
    pub notices: Vec<String>,
    pub runge_degree: usize,
    pub runge_error: f64,
    pub spray_sigma_min: Vec<f64>,
    pub control: Option<ControlPath>,
}

impl ImmersionFamily {
    pub fn immersion(&self, k: usize) -> MinimalImmersion {
        MinimalImmersion { data: self.members[k].data.clone(), domain: self.domain.clone(), basepoint: self.basepoint, value: self.value }
    }

    pub fn n_t(&self) -> usize {
        self.members.len()
    }

    /// The holomorphic null curve integrating f_1 theta, when all its
    /// complex periods vanish.
    pub fn null_curve(&self) -> Option<NullCurve> {
        let last = self.members.last()?;
        let closure = self.period_trace.last()?.iter().map(cnorm).fold(0.0, f64::max);
        if self.kind == FamilyKind::PrescribeFlux {
            return None;
        }
        Some(NullCurve {
            data: last.data.clone(),
            domain: self.domain.clone(),
            basepoint: self.basepoint,
            value: complexify(&self.value, &[0.0; 3]),
            closure_error: closure,
        })
    }
}

/// Z(z) = value + int_{basepoint}^z f theta, single-valued when
/// `closure_error` vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullCurve {
    pub data: WeierstrassData,
    pub domain: CircularDomain,
    pub basepoint: C64,
    pub value: C3,
    pub closure_error: f64,
}

impl NullCurve {
    pub fn eval_along(&self, path: &[C64]) -> C3 {
        cadd(&self.value, &integrate_form(&self.data, path, 1e-13))
    }
}

/// The extended period map w -> periods of the Runge extension of the
/// sprayed loops.
struct ExtendedMap<'a> {
    spray: &'a LoopSpray,
    extender: &'a RungeExtender,
}

impl ExtendedMap<'_> {
    fn extension(&self, t: usize, w: &[C64]) -> Result<SpinorExtension> {
        self.extender.extend(t, &self.spray.loops(t, w))
    }
}

impl PeriodMap for ExtendedMap<'_> {
    fn n_t(&self) -> usize {
        self.spray.base.len()
    }
    fn dim_w(&self) -> usize {
        self.spray.controls.len()
    }
    fn periods(&self, t: usize, w: &[C64]) -> Result<Vec<C64>> {
        let p = self.extender.extension_periods(t, &self.spray.loops(t, w))?;
        Ok(p.iter().flat_map(|p| p.to_vec()).collect())
    }
    fn h_fd(&self) -> f64 {
        self.spray.config.h_fd
    }
}

/// Fixed segment I on every curve and the spray segment inside it.
pub const FIXED_SEGMENT: (f64, f64) = (0.02, 0.16);
pub const SPRAY_SEGMENT: (f64, f64) = (0.03, 0.15);
const NONFLAT_SEGMENT: (f64, f64) = (0.17, 0.22);

fn constant_family(u0: &MinimalImmersion, kind: FamilyKind, opts: &IsotopyOptions, notice: String, target: Vec<R3>) -> Result<ImmersionFamily> {
    let charts = homology_basis(&u0.domain)?;
    let members: Vec<FamilyMember> = (0..opts.n_t)
        .map(|k| FamilyMember { t: t_of(k, opts.n_t), data: u0.data.clone(), w: vec![] })
        .collect();
    let mut fam = ImmersionFamily {
        kind,
        domain: u0.domain.clone(),
        basepoint: u0.basepoint,
        value: u0.value,
        charts,
        members,
        target_flux: target,
        flux_trace: vec![],
        period_trace: vec![],
        notices: vec![notice],
        runge_degree: 0,
        runge_error: 0.0,
        spray_sigma_min: vec![],
        control: None,
    };
    fill_traces(&mut fam, opts)?;
    Ok(fam)
}

/// The constant isotopy u_t = u0 on an n_t-point grid.
pub fn constant_isotopy(u0: &MinimalImmersion, opts: &IsotopyOptions) -> Result<ImmersionFamily> {
    let l = homology_basis(&u0.domain)?.len();
    let flux = u0.fluxes(4 * opts.n_s)?;
    debug_assert_eq!(flux.len(), l);
    constant_family(u0, FamilyKind::Constant, opts, "constant family".into(), flux)
}

/// A zero of f on the grid would make u_t a branched immersion there. The
/// extension can grow by many orders of magnitude away from the curves,
/// so |f_t| is compared with |f_0| pointwise rather than with its maximum.
fn check_nonvanishing(data: &WeierstrassData, base: &WeierstrassData, grid: &[C64], t: f64) -> Result<()> {
    for &z in grid {
        if !(cnorm(&data.f(z)) > 1e-10 * cnorm(&base.f(z))) {
            return Err(Error::VanishingOnDomain { t, re: z.re, im: z.im });
        }
    }
    Ok(())
}

fn t_of(k: usize, n_t: usize) -> f64 {
    if n_t <= 1 {
        0.0
    } else {
        k as f64 / (n_t - 1) as f64
    }
}

fn fill_traces(fam: &mut ImmersionFamily, opts: &IsotopyOptions) -> Result<()> {
    let n = 4 * opts.n_s;
    let charts = fam.charts.clone();
    let traces: Vec<Vec<C3>> = fam
        .members
        .par_iter()
        .map(|m| charts.iter().map(|c| complex_period(&m.data, c, n)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    fam.flux_trace = traces.iter().map(|v| v.iter().map(im3).collect()).collect();
    fam.period_trace = traces;
    Ok(())
}

/// Isotopy u_t, t in [0, 1], fixed at t = 0, with Flux(u_1) = 0 and u_1 the
/// real part of a holomorphic null curve.
pub fn flux_to_zero(u0: &MinimalImmersion, opts: &IsotopyOptions) -> Result<ImmersionFamily> {
    let l = homology_basis(&u0.domain)?.len();
    run_flux_isotopy(u0, &vec![[0.0; 3]; l], FamilyKind::FluxToZero, opts)
}

/// Isotopy with Flux(u_1) equal to the given target on each homology curve.
pub fn prescribe_flux(u0: &MinimalImmersion, target: &[R3], opts: &IsotopyOptions) -> Result<ImmersionFamily> {
    run_flux_isotopy(u0, target, FamilyKind::PrescribeFlux, opts)
}

fn run_flux_isotopy(u0: &MinimalImmersion, target: &[R3], kind: FamilyKind, opts: &IsotopyOptions) -> Result<ImmersionFamily> {
    crate::path::check_sample_count(opts.n_s)?;
    if opts.n_t < 2 {
        return Err(Error::Config("t-samples must be at least 2".into()));
    }
    u0.validate(opts.tol_period)?;
    let charts = homology_basis(&u0.domain)?;
    if target.len() != charts.len() {
        return Err(Error::Config(format!("expected {} flux vectors, got {}", charts.len(), target.len())));
    }
    let grid = u0.domain.grid(16, 64, 0.02);
    let (flat, _) = is_flat(&u0.data, &grid);
    if flat {
        if kind == FamilyKind::FluxToZero {
            return constant_family(u0, FamilyKind::Constant, opts, "input is flat; flux is zero and the constant family is returned".into(), target.to_vec());
        }
        return Err(Error::FlatInput);
    }
    let flux0 = u0.fluxes(4 * opts.n_s)?;
    if flux0.iter().zip(target).all(|(a, b)| norm3(&sub3(a, b)) <= opts.tol_flux) {
        return constant_family(u0, FamilyKind::Constant, opts, "flux already equals the target; constant family".into(), target.to_vec());
    }

    let fixed = Segment::new(FIXED_SEGMENT.0, FIXED_SEGMENT.1)?;
    let spray_seg = Segment::new(SPRAY_SEGMENT.0, SPRAY_SEGMENT.1)?;
    let nonflat_seg = Segment::new(NONFLAT_SEGMENT.0, NONFLAT_SEGMENT.1)?;
    let mut notices = vec![];
    let mut per_curve: Vec<Vec<PeriodicPath>> = vec![];
    for (j, ch) in charts.iter().enumerate() {
        let sigma0 = restrict_to_curve(&|z| u0.data.f(z), &u0.data.theta, ch, opts.n_s)?;
        let pair0 = loop_to_pair(&sigma0, 0, [0.0; 3]);
        let nonflat_on = if is_nonflat_on(&pair0.h, &nonflat_seg)? {
            Some(nonflat_seg)
        } else {
            notices.push(format!("curve {j}: boundary trace is planar near the fixed segment; nonflatness is monitored only"));
            None
        };
        let fam = prescribe_period_isotopy_with(&pair0, target[j], fixed, nonflat_on, opts.n_t, opts.tol_period)?;
        let mut loops = fam.loops();
        // Keep the t = 0 loop bitwise equal to the restriction.
        loops[0] = sigma0;
        per_curve.push(loops);
    }
    let base: Vec<Vec<PeriodicPath>> = (0..opts.n_t).map(|t| per_curve.iter().map(|v| v[t].clone()).collect()).collect();
    let spray = build_spray(base.clone(), &vec![spray_seg; charts.len()], opts.spray)?;
    let extender = RungeExtender::new(&u0.domain, &charts, u0.data.theta, &base, &opts.runge)?;
    let map = ExtendedMap { spray: &spray, extender: &extender };

    let targets: Vec<Vec<C64>> = (0..opts.n_t)
        .map(|k| {
            let t = t_of(k, opts.n_t);
            flux0
                .iter()
                .zip(target)
                .flat_map(|(a, b)| {
                    let v = add3(&scale3(1.0 - t, a), &scale3(t, b));
                    complexify(&[0.0; 3], &v).to_vec()
                })
                .collect()
        })
        .collect();
    let scale = flux0.iter().map(norm3).fold(1.0, f64::max);
    let sopts = SolveOptions { tol: 1e-12 * scale, radius_w: opts.spray.radius_w, ..Default::default() };
    let control = solve_w(&map, &targets, &sopts)?;

    let members: Vec<FamilyMember> = (0..opts.n_t)
        .into_par_iter()
        .map(|k| -> Result<FamilyMember> {
            let data = if k == 0 {
                u0.data.clone()
            } else {
                WeierstrassData { map: NullMap::Spinor(map.extension(k, &control.w[k])?), theta: u0.data.theta }
            };
            if k > 0 {
                check_nonvanishing(&data, &u0.data, &grid, t_of(k, opts.n_t))?;
            }
            Ok(FamilyMember { t: t_of(k, opts.n_t), data, w: control.w[k].clone() })
        })
        .collect::<Result<_>>()?;
    let mut fam = ImmersionFamily {
        kind,
        domain: u0.domain.clone(),
        basepoint: u0.basepoint,
        value: u0.value,
        charts,
        members,
        target_flux: target.to_vec(),
        flux_trace: vec![],
        period_trace: vec![],
        notices,
        runge_degree: extender.degree,
        runge_error: extender.calibration_error,
        spray_sigma_min: spray.sigma_min.clone(),
        control: Some(control),
    };
    fill_traces(&mut fam, opts)?;
    Ok(fam)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub max_conformality: Vec<f64>,
    pub max_real_period: Vec<f64>,
    pub min_metric_density: Vec<f64>,
    pub flat: Vec<bool>,
    /// flux[t][curve]
    pub flux: Vec<Vec<R3>>,
    pub pi1_start: Vec<Z2>,
    pub pi1_end: Vec<Z2>,
    pub null_closure: Option<f64>,
    pub notices: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!("{:<28} {:>12.4e}  threshold {:>10.3e}  {}\n", c.name, c.value, c.threshold, if c.pass { "PASS" } else { "FAIL" }));
        }
        s.push_str(&format!("pi1 classes at t=0: {:?}\n", self.pi1_start.iter().map(|z| z.0).collect::<Vec<_>>()));
        s.push_str(&format!("pi1 classes at t=1: {:?}\n", self.pi1_end.iter().map(|z| z.0).collect::<Vec<_>>()));
        if let Some(c) = self.null_closure {
            s.push_str(&format!("null curve closure error: {c:.4e}\n"));
        }
        let nflat = self.flat.iter().filter(|f| **f).count();
        s.push_str(&format!("flat members: {nflat} of {}\n", self.flat.len()));
        for n in &self.notices {
            s.push_str(&format!("notice: {n}\n"));
        }
        s
    }
}

pub(crate) fn check(name: &str, value: f64, threshold: f64) -> Check {
    Check { name: name.into(), value, threshold, pass: value <= threshold }
}

/// Class of the loop of f theta on each curve.
pub fn pi1_classes(data: &WeierstrassData, charts: &[CurveChart], n: usize) -> Result<Vec<Z2>> {
    charts.iter().map(|c| pi1_class(&restrict_to_curve(&|z| data.f(z), &data.theta, c, n)?)).collect()
}

/// Recompute every residual of the family from scratch on a grid and with
/// quadrature twice as fine as the construction used.
pub fn verify(fam: &ImmersionFamily, opts: &IsotopyOptions) -> Result<VerificationReport> {
    verify_at(fam, opts, 2)
}

/// Evaluates f for every member at a point, computing a basis shared by
/// several members only once.
struct FamilyEval<'a> {
    members: &'a [FamilyMember],
}

impl FamilyEval<'_> {
    fn eval(&self, z: C64, out: &mut Vec<C3>) {
        out.clear();
        let mut cache: Option<(*const ArnoldiBasis, Vec<C64>)> = None;
        for m in self.members {
            if let NullMap::Spinor(ext) = &m.data.map {
                if let SpinorRep::Arnoldi { basis, a, b } = &ext.rep {
                    let ptr = Arc::as_ptr(basis);
                    if cache.as_ref().map_or(true, |c| c.0 != ptr) {
                        cache = Some((ptr, basis.eval(z)));
                    }
                    let v = &cache.as_ref().unwrap().1;
                    let dot = |c: &[C64]| v.iter().zip(c).map(|(x, y)| x * y).sum::<C64>();
                    let s = SpinorPair::new(dot(a), dot(b));
                    out.push(cscale(ext.prefactor(z), &spinor_to_null(&s)));
                    continue;
                }
            }
            out.push(m.data.f(z));
        }
    }
}

pub fn verify_at(fam: &ImmersionFamily, opts: &IsotopyOptions, refine: usize) -> Result<VerificationReport> {
    if fam.members.is_empty() {
        return Ok(VerificationReport {
            checks: vec![],
            max_conformality: vec![],
            max_real_period: vec![],
            min_metric_density: vec![],
            flat: vec![],
            flux: vec![],
            pi1_start: vec![],
            pi1_end: vec![],
            null_closure: None,
            notices: fam.notices.clone(),
        });
    }
    let nm = fam.members.len();
    let ev = FamilyEval { members: &fam.members };
    let theta = fam.members[0].data.theta;

    // Pointwise residuals on the grid, in chunks across threads.
    let grid = fam.domain.grid(refine * opts.grid.0, refine * opts.grid.1, 0.02);
    let (conf, dens) = grid
        .par_chunks(256)
        .map(|chunk| {
            let mut conf = vec![0.0f64; nm];
            let mut dens = vec![f64::INFINITY; nm];
            let mut vals = Vec::with_capacity(nm);
            for &z in chunk {
                ev.eval(z, &mut vals);
                let tf = theta.factor(z);
                for (k, v) in vals.iter().enumerate() {
                    conf[k] = conf[k].max(null_residual(v));
                    let d = 0.5 * cnorm(v).powi(2) * tf.norm_sqr();
                    dens[k] = dens[k].min(if d.is_finite() { d } else { 0.0 });
                }
            }
            (conf, dens)
        })
        .reduce(
            || (vec![0.0; nm], vec![f64::INFINITY; nm]),
            |(a, b), (c, d)| (a.iter().zip(&c).map(|(x, y)| x.max(*y)).collect(), b.iter().zip(&d).map(|(x, y)| x.min(*y)).collect()),
        );

    // Periods by trapezoid with refine * 4 n_s points per curve.
    let nq = refine * 4 * opts.n_s;
    let mut periods = vec![vec![ZERO3; fam.charts.len()]; nm];
    let mut vals = Vec::with_capacity(nm);
    for (j, ch) in fam.charts.iter().enumerate() {
        for k in 0..nq {
            let x = k as f64 / nq as f64;
            let z = ch.z(x);
            let w = theta.factor(z) * ch.dz_dx(x) / nq as f64;
            ev.eval(z, &mut vals);
            for (i, v) in vals.iter().enumerate() {
                periods[i][j] = cadd(&periods[i][j], &cscale(w, v));
            }
        }
    }

    let flat_grid = fam.domain.grid(16, 64, 0.02);
    let mut flat_vals = vec![Vec::with_capacity(flat_grid.len()); nm];
    for &z in &flat_grid {
        ev.eval(z, &mut vals);
        for (i, v) in vals.iter().enumerate() {
            flat_vals[i].push(*v);
        }
    }
    let flat: Vec<bool> = flat_vals.iter().map(|v| is_flat_values(v).0).collect();

    let max_rp: Vec<f64> = periods.iter().map(|ps| ps.iter().map(|p| norm3(&re3(p))).fold(0.0, f64::max)).collect();
    let flux: Vec<Vec<R3>> = periods.iter().map(|ps| ps.iter().map(im3).collect()).collect();
    let last = &flux[nm - 1];
    let flux_err = last.iter().zip(&fam.target_flux).map(|(a, b)| norm3(&sub3(a, b))).fold(0.0, f64::max);
    let max_conf = conf.iter().copied().fold(0.0, f64::max);
    let min_dens = dens.iter().copied().fold(f64::INFINITY, f64::min);

    let mut checks = vec![
        check("conformality", max_conf, 10.0 * opts.tol_null),
        check("real_periods", max_rp.iter().copied().fold(0.0, f64::max), opts.tol_period),
        check("final_flux_error", flux_err, opts.tol_flux),
        Check { name: "min_metric_density".into(), value: min_dens, threshold: 0.0, pass: min_dens > 0.0 },
    ];
    let pi1_start = pi1_classes(&fam.members[0].data, &fam.charts, opts.n_s)?;
    let pi1_end = pi1_classes(&fam.members[nm - 1].data, &fam.charts, refine * opts.n_s)?;
    checks.push(Check {
        name: "pi1_class_preserved".into(),
        value: pi1_start.iter().zip(&pi1_end).filter(|(a, b)| a != b).count() as f64,
        threshold: 0.0,
        pass: pi1_start == pi1_end,
    });
    let null_closure = if fam.kind != FamilyKind::PrescribeFlux {
        let c = periods[nm - 1].iter().map(cnorm).fold(0.0, f64::max);
        checks.push(check("null_curve_closure", c, opts.tol_flux));
        Some(c)
    } else {
        None
    };
    let mut notices = fam.notices.clone();
    if flat.iter().any(|f| *f) && fam.kind != FamilyKind::Constant {
        notices.push("some members are flat".into());
    }
    Ok(VerificationReport {
        checks,
        max_conformality: conf,
        max_real_period: max_rp,
        min_metric_density: dens,
        flat,
        flux,
        pi1_start,
        pi1_end,
        null_closure,
        notices,
    })
}

/// Label of the path component of an immersion: the pi_1 class of f theta
/// on each generator, an element of (Z_2)^l.
pub fn component_label(u: &MinimalImmersion, n: usize) -> Result<Vec<Z2>> {
    pi1_classes(&u.data, &homology_basis(&u.domain)?, n)
}

/// Classes of the generators under one seeded sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub classes: Vec<Z2>,
    pub n_samples: usize,
    pub phase: f64,
}

impl Classification {
    pub fn to_text(&self) -> String {
        let mut s = format!("samples {}  phase {:.6}\n", self.n_samples, self.phase);
        for (j, c) in self.classes.iter().enumerate() {
            s.push_str(&format!("generator {j}: class {c}\n"));
        }
        let label: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        s.push_str(&format!("component label: ({})\n", label.join(", ")));
        s
    }
}

/// pi_1 class of f theta on every generator, sampled with a seeded number
/// of points and a seeded starting phase. Neither choice may change the
/// answer.
pub fn classify(u: &MinimalImmersion, seed: u64) -> Result<Classification> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_samples = [128, 256, 512, 1024][rng.gen_range(0..4)];
    let phase: f64 = rng.gen();
    let theta = u.data.theta;
    let classes = homology_basis(&u.domain)?
        .iter()
        .map(|ch| {
            let p = PeriodicPath::from_fn(n_samples, |x| {
                let y = x + phase;
                let z = ch.z(y);
                cscale(theta.factor(z) * ch.dz_dx(y), &u.data.f(z))
            })?;
            pi1_class(&p)
        })
        .collect::<Result<_>>()?;
    Ok(Classification { classes, n_samples, phase })
}
