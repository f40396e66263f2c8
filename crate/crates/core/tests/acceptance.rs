//! Acceptance suite: one PASS/FAIL line per criterion, at the stated
//! tolerances and runtime limits. Runs without the libtest harness so the
//! lines always reach the output; exits nonzero if any criterion fails.

mod common;

use common::{c, catenoid_loop, random_circle};
use fluxiso::isotopy::*;
use fluxiso::labyrinth::*;
use fluxiso::loops::*;
use fluxiso::nullquadric::{pi1_class, spinor_to_null, SpinorPair, TangentFlow, Z2};
use fluxiso::path::PeriodicPath;
use fluxiso::riemann::*;
use fluxiso::sprays::*;
use fluxiso::vec3::*;
use fluxiso::weierstrass::*;
use fluxiso::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

/// Outcome of one criterion: failed sub-checks and a short summary.
struct Outcome {
    failures: Vec<String>,
    summary: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: vec![], summary: String::new() }
    }
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
    fn note(&mut self, s: impl AsRef<str>) {
        if !self.summary.is_empty() {
            self.summary.push_str("; ");
        }
        self.summary.push_str(s.as_ref());
    }
}

fn criterion(id: usize, name: &str, limit: Option<Duration>, body: impl FnOnce(&mut Outcome)) -> bool {
    let start = Instant::now();
    let mut out = Outcome::new();
    let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| body(&mut out)));
    let elapsed = start.elapsed();
    if let Err(e) = res {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
        out.failures.push(format!("panicked: {msg}"));
    }
    if let Some(l) = limit {
        out.require(elapsed < l, format!("runtime {:.1?} over the limit {:.0?}", elapsed, l));
    }
    let pass = out.failures.is_empty();
    println!("criterion {id} [{name}]: {} ({:.2?}) {}", if pass { "PASS" } else { "FAIL" }, elapsed, out.summary);
    for f in &out.failures {
        println!("    - {f}");
    }
    pass
}

fn unit_circle() -> CurveChart {
    CurveChart { center: c(0.0, 0.0), radius: 1.0 }
}

/// The residual suite shared by the two isotopy criteria.
fn isotopy_suite(out: &mut Outcome, u: &MinimalImmersion, fam: &ImmersionFamily, target: R3, opts: &IsotopyOptions) {
    let rep = verify(fam, opts).unwrap();
    let last = &fam.members.last().unwrap().data;
    let final_flux = flux(last, &unit_circle(), 4096).unwrap();
    let err = norm3(&sub3(&final_flux, &target));
    out.note(format!("|Flux(u1) - target| = {err:.2e}"));
    out.require(err <= 1e-8, format!("final flux error {err:e}"));
    out.require(fam.n_t() == 64, format!("{} t-samples", fam.n_t()));
    let conf = rep.max_conformality.iter().copied().fold(0.0, f64::max);
    out.note(format!("conformality {conf:.2e}"));
    out.require(conf <= 1e-9, format!("conformality {conf:e}"));
    let rp = rep.max_real_period.iter().copied().fold(0.0, f64::max);
    out.note(format!("real periods {rp:.2e}"));
    out.require(rp <= 1e-9, format!("real period {rp:e}"));
    out.require(rep.min_metric_density.iter().all(|d| *d > 0.0), "metric density vanishes");
    out.require(fam.members[0].data == u.data, "t = 0 coefficients differ from the input");
    out.require(rep.pi1_start == rep.pi1_end, "pi1 class changed");
}

fn criterion_1() -> bool {
    criterion(1, "catenoid flux", Some(Duration::from_secs(1)), |out| {
        let u = catalog("catenoid").unwrap();
        let f = flux(&u.data, &unit_circle(), 256).unwrap();
        // Residue oracle: the only term of f3 theta = dz/z with a residue
        // gives 2 pi i, so the flux is (0, 0, 2 pi).
        let err = norm3(&sub3(&f, &[0.0, 0.0, 2.0 * PI]));
        out.note(format!("error {err:.2e}"));
        out.require(err <= 1e-10, format!("flux {f:?}"));
    })
}

fn criterion_2() -> bool {
    criterion(2, "flux to zero", Some(Duration::from_secs(60)), |out| {
        let u = catalog("catenoid").unwrap();
        let opts = IsotopyOptions::default();
        let fam = flux_to_zero(&u, &opts).unwrap();
        isotopy_suite(out, &u, &fam, [0.0; 3], &opts);
        let last = &fam.members.last().unwrap().data;
        let closure = cnorm(&complex_period(last, &unit_circle(), 4096).unwrap());
        out.note(format!("null-curve period {closure:.2e}"));
        out.require(closure <= 1e-8, format!("null curve period {closure:e}"));
        let nc = fam.null_curve().unwrap();
        out.require(nc.closure_error <= 1e-8, "stored closure error");
    })
}

fn criterion_3() -> bool {
    criterion(3, "prescribed flux", Some(Duration::from_secs(60)), |out| {
        let u = catalog("catenoid").unwrap();
        let opts = IsotopyOptions::default();
        let target = [0.0, 0.0, 4.0 * PI];
        let fam = prescribe_flux(&u, &[target], &opts).unwrap();
        isotopy_suite(out, &u, &fam, target, &opts);
    })
}

fn criterion_4() -> bool {
    criterion(4, "zero-period pairs", Some(Duration::from_secs(30)), |out| {
        let (mut worst_res, mut worst_int) = (0.0f64, 0.0f64);
        for seed in 0..20u64 {
            let h = random_circle(seed, 256);
            let k = (seed % 4) as i64;
            match make_zero_period_pair(&h, k, 0.05) {
                Ok(z) => {
                    let res = z.pair.residuals().max();
                    let int = norm3(&z.pair.g_integral());
                    worst_res = worst_res.max(res);
                    worst_int = worst_int.max(int);
                    out.require(res <= 1e-10, format!("seed {seed}: residual {res:e}"));
                    out.require(int <= 1e-10, format!("seed {seed}: |int g| {int:e}"));
                    let class = pi1_class(&pair_to_loop(&z.pair)).unwrap();
                    out.require(class == Z2::from_int(k) && z.spin_class == class, format!("seed {seed}: class {class:?}, wanted {k}"));
                }
                Err(e) => out.require(false, format!("seed {seed}: {e}")),
            }
        }
        out.note(format!("max residual {worst_res:.2e}, max |int g| {worst_int:.2e}"));
    })
}

/// Catenoid boundary loops deformed to zero period on the fixed segment,
/// as the flux driver builds them.
fn catenoid_family(n_t: usize) -> Vec<Vec<PeriodicPath>> {
    let p0 = loop_to_pair(&catenoid_loop(256), 0, [0.0; 3]);
    let fixed = Segment::new(FIXED_SEGMENT.0, FIXED_SEGMENT.1).unwrap();
    let fam = prescribe_period_isotopy(&p0, [0.0; 3], fixed, None, n_t).unwrap();
    fam.loops().into_iter().map(|l| vec![l]).collect()
}

fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn criterion_5() -> bool {
    criterion(5, "spray domination", None, |out| {
        let base = catenoid_family(64);
        let seg = Segment::new(SPRAY_SEGMENT.0, SPRAY_SEGMENT.1).unwrap();
        let spray = build_spray(base.clone(), &[seg], SprayConfig::default()).unwrap();
        let mut worst = f64::INFINITY;
        for t in 0..base.len() {
            let zero = vec![c(0.0, 0.0); spray.controls.len()];
            let s = singular_values(&period_jacobian(&spray, t, &zero).unwrap());
            worst = worst.min(*s.last().unwrap());
            out.require(s.len() == 3 && s[2] > 1e-4, format!("t index {t}: singular values {s:?}"));
        }
        out.note(format!("full spray min sigma {worst:.3e} over {} t", base.len()));

        let fixed = build_spray_fixed_third(base.clone(), &[seg], SprayConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut moved: f64 = 0.0;
        for _ in 0..20 {
            let w: Vec<C64> = (0..fixed.controls.len()).map(|_| c(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3))).collect();
            let t = rng.gen_range(0..base.len());
            for (a, b) in fixed.loops(t, &w)[0].samples().iter().zip(base[t][0].samples()) {
                out.require(a[2] == b[2], "third component moved");
                moved = moved.max((a[0] - b[0]).norm());
            }
        }
        out.require(moved > 1e-3, "fixed-third spray does not move the loop");
        let mut worst2 = f64::INFINITY;
        for t in 0..base.len() {
            let zero = vec![c(0.0, 0.0); fixed.controls.len()];
            let j = period_jacobian(&fixed, t, &zero).unwrap();
            out.require(j.nrows() == 2, "fixed-third Jacobian rows");
            let s = singular_values(&j);
            worst2 = worst2.min(s[1]);
            out.require(s[1] > 1e-4, format!("fixed-third t index {t}: {s:?}"));
        }
        out.note(format!("fixed-third: third component bitwise equal, min sigma {worst2:.3e}"));
    })
}

fn criterion_6() -> bool {
    criterion(6, "completeness step", Some(Duration::from_secs(300)), |out| {
        let u = catalog("catenoid").unwrap();
        let fam = constant_isotopy(&u, &IsotopyOptions::default()).unwrap();
        let done = complete_step(&fam, AnnularCore { r_in: 0.8, r_out: 1.25 }, c(1.0, 0.0), 0.5, &CompleteOptions::default()).unwrap();
        for ck in &done.checks {
            out.require(ck.pass, format!("{} = {:e} (threshold {:e})", ck.name, ck.value, ck.threshold));
        }
        out.require(done.anchored, "(I) not anchored");
        out.require(done.third_component_error <= 1e-10, format!("(II) {:e}", done.third_component_error));
        out.require(done.flux_error <= 1e-10, format!("(III) {:e}", done.flux_error));
        let d_min = done.distances.iter().copied().fold(f64::INFINITY, f64::min);
        out.require(done.distances.iter().all(|d| *d > done.tau - done.delta), "(IV) distance below tau - delta");
        let d1 = *done.distances.last().unwrap();
        out.require(d1 > 2.0, format!("(V) dist at t = 1 is {d1}"));
        out.require(done.est1_ratio > 1.0 - CompleteOptions::default().est_slack && done.est2_ratio > 1.0, "est1/est2");
        out.require(done.est3_min_length > done.est3_bound, "est3");
        out.note(format!(
            "N = {}, tau = {:.4}, min dist = {:.4}, dist(t=1) = {:.4}, est1 {:.3}, est2 {:.3}, est3 {:.3} > {:.3}",
            done.setup.params.n, done.tau, d_min, d1, done.est1_ratio, done.est2_ratio, done.est3_min_length, done.est3_bound
        ));
    })
}

fn criterion_7() -> bool {
    criterion(7, "labyrinth combinatorics", None, |out| {
        let band = AnnulusBand { end: 0, k: 0, r: 1.0, big_r: 2.5 };
        for n in [2usize, 3, 5] {
            let lab = build_labyrinth(&band, n).unwrap();
            let cert = lab.certify();
            out.require(cert.count == 2 * n * n, format!("N = {n}: {} sets", cert.count));
            out.require(cert.pairwise_disjoint, format!("N = {n}: overlap"));
            out.require(cert.clearances_exact && cert.inside_band, format!("N = {n}: clearance certificate"));
            let gap = 1.0 / (2.0 * (n as f64).powi(3));
            for w in lab.sets.windows(2) {
                out.require((w[0].r_lo - w[1].r_hi - gap).abs() <= 4.0 * f64::EPSILON * band.big_r, format!("N = {n}: gap"));
            }
        }
        out.note("N = 2, 3, 5: 8, 18, 50 sets, certified");
    })
}

/// Loop with spinor lift e^{i pi k x} (p, q) for trigonometric p, q.
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

fn criterion_8() -> bool {
    criterion(8, "pi1 classification", None, |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..10 {
            let k = i as i64 % 4;
            let coef: Vec<(f64, f64)> = (0..rng.gen_range(1..4)).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
            let want = Z2::from_int(k);
            let g = spinor_loop(k, &coef, 64);
            out.require(pi1_class(&g).unwrap() == want, format!("loop {i}: class"));
            for n in [128, 256, 512, 1024] {
                out.require(pi1_class(&g.resample(n).unwrap()).unwrap() == want, format!("loop {i}: resampled to {n}"));
                out.require(pi1_class(&spinor_loop(k, &coef, n)).unwrap() == want, format!("loop {i}: sampled at {n}"));
            }
            for _ in 0..5 {
                let f = TangentFlow::ALL[rng.gen_range(0..4)];
                let (a, b) = (c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                let n = g.len();
                let pert = g.map(|j, z| f.flow(z, (a + b * (2.0 * PI * j as f64 / n as f64).cos()) * 1e-3));
                out.require(pi1_class(&pert).unwrap() == want, format!("loop {i}: perturbed"));
            }
            out.require(pi1_class(&g.concat(&g).unwrap()).unwrap() == Z2::ZERO, format!("loop {i}: square"));
        }
        let u = catalog("catenoid").unwrap();
        let labels: Vec<Vec<Z2>> = (0..5).map(|s| classify(&u, s).unwrap().classes).collect();
        out.require(labels.iter().all(|l| *l == labels[0]), format!("classify labels {labels:?}"));
        out.note(format!("10 loops stable; catenoid label {:?} over 5 seeds", labels[0].iter().map(|z| z.0).collect::<Vec<_>>()));
    })
}

/// Adaptive Simpson on [0, 1] for a complex function.
fn simpson(f: &dyn Fn(f64) -> C64, a: f64, b: f64, tol: f64, depth: u32) -> C64 {
    let m = 0.5 * (a + b);
    let whole = (f(a) + f(m) * 4.0 + f(b)) * ((b - a) / 6.0);
    let (l, r) = (0.5 * (a + m), 0.5 * (m + b));
    let left = (f(a) + f(l) * 4.0 + f(m)) * ((m - a) / 6.0);
    let right = (f(m) + f(r) * 4.0 + f(b)) * ((b - m) / 6.0);
    if depth > 30 || (left + right - whole).norm() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, tol / 2.0, depth + 1) + simpson(f, m, b, tol / 2.0, depth + 1)
}

fn criterion_9() -> bool {
    criterion(9, "oracle equivalences", None, |out| {
        let cat = catalog("catenoid").unwrap();
        let ch = unit_circle();

        // Residue and adaptive contour integration against the trapezoid period.
        let s = restrict_to_curve(&|z| cat.data.f(z), &cat.data.theta, &ch, 256).unwrap();
        let p = period(&s);
        let adaptive: Vec<C64> = (0..3)
            .map(|i| {
                let g = |x: f64| {
                    let z = ch.z(x);
                    cat.data.theta.factor(z) * ch.dz_dx(x) * cat.data.f(z)[i]
                };
                (0..8).map(|k| simpson(&g, k as f64 / 8.0, (k + 1) as f64 / 8.0, 1e-14, 0)).sum()
            })
            .collect();
        let e_contour = (0..3).map(|i| (p[i] - adaptive[i]).norm()).fold(0.0, f64::max);
        out.require(e_contour <= 1e-10, format!("contour oracle {e_contour:e}"));
        let e_residue = cnorm(&csub(&p, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 2.0 * PI)]));
        out.require(e_residue <= 1e-10, format!("residue oracle {e_residue:e}"));

        // Refinement of periods.
        let fine = restrict_to_curve(&|z| cat.data.f(z), &cat.data.theta, &ch, 512).unwrap();
        let e_ref = cnorm(&csub(&p, &period(&fine)));
        out.require(e_ref <= 1e-12, format!("refinement {e_ref:e}"));

        // Two-path integration around the hole.
        let arc = |end: f64| -> Vec<C64> { (0..=64).map(|k| C64::from_polar(1.0, end * k as f64 / 64.0)).collect() };
        let e_path = norm3(&sub3(&cat.integrate(&arc(PI)).unwrap(), &cat.integrate(&arc(-PI)).unwrap()));
        out.require(e_path <= 1e-10, format!("two-path {e_path:e}"));

        // SVD rank: catenoid arc spans two complex directions.
        let seg = Segment::new(0.0, 0.25).unwrap();
        let idx = seg.indices(256);
        let m = DMatrix::from_fn(idx.len(), 3, |r, col| {
            let z = s.samples()[idx[r]];
            z[col] / cnorm(&z)
        });
        let sv = singular_values(&m);
        out.require(sv[1] > 1e-3 * sv[0] && nondegenerate_on(&s, &seg).unwrap(), format!("SVD rank {sv:?}"));

        // Runge extension of the catenoid loop against the global data.
        let d = CircularDomain::annulus(0.5, 2.0).unwrap();
        let lp = catenoid_loop(256);
        let ext = RungeExtender::new(&d, &homology_basis(&d).unwrap(), cat.data.theta, &[vec![lp.clone()]], &RungeConfig::default())
            .unwrap()
            .extend(0, &[lp])
            .unwrap();
        let e_curve = ch.points(512).iter().map(|&z| cnorm(&csub(&ext.f(z), &cat.data.f(z)))).fold(0.0, f64::max);
        let e_grid = d.grid(16, 64, 0.01).iter().map(|&z| cnorm(&csub(&ext.f(z), &cat.data.f(z))) / cnorm(&cat.data.f(z))).fold(0.0, f64::max);
        out.require(e_curve <= 1e-8 && e_grid <= 1e-6, format!("Runge {e_curve:e} {e_grid:e}"));

        // Flat detection against an explicit rank computation.
        let grid = d.grid(8, 32, 0.01);
        let flat = catalog("flat_exponential").unwrap();
        out.require(is_flat(&flat.data, &grid).0 && !is_flat(&cat.data, &grid).0, "flat detection");

        out.note(format!(
            "contour {e_contour:.1e}, residue {e_residue:.1e}, refinement {e_ref:.1e}, two-path {e_path:.1e}, sigma2/sigma1 {:.2e}, Runge {e_curve:.1e}/{e_grid:.1e}",
            sv[1] / sv[0]
        ));
    })
}

fn main() {
    // The libtest flags (filters, --nocapture) are accepted and ignored.
    let results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(), criterion_7(), criterion_8(), criterion_9()];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
