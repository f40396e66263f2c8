//! Conformal pairs (h, g) on the circle, the period-zero construction, the
//! period-prescribing isotopy and regular homotopies between immersions.

use crate::error::{Error, Result};
use crate::fourier::smooth_step;
use crate::linalg::{damped_lstsq, damped_lstsq_real, singular_values, singular_values_real};
use crate::nullquadric::{lift_loop, pi1_class, spinor_to_null, SpinorPair, Z2, DEFAULT_TOL_NULL};
use crate::path::{check_sample_count, PeriodicPath};
use crate::vec3::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Closed arc [start, end] of the circle R/Z, with start in [0, 1) and
/// start < end < start + 1.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let s = start.rem_euclid(1.0);
        let e = s + (end - start);
        if !(end > start) || end - start >= 1.0 || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidSegment { start, end });
        }
        Ok(Segment { start: s, end: e })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Position in [0, 1] along the segment, if x lies in it.
    pub fn local(&self, x: f64) -> Option<f64> {
        let d = (x - self.start).rem_euclid(1.0);
        if d <= self.length() + 1e-15 {
            Some((d / self.length()).min(1.0))
        } else {
            None
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.local(x).is_some()
    }

    pub fn disjoint(&self, other: &Segment) -> bool {
        let d1 = (other.start - self.start).rem_euclid(1.0);
        let d2 = (self.start - other.start).rem_euclid(1.0);
        d1 > self.length() && d2 > other.length()
    }

    /// Sample indices x_k = k/n inside the segment.
    pub fn indices(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&k| self.contains(k as f64 / n as f64)).collect()
    }

    pub fn at(&self, u: f64) -> f64 {
        (self.start + u * self.length()).rem_euclid(1.0)
    }

    pub fn sub(&self, u0: f64, u1: f64) -> Segment {
        Segment { start: self.at(u0), end: self.at(u0) + (u1 - u0) * self.length() }
    }
}

/// C-infinity bump on a segment: exp(1 - 1/(1 - r^2)), r in (-1, 1).
pub fn segment_bump(seg: &Segment, x: f64) -> f64 {
    match seg.local(x) {
        Some(u) if u > 0.0 && u < 1.0 => {
            let r = 2.0 * u - 1.0;
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        }
        _ => 0.0,
    }
}

/// Plateau equal to 1 on the middle of the segment, with smooth ramps of
/// relative width `ramp` at both ends.
pub fn segment_plateau(seg: &Segment, x: f64, ramp: f64) -> f64 {
    match seg.local(x) {
        Some(u) => smooth_step(u / ramp) * smooth_step((1.0 - u) / ramp),
        None => 0.0,
    }
}

pub fn real_derivative(v: &[R3]) -> Vec<R3> {
    PeriodicPath::from_real(v).expect("sample count").derivative().real_part()
}

/// Antiderivative of `dv` normalised so that its value at `anchor` is
/// `value`. The mean of `dv` is ignored.
pub fn real_antiderivative(dv: &[R3], anchor: usize, value: R3) -> Vec<R3> {
    let a = PeriodicPath::from_real(dv).expect("sample count").antiderivative().real_part();
    let shift = sub3(&value, &a[anchor]);
    a.iter().map(|p| add3(p, &shift)).collect()
}

/// Pair of loops (h, g) with h' . g = 0 and |h'| = |g|. `dh` is stored
/// separately so that constructions can fix it exactly on a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalPair {
    pub h: Vec<R3>,
    pub dh: Vec<R3>,
    pub g: Vec<R3>,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PairResiduals {
    /// max |g . h'| / |h'|^2
    pub orthogonality: f64,
    /// max ||g| - |h'|| / |h'|
    pub norm_mismatch: f64,
}

impl PairResiduals {
    pub fn max(&self) -> f64 {
        self.orthogonality.max(self.norm_mismatch)
    }
}

impl ConformalPair {
    pub fn new(h: Vec<R3>, g: Vec<R3>) -> Result<Self> {
        check_sample_count(h.len())?;
        if g.len() != h.len() {
            return Err(Error::InvalidSampleCount(g.len()));
        }
        let dh = real_derivative(&h);
        Ok(ConformalPair { h, dh, g })
    }

    pub fn from_derivative(dh: Vec<R3>, g: Vec<R3>, anchor: usize, value: R3) -> Result<Self> {
        check_sample_count(dh.len())?;
        let h = real_antiderivative(&dh, anchor, value);
        Ok(ConformalPair { h, dh, g })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn residuals(&self) -> PairResiduals {
        let mut o: f64 = 0.0;
        let mut m: f64 = 0.0;
        for (d, g) in self.dh.iter().zip(&self.g) {
            let s = norm3(d);
            o = o.max(dot3(d, g).abs() / (s * s));
            m = m.max((norm3(g) - s).abs() / s);
        }
        PairResiduals { orthogonality: o, norm_mismatch: m }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let (k, s) = min_speed(&self.dh);
        if s == 0.0 {
            return Err(Error::NotImmersion { min_speed: s, x: k as f64 / self.len() as f64 });
        }
        let r = self.residuals().max();
        if r > tol {
            return Err(Error::InvalidPair { residual: r, tol });
        }
        Ok(())
    }

    /// Trapezoid integral of g.
    pub fn g_integral(&self) -> R3 {
        mean_r3(&self.g)
    }
}

pub fn mean_r3(v: &[R3]) -> R3 {
    let mut a = [0.0; 3];
    for p in v {
        a = add3(&a, p);
    }
    scale3(1.0 / v.len() as f64, &a)
}

fn min_speed(dh: &[R3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, d) in dh.iter().enumerate() {
        let s = norm3(d);
        if s < best.1 {
            best = (k, s);
        }
    }
    best
}

/// sigma = h' + i g.
pub fn pair_to_loop(p: &ConformalPair) -> PeriodicPath {
    PeriodicPath::new(p.dh.iter().zip(&p.g).map(|(d, g)| complexify(d, g)).collect()).expect("sample count")
}

/// Inverse of `pair_to_loop`; the position is fixed by h(x_anchor) = value.
pub fn loop_to_pair(sigma: &PeriodicPath, anchor: usize, value: R3) -> ConformalPair {
    let dh = sigma.real_part();
    let g = sigma.imag_part();
    let h = real_antiderivative(&dh, anchor, value);
    ConformalPair { h, dh, g }
}

/// Sigma = integral of the loop.
pub fn period(sigma: &PeriodicPath) -> C3 {
    sigma.period()
}

/// True when the samples of sigma on the segment span at least a complex
/// plane: second singular value above 1e-8 times the first.
pub fn nondegenerate_on(sigma: &PeriodicPath, seg: &Segment) -> Result<bool> {
    let idx = seg.indices(sigma.len());
    if idx.len() < 2 {
        return Err(Error::EmptySegment { start: seg.start, end: seg.end });
    }
    let m = DMatrix::from_fn(idx.len(), 3, |r, c| {
        let z = sigma.samples()[idx[r]];
        z[c] / cnorm(&z)
    });
    let s = singular_values(&m);
    Ok(s[1] > 1e-8 * s[0])
}

/// A curve is nonflat on a segment when its centred samples there are not
/// contained in an affine plane.
pub fn is_nonflat_on(h: &[R3], seg: &Segment) -> Result<bool> {
    let idx = seg.indices(h.len());
    if idx.len() < 4 {
        return Err(Error::EmptySegment { start: seg.start, end: seg.end });
    }
    let pts: Vec<R3> = idx.iter().map(|&k| h[k]).collect();
    let m0 = mean_r3(&pts);
    let m = DMatrix::from_fn(pts.len(), 3, |r, c| pts[r][c] - m0[c]);
    let s = singular_values_real(&m);
    Ok(s[2] > 1e-8 * s[0])
}

/// Output of the period-zero construction.
#[derive(Clone, Debug)]
pub struct ZeroPeriodPair {
    pub pair: ConformalPair,
    pub epsilon: f64,
    pub p: R3,
    /// sup |h - h0|
    pub sup_distance: f64,
    /// Fiber winding of g relative to the periodic normal frame.
    pub winding: i64,
    pub spin_class: Z2,
}

/// Internal state of the construction after flattening and normalisation.
struct ZeroPeriodSetup {
    n: usize,
    delta: f64,
    /// Normalised derivative, equal to e1 on [0, 3 delta].
    d: Vec<R3>,
    beta: Vec<f64>,
    rot: [[f64; 3]; 3],
    scale: f64,
    start: usize,
    alpha0_ref: f64,
    j1: i64,
    winding: i64,
}

const E1: R3 = [1.0, 0.0, 0.0];
const E2: R3 = [0.0, 1.0, 0.0];
const E3: R3 = [0.0, 0.0, 1.0];

fn wrap_half(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y > 0.5 {
        y - 1.0
    } else {
        y
    }
}

/// The modulation basis on the long free interval.
const N_MODES: usize = 10;
fn mode(m: usize, u: f64) -> f64 {
    let env = (PI * u).sin().powi(4);
    let k = (m / 2 + 1) as f64;
    if m % 2 == 0 {
        env * (2.0 * PI * k * u).sin()
    } else {
        env * (2.0 * PI * k * u).cos()
    }
}

impl ZeroPeriodSetup {
    fn x(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    fn dp(&self, eps: f64, p: &R3) -> Vec<R3> {
        self.d.iter().zip(&self.beta).map(|(d, b)| add3(d, &scale3(eps * b, p))).collect()
    }

    /// Rotation-minimising frame along T = D/|D|, started at x = 2 delta
    /// with (e2, e3) and closed by a smooth twist spread over the long free
    /// interval.
    fn frame(&self, d: &[R3]) -> Vec<(R3, R3)> {
        let n = self.n;
        let mut frames = vec![(E2, E3); n];
        let mut t_prev = normalize3(&d[self.start]);
        let mut n1 = E2;
        let mut n1s = vec![E2; n];
        for step in 1..=n {
            let k = (self.start + step) % n;
            let t = normalize3(&d[k]);
            let r = rotation_between(&t_prev, &t);
            n1 = mat_vec(&r, &n1);
            n1 = normalize3(&sub3(&n1, &scale3(dot3(&n1, &t), &t)));
            if step < n {
                n1s[k] = n1;
            }
            t_prev = t;
        }
        // Holonomy of the transport around the loop.
        let t0 = normalize3(&d[self.start]);
        let m0 = cross3(&t0, &E2);
        let omega = dot3(&n1, &m0).atan2(dot3(&n1, &E2));
        for k in 0..n {
            let t = normalize3(&d[k]);
            let w = self.twist_weight(self.x(k));
            let a = -omega * w;
            let m = cross3(&t, &n1s[k]);
            let f1 = add3(&scale3(a.cos(), &n1s[k]), &scale3(a.sin(), &m));
            let f2 = cross3(&t, &f1);
            frames[k] = (f1, f2);
        }
        frames[self.start] = (E2, cross3(&t0, &E2));
        frames
    }

    /// 0 on [2 delta, 3 delta], rising over the long free interval, 1 on
    /// [0, 2 delta).
    fn twist_weight(&self, x: f64) -> f64 {
        let d = self.delta;
        if x >= 2.0 * d && x <= 3.0 * d {
            0.0
        } else if x > 3.0 * d {
            smooth_step((x - 3.0 * d) / (1.0 - 3.0 * d))
        } else {
            1.0
        }
    }

    /// g on [0, delta] from the explicit formula, in normalised coordinates.
    fn g_first(eps: f64, p: &R3) -> R3 {
        let ap = [-p[1], p[0], p[2]];
        let corr = eps * eps * p[2] * p[2] / (1.0 + eps * p[0]);
        let gt = [ap[0] * eps - corr, 1.0 + eps * ap[1], eps * ap[2]];
        let target = norm3(&add3(&E1, &scale3(eps, p)));
        scale3(target / norm3(&gt), &gt)
    }

    fn angle_in_frame(v: &R3, f: &(R3, R3)) -> f64 {
        dot3(v, &f.1).atan2(dot3(v, &f.0))
    }

    /// The normalised loop (D_p, g_p) for given p and modulation q.
    fn assemble(&self, eps: f64, p: &R3, q: &[f64]) -> (Vec<R3>, Vec<R3>) {
        let d = self.dp(eps, p);
        let frames = self.frame(&d);
        let dl = self.delta;
        let g1 = Self::g_first(eps, p);
        let k1 = (0..self.n).find(|&k| self.x(k) <= dl).unwrap();
        let alpha0 = Self::angle_in_frame(&g1, &frames[k1]);
        let a_end1 = PI + 2.0 * PI * self.j1 as f64;
        let a_start2 = a_end1;
        let a_end2 = self.alpha0_ref + 2.0 * PI * self.winding as f64;
        let mut g = vec![[0.0; 3]; self.n];
        for k in 0..self.n {
            let x = self.x(k);
            let speed = norm3(&d[k]);
            let alpha = if x <= dl {
                g[k] = g1;
                continue;
            } else if x < 2.0 * dl {
                alpha0 + (a_end1 - alpha0) * smooth_step((x - dl) / dl)
            } else if x <= 3.0 * dl {
                g[k] = scale3(-1.0, &E2);
                continue;
            } else {
                let u = (x - 3.0 * dl) / (1.0 - 3.0 * dl);
                let mut a = a_start2 + (a_end2 - a_start2) * smooth_step(u);
                a += (alpha0 - self.alpha0_ref) * smooth_step((x - (1.0 - dl)) / dl);
                for (m, qm) in q.iter().enumerate() {
                    a += qm * mode(m, u);
                }
                a
            };
            let f = &frames[k];
            g[k] = scale3(speed, &add3(&scale3(alpha.cos(), &f.0), &scale3(alpha.sin(), &f.1)));
        }
        (d, g)
    }

    fn residual(&self, eps: f64, p: &R3, q: &[f64]) -> R3 {
        mean_r3(&self.assemble(eps, p, q).1)
    }
}

fn fd_jacobian_real(f: &dyn Fn(&[f64]) -> R3, x: &[f64], h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(3, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..3 {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Damped Gauss-Newton for a map R^m -> R^3. Returns the final point and
/// residual norm.
fn gauss_newton(f: &dyn Fn(&[f64]) -> R3, x0: &[f64], tol: f64, max_iter: usize, bound: f64) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut rn = norm3(&r);
    for _ in 0..max_iter {
        if rn <= tol {
            break;
        }
        let j = fd_jacobian_real(f, &x, 1e-7);
        let step = damped_lstsq_real(&j, &DVector::from_row_slice(&r), 1e-12);
        let mut lam = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - lam * s).collect();
            if xn.iter().map(|v| v * v).sum::<f64>().sqrt() <= bound {
                let rnew = f(&xn);
                let rnn = norm3(&rnew);
                if rnn < rn {
                    x = xn;
                    r = rnew;
                    rn = rnn;
                    improved = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, rn)
}

/// Given a closed immersed curve h0, build a conformal pair (h, g) in the
/// requested spin class with vanishing g-period, C^0 close to h0.
///
/// h0 is first flattened to a straight segment on J = [0, 3 delta]; on
/// [0, delta] and [2 delta, 3 delta] the pair follows the explicit p-family,
/// on the free intervals g turns smoothly in a periodic normal frame. The
/// free part is tuned once by a smooth modulation, then p is found by
/// damped Newton so that the total g-period vanishes.
pub fn make_zero_period_pair(h0: &[R3], spin_class: i64, delta: f64) -> Result<ZeroPeriodPair> {
    let n = h0.len();
    check_sample_count(n)?;
    if !(delta > 0.0) || 4.0 * delta > 0.7 || delta * (n as f64) < 6.0 {
        return Err(Error::InvalidDelta(delta));
    }
    let dh0 = real_derivative(h0);
    let smax = dh0.iter().map(norm3).fold(0.0, f64::max);
    let (kmin, smin) = min_speed(&dh0);
    if smin <= 1e-9 * smax {
        return Err(Error::NotImmersion { min_speed: smin, x: kmin as f64 / n as f64 });
    }
    let x = |k: usize| k as f64 / n as f64;

    // Flatten on J with a collar of delta/2.
    let collar = 0.5 * delta;
    let chi = |xx: f64| {
        let y = wrap_half(xx);
        if (0.0..=3.0 * delta).contains(&y) {
            1.0
        } else if y > 3.0 * delta && y < 3.0 * delta + collar {
            1.0 - smooth_step((y - 3.0 * delta) / collar)
        } else if y < 0.0 && y > -collar {
            smooth_step((y + collar) / collar)
        } else {
            0.0
        }
    };
    let mut csum = [0.0; 3];
    let mut wsum = 0.0;
    for k in 0..n {
        let w = chi(x(k));
        csum = add3(&csum, &scale3(w, &dh0[k]));
        wsum += w;
    }
    let cvec = scale3(1.0 / wsum, &csum);
    let scale = norm3(&cvec);
    if scale < 1e-9 * smax {
        return Err(Error::NotImmersion { min_speed: scale, x: 0.0 });
    }
    let rot = rotation_between(&normalize3(&cvec), &E1);
    let mut d = Vec::with_capacity(n);
    for k in 0..n {
        let w = chi(x(k));
        let v = add3(&scale3(1.0 - w, &dh0[k]), &scale3(w, &cvec));
        let mut v = scale3(1.0 / scale, &mat_vec(&rot, &v));
        if wrap_half(x(k)) >= 0.0 && wrap_half(x(k)) <= 3.0 * delta {
            v = E1;
        }
        d.push(v);
    }
    let (kf, sf) = min_speed(&d);
    if sf <= 1e-6 {
        return Err(Error::NotImmersion { min_speed: sf * scale, x: x(kf) });
    }

    // beta = beta1 - kappa beta2 with discrete mean zero.
    let eta = 0.25 * delta;
    let beta1 = |xx: f64| {
        let y = wrap_half(xx);
        if (0.0..=delta).contains(&y) {
            1.0
        } else if y < 0.0 && y > -eta {
            smooth_step((y + eta) / eta)
        } else if y > delta && y < delta + eta {
            1.0 - smooth_step((y - delta) / eta)
        } else {
            0.0
        }
    };
    let b2seg = Segment { start: delta + eta, end: 2.0 * delta - eta };
    let b1: Vec<f64> = (0..n).map(|k| beta1(x(k))).collect();
    let b2: Vec<f64> = (0..n).map(|k| segment_bump(&b2seg, x(k))).collect();
    let kappa = b1.iter().sum::<f64>() / b2.iter().sum::<f64>();
    let beta: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a - kappa * b).collect();

    let start = (0..n).find(|&k| x(k) >= 2.0 * delta).unwrap();
    let mut setup = ZeroPeriodSetup {
        n,
        delta,
        d,
        beta,
        rot,
        scale,
        start,
        alpha0_ref: 0.0,
        j1: 0,
        winding: 0,
    };

    // Reference quantities at p = 0.
    let frames0 = setup.frame(&setup.d);
    let k1 = (0..n).find(|&k| x(k) <= delta).unwrap();
    let alpha0 = ZeroPeriodSetup::angle_in_frame(&ZeroPeriodSetup::g_first(0.0, &[0.0; 3]), &frames0[k1]);
    setup.alpha0_ref = alpha0;
    setup.j1 = ((alpha0 - PI) / (2.0 * PI)).round() as i64;
    // Class of the frame section h' + i |h'| n1.
    let frame_loop = PeriodicPath::new(
        setup.d.iter().zip(&frames0).map(|(v, f)| complexify(v, &scale3(norm3(v), &f.0))).collect(),
    )?;
    let c0 = pi1_class(&frame_loop)?;
    let base_winding = (spin_class - c0.0 as i64).rem_euclid(2);
    let windings = [base_winding, base_winding - 2, base_winding + 2];

    // Plain Newton on every candidate first; the grid search is the slow
    // fallback.
    let attempts = [false, true].into_iter().flat_map(|grid| windings.iter().flat_map(move |w| (0..4).map(move |i| (grid, *w, 0.1 * 0.5f64.powi(i)))));
    for (grid, winding, eps) in attempts {
        setup.winding = winding;
        let target_q = 0.1 * eps * delta;
        let fq = |q: &[f64]| setup.residual(eps, &[0.0; 3], q);
        let (q, _) = gauss_newton(&fq, &[0.0; N_MODES], target_q, 60, 40.0);
        let fp = |p: &[f64]| setup.residual(eps, &[p[0], p[1], p[2]], &q);
        let (mut p, mut rn) = gauss_newton(&fp, &[0.0; 3], 1e-15, 60, 1.0);
        if rn > 1e-13 && grid {
            // Coarse grid over the unit ball, then Newton again.
            let mut best = (p.clone(), rn);
            let steps = 20;
            for i in 0..=steps {
                for j in 0..=steps {
                    for l in 0..=steps {
                        let c = [
                            -1.0 + 2.0 * i as f64 / steps as f64,
                            -1.0 + 2.0 * j as f64 / steps as f64,
                            -1.0 + 2.0 * l as f64 / steps as f64,
                        ];
                        if norm3(&c) > 1.0 {
                            continue;
                        }
                        let r = norm3(&fp(&c));
                        if r < best.1 {
                            best = (c.to_vec(), r);
                        }
                    }
                }
            }
            let (p2, r2) = gauss_newton(&fp, &best.0, 1e-15, 80, 1.0);
            p = p2;
            rn = r2;
        }
        if rn <= 1e-13 {
            let pv = [p[0], p[1], p[2]];
            let (dn, gn) = setup.assemble(eps, &pv, &q);
            let dh: Vec<R3> = dn.iter().map(|v| scale3(setup.scale, &mat_t_vec(&setup.rot, v))).collect();
            let g: Vec<R3> = gn.iter().map(|v| scale3(setup.scale, &mat_t_vec(&setup.rot, v))).collect();
            let anchor = (0..n).find(|&k| x(k) >= 0.5 + 1.5 * delta).unwrap();
            let pair = ConformalPair::from_derivative(dh, g, anchor, h0[anchor])?;
            let sup_distance = pair.h.iter().zip(h0).map(|(a, b)| norm3(&sub3(a, b))).fold(0.0, f64::max);
            // A fast fiber winding can be too fine for the sample grid; the
            // lift is then ambiguous and the next winding is tried.
            let cls = match pi1_class(&pair_to_loop(&pair)) {
                Ok(c) if c == Z2::from_int(spin_class) => c,
                _ => continue,
            };
            return Ok(ZeroPeriodPair { pair, epsilon: eps, p: pv, sup_distance, winding, spin_class: cls });
        }
    }
    Err(Error::RootNotFound("period-zero pair: Newton and grid search failed for all epsilon".into()))
}

/// Segments used by the period-prescribing isotopy.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotopySegments {
    pub fixed: Segment,
    pub nonflat_on: Option<Segment>,
    /// Where the spinor perturbations live.
    pub l: Segment,
    /// Reserved for the final period device; length 3 delta.
    pub j: Segment,
}

#[derive(Clone, Debug)]
pub struct PairFamily {
    pub ts: Vec<f64>,
    pub pairs: Vec<ConformalPair>,
    pub segments: IsotopySegments,
    /// Largest period residual before the final device was applied.
    pub max_device_correction: f64,
}

impl PairFamily {
    pub fn loops(&self) -> Vec<PeriodicPath> {
        self.pairs.iter().map(pair_to_loop).collect()
    }
}

/// Pick L and J inside the largest arc left free by the occupied segments.
fn choose_free_segments(occupied: &[Segment], n: usize) -> Result<(Segment, Segment)> {
    let margin = 0.01;
    let mut ends: Vec<(f64, f64)> = occupied.iter().map(|s| (s.start, s.end)).collect();
    ends.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut best: Option<(f64, f64)> = None;
    for i in 0..ends.len() {
        let a = ends[i].1 + margin;
        let mut b = ends[(i + 1) % ends.len()].0 - margin;
        while b <= a - 1e-12 {
            b += 1.0;
        }
        if best.map_or(true, |(x, y)| b - a > y - x) {
            best = Some((a, b));
        }
    }
    let (a, b) = best.unwrap();
    let len = b - a;
    let delta = (0.15 * len / 3.0).min(0.05);
    if len < 0.1 || delta * (n as f64) < 6.0 {
        return Err(Error::SegmentOverlap("not enough free room for the isotopy".into()));
    }
    let l = Segment::new(a, a + 0.8 * len)?;
    let j0 = a + 0.82 * len;
    let j = Segment::new(j0, j0 + 3.0 * delta)?;
    Ok((l, j))
}

const N_BUMPS: usize = 8;

/// Flat-top window on a segment with error-function ramps. The ramps are
/// steep enough that the window is below 1e-16 at both ends (it is then
/// shifted to vanish there), while its Fourier spectrum decays like a
/// Gaussian, which keeps deformed loops resolved on the sample grid.
pub fn segment_window(seg: &Segment, x: f64) -> f64 {
    const RAMP: f64 = 0.3;
    const S: f64 = RAMP / 5.9;
    match seg.local(x) {
        Some(u) if u > 0.0 && u < 1.0 => {
            let raw = |u: f64| 0.5 * (libm::erf((u - RAMP) / S) - libm::erf((u - 1.0 + RAMP) / S));
            let edge = raw(0.0);
            ((raw(u) - edge) / (raw(0.5) - edge)).max(0.0)
        }
        _ => 0.0,
    }
}

/// Deformation profiles on L: a window times low trigonometric modes.
fn l_bumps(l: &Segment, n: usize) -> Vec<Vec<f64>> {
    (0..N_BUMPS)
        .map(|m| {
            let freq = ((m + 1) / 2) as f64;
            (0..n)
                .map(|k| {
                    let x = k as f64 / n as f64;
                    let w = segment_window(l, x);
                    if w == 0.0 {
                        return 0.0;
                    }
                    let u = l.local(x).unwrap_or(0.0);
                    let a = std::f64::consts::PI * freq * u;
                    w * if m % 2 == 1 { a.cos() } else if m == 0 { 1.0 } else { a.sin() }
                })
                .collect()
        })
        .collect()
}

struct SpinorDeformation<'a> {
    base: &'a [SpinorPair],
    bumps: &'a [Vec<f64>],
    support: Vec<usize>,
}

/// exp of a 2x2 complex matrix [[m0, m1], [m2, m3]].
fn expm2(m: [C64; 4]) -> [C64; 4] {
    let half = (m[0] + m[3]) * 0.5;
    let (n0, n3) = (m[0] - half, m[3] - half);
    let d2 = -(n0 * n3 - m[1] * m[2]);
    // cosh(d) and sinh(d)/d are even in d, so the branch of sqrt is irrelevant.
    let (ch, shc) = if d2.norm() < 1e-6 {
        (1.0 + d2 * 0.5 + d2 * d2 / 24.0, 1.0 + d2 / 6.0 + d2 * d2 / 120.0)
    } else {
        let d = d2.sqrt();
        (d.cosh(), d.sinh() / d)
    };
    let e = half.exp();
    [e * (ch + shc * n0), e * shc * m[1], e * shc * m[2], e * (ch + shc * n3)]
}

/// Weight of the scaling part of each deformation generator. Minimal-norm
/// steps then prefer complex rotations, which keep the loop away from 0.
const SCALING_WEIGHT: f64 = 0.1;

impl SpinorDeformation<'_> {
    /// Spinors deformed by exp(sum_m B_m(x) M_m) with M_m in gl(2, C). The
    /// action is invertible, so deformed spinors never vanish.
    fn spinors(&self, q: &[C64]) -> Vec<SpinorPair> {
        let mut s = self.base.to_vec();
        for &k in &self.support {
            let mut m = [C64::new(0.0, 0.0); 4];
            for (mode, bump) in self.bumps.iter().enumerate() {
                let b = bump[k];
                if b != 0.0 {
                    let c = &q[4 * mode..4 * mode + 4];
                    let tr = c[0] * SCALING_WEIGHT;
                    m[0] += (tr + c[1]) * b;
                    m[1] += c[2] * b;
                    m[2] += c[3] * b;
                    m[3] += (tr - c[1]) * b;
                }
            }
            let e = expm2(m);
            let (a, bb) = (s[k].a, s[k].b);
            s[k].a = e[0] * a + e[1] * bb;
            s[k].b = e[2] * a + e[3] * bb;
        }
        s
    }

    fn samples(&self, q: &[C64]) -> Vec<C3> {
        self.spinors(q).iter().map(spinor_to_null).collect()
    }

    fn period(&self, q: &[C64]) -> C3 {
        let s = self.samples(q);
        let mut acc = ZERO3;
        for z in &s {
            acc = cadd(&acc, z);
        }
        cscale(C64::new(1.0 / s.len() as f64, 0.0), &acc)
    }

    /// The period is holomorphic in q, so central differences along the
    /// real axis of each coordinate give the complex derivative.
    fn jacobian(&self, q: &[C64]) -> DMatrix<C64> {
        let h = 1e-6;
        let mut j = DMatrix::zeros(3, q.len());
        let mut qq = q.to_vec();
        for c in 0..q.len() {
            qq[c] = q[c] + h;
            let p = self.period(&qq);
            qq[c] = q[c] - h;
            let m = self.period(&qq);
            qq[c] = q[c];
            for r in 0..3 {
                j[(r, c)] = (p[r] - m[r]) / (2.0 * h);
            }
        }
        j
    }

    /// Newton iteration toward a target period; None if it stalls.
    fn newton(&self, q0: &[C64], target: &C3, tol: f64) -> Option<Vec<C64>> {
        let mut q = q0.to_vec();
        let mut r = csub(&self.period(&q), target);
        let mut rn = cnorm(&r);
        for _ in 0..40 {
            if rn <= tol {
                return Some(q);
            }
            let j = self.jacobian(&q);
            let step = damped_lstsq(&j, &DVector::from_row_slice(&r), 1e-12);
            let mut lam = 1.0;
            let mut ok = false;
            for _ in 0..20 {
                let qn: Vec<C64> = q.iter().zip(step.iter()).map(|(a, s)| a - s * lam).collect();
                let rnew = csub(&self.period(&qn), target);
                if cnorm(&rnew) < rn {
                    q = qn;
                    r = rnew;
                    rn = cnorm(&r);
                    ok = true;
                    break;
                }
                lam *= 0.5;
            }
            if !ok {
                break;
            }
        }
        if rn <= tol {
            Some(q)
        } else {
            None
        }
    }
}

/// Isotopy of conformal pairs (h_t, g_t) fixed on `fixed`, with
/// integral of g_t moving linearly from integral of g_0 to v.
///
/// The lift of h_0' + i g_0 to spinors is perturbed by smooth bumps on a
/// free segment L, which keeps the loop on the quadric exactly; the
/// perturbation coefficients are continued in t by minimal-norm Newton. A
/// residual period error above `tol_period` is removed by the frame version
/// of the period device on the segment J.
pub fn prescribe_period_isotopy(
    p0: &ConformalPair,
    v: R3,
    fixed: Segment,
    nonflat_on: Option<Segment>,
    n_t: usize,
) -> Result<PairFamily> {
    prescribe_period_isotopy_with(p0, v, fixed, nonflat_on, n_t, 1e-9)
}

pub fn prescribe_period_isotopy_with(
    p0: &ConformalPair,
    v: R3,
    fixed: Segment,
    nonflat_on: Option<Segment>,
    n_t: usize,
    tol_period: f64,
) -> Result<PairFamily> {
    let n = p0.len();
    check_sample_count(n)?;
    p0.validate(1e-8)?;
    if n_t < 2 {
        return Err(Error::Config("n_t must be at least 2".into()));
    }
    let mut occupied = vec![fixed];
    if let Some(s) = nonflat_on {
        if !s.disjoint(&fixed) {
            return Err(Error::SegmentOverlap("fixed and nonflat_on".into()));
        }
        if !is_nonflat_on(&p0.h, &s)? {
            return Err(Error::FlatOnSegment);
        }
        occupied.push(s);
    }
    let (l, j) = choose_free_segments(&occupied, n)?;
    let segments = IsotopySegments { fixed, nonflat_on, l, j };

    let sigma0 = pair_to_loop(p0);
    let seam = fixed.indices(n)[0];
    let lift = lift_loop(sigma0.samples(), seam, DEFAULT_TOL_NULL)?;
    let bumps = l_bumps(&l, n);
    let support = l.indices(n);
    let mut on_l = vec![false; n];
    for &k in &support {
        on_l[k] = true;
    }
    let def = SpinorDeformation { base: &lift.spinors, bumps: &bumps, support };

    let g0 = p0.g_integral();
    let scale = sigma0.samples().iter().map(cnorm).fold(0.0, f64::max);
    let tol = (1e-13 * scale).max(1e-15);
    let target = |t: f64| -> C3 {
        let im = add3(&scale3(1.0 - t, &g0), &scale3(t, &v));
        complexify(&[0.0; 3], &im)
    };
    let anchor = seam;
    let mut ts = vec![0.0];
    let mut pairs = vec![p0.clone()];
    let mut q = vec![C64::new(0.0, 0.0); 4 * N_BUMPS];
    let mut max_dev: f64 = 0.0;
    for k in 1..n_t {
        let t0 = (k - 1) as f64 / (n_t - 1) as f64;
        let t1 = k as f64 / (n_t - 1) as f64;
        // Continue from t0 to t1, halving the step on failure.
        let mut s = t0;
        let mut h = t1 - t0;
        while s < t1 - 1e-15 {
            let sn = (s + h).min(t1);
            match def.newton(&q, &target(sn), tol) {
                Some(qn) => {
                    q = qn;
                    s = sn;
                    h *= 2.0;
                }
                None => {
                    h *= 0.5;
                    if h < (t1 - t0) / 1024.0 {
                        return Err(Error::ContinuationStalled { t: s, reason: "spinor Newton failed".into() });
                    }
                }
            }
        }
        // Off the support the deformation is the identity; keep the input
        // samples there bitwise rather than their spinor round trip.
        let mut samples = def.samples(&q);
        for (k, z) in samples.iter_mut().enumerate() {
            if !on_l[k] {
                *z = sigma0.samples()[k];
            }
        }
        let sigma = PeriodicPath::new(samples)?;
        let mut pair = loop_to_pair(&sigma, anchor, p0.h[anchor]);
        let resid = sub3(&pair.g_integral(), &im3(&target(t1)));
        if norm3(&resid) > tol_period {
            max_dev = max_dev.max(norm3(&resid));
            pair = apply_period_device(&pair, &j, im3(&target(t1)), anchor)?;
        }
        if pair.dh.iter().map(norm3).fold(f64::INFINITY, f64::min) <= 1e-9 * scale {
            return Err(Error::ContinuationStalled { t: t1, reason: "immersion lost".into() });
        }
        if let Some(s) = nonflat_on {
            if !is_nonflat_on(&pair.h, &s)? {
                return Err(Error::NonflatViolated { t: t1 });
            }
        }
        ts.push(t1);
        pairs.push(pair);
    }
    Ok(PairFamily { ts, pairs, segments, max_device_correction: max_dev })
}

/// Frame version of the period device: modifies the pair only on
/// J = [j0, j0 + 3 delta] so that the integral of g becomes `target`, with
/// the integral of h' unchanged. On the first third h' is tilted by
/// epsilon F(x) p in the adapted frame F = [T, g/|g|, T x g/|g|], with the
/// explicit g-formula; the second third compensates h' and re-projects g.
pub fn apply_period_device(pair: &ConformalPair, j: &Segment, target: R3, anchor: usize) -> Result<ConformalPair> {
    let n = pair.len();
    let j1 = j.sub(0.0, 1.0 / 3.0);
    let j2 = j.sub(1.0 / 3.0, 2.0 / 3.0);
    let b1: Vec<f64> = (0..n).map(|k| segment_plateau(&j1, k as f64 / n as f64, 0.25)).collect();
    let b2: Vec<f64> = (0..n).map(|k| segment_bump(&j2, k as f64 / n as f64)).collect();
    let b2sum: f64 = b2.iter().sum();
    let eps = 0.1;
    let build = |p: &[f64]| -> (Vec<R3>, Vec<R3>) {
        let mut dh = pair.dh.clone();
        let mut g = pair.g.clone();
        let mut shift = [0.0; 3];
        for k in 0..n {
            if b1[k] == 0.0 {
                continue;
            }
            let s = norm3(&pair.dh[k]);
            let t = scale3(1.0 / s, &pair.dh[k]);
            let gh = scale3(1.0 / norm3(&pair.g[k]), &pair.g[k]);
            let m = cross3(&t, &gh);
            let e = eps * b1[k];
            let fp = add3(&add3(&scale3(p[0], &t), &scale3(p[1], &gh)), &scale3(p[2], &m));
            let dnew = scale3(s, &add3(&t, &scale3(e, &fp)));
            let corr = e * e * p[2] * p[2] / (1.0 + e * p[0]);
            let gt = add3(
                &add3(&scale3(1.0 + e * p[0], &gh), &scale3(-e * p[1] - corr, &t)),
                &scale3(e * p[2], &m),
            );
            g[k] = scale3(norm3(&dnew) / norm3(&gt), &gt);
            shift = add3(&shift, &sub3(&dnew, &dh[k]));
            dh[k] = dnew;
        }
        for k in 0..n {
            if b2[k] == 0.0 {
                continue;
            }
            dh[k] = sub3(&dh[k], &scale3(b2[k] / b2sum, &shift));
            let t = normalize3(&dh[k]);
            let gp = sub3(&g[k], &scale3(dot3(&g[k], &t), &t));
            g[k] = scale3(norm3(&dh[k]) / norm3(&gp), &gp);
        }
        (dh, g)
    };
    let f = |p: &[f64]| sub3(&mean_r3(&build(p).1), &target);
    let (p, rn) = gauss_newton(&f, &[0.0; 3], 1e-15, 60, 1.0);
    if rn > 1e-13 * (1.0 + norm3(&target)) {
        return Err(Error::RootNotFound(format!("period device residual {rn:e}")));
    }
    let (dh, g) = build(&p);
    ConformalPair::from_derivative(dh, g, anchor, pair.h[anchor])
}

#[derive(Clone, Debug)]
pub struct ImmersionPath {
    pub ts: Vec<f64>,
    pub curves: Vec<Vec<R3>>,
    pub min_speed: f64,
    pub attempts: usize,
}

/// Regular homotopy between immersed closed curves, fixed on `fixed` when
/// h0 and h1 agree there. The straight-line homotopy is tried first; when
/// its speed degenerates a seeded smooth perturbation t(1-t) P(x),
/// supported off the fixed segment, is added.
pub fn connect_immersions(h0: &[R3], h1: &[R3], fixed: Option<Segment>, n_t: usize, seed: u64) -> Result<ImmersionPath> {
    let n = h0.len();
    check_sample_count(n)?;
    if h1.len() != n {
        return Err(Error::InvalidSampleCount(h1.len()));
    }
    let d0 = real_derivative(h0);
    let d1 = real_derivative(h1);
    let s0 = min_speed(&d0).1.min(min_speed(&d1).1);
    for (k, d) in [&d0, &d1].iter().enumerate() {
        let (i, s) = min_speed(d);
        if s <= 0.0 {
            return Err(Error::NotImmersion { min_speed: s, x: i as f64 / n as f64 + k as f64 * 0.0 });
        }
    }
    let scale = h0.iter().chain(h1).map(norm3).fold(0.0, f64::max).max(1e-300);
    let threshold = 1e-3 * s0;
    let window: Vec<f64> = (0..n)
        .map(|k| match &fixed {
            Some(f) => {
                let x = k as f64 / n as f64;
                let d = (x - f.end).rem_euclid(1.0);
                let free = 1.0 - f.length();
                if d >= free {
                    0.0
                } else {
                    let u = d / free;
                    smooth_step(u / 0.2) * smooth_step((1.0 - u) / 0.2)
                }
            }
            None => 1.0,
        })
        .collect();
    let n_check = 4 * n_t.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for attempt in 0..12 {
        let pert: Vec<R3> = if attempt == 0 {
            vec![[0.0; 3]; n]
        } else {
            let coef: Vec<[f64; 6]> = (0..3)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                .collect();
            (0..n)
                .map(|k| {
                    let x = 2.0 * PI * k as f64 / n as f64;
                    std::array::from_fn(|i| {
                        let c = &coef[i];
                        0.3 * scale
                            * window[k]
                            * (c[0] * x.cos() + c[1] * x.sin() + c[2] * (2.0 * x).cos() + c[3] * (2.0 * x).sin() + c[4] * (3.0 * x).cos() + c[5] * (3.0 * x).sin())
                    })
                })
                .collect()
        };
        let dpert = real_derivative(&pert);
        // Written so both ends, and the path between equal curves, are exact.
        let curve = |t: f64| -> Vec<R3> {
            if t == 1.0 {
                return h1.to_vec();
            }
            (0..n)
                .map(|k| add3(&h0[k], &add3(&scale3(t, &sub3(&h1[k], &h0[k])), &scale3(t * (1.0 - t), &pert[k]))))
                .collect()
        };
        let mut ms = f64::INFINITY;
        for i in 0..=n_check {
            let t = i as f64 / n_check as f64;
            for k in 0..n {
                let dv = add3(&add3(&scale3(1.0 - t, &d0[k]), &scale3(t, &d1[k])), &scale3(t * (1.0 - t), &dpert[k]));
                ms = ms.min(norm3(&dv));
            }
        }
        best = best.max(ms);
        if ms > threshold {
            let ts: Vec<f64> = (0..n_t).map(|i| i as f64 / (n_t - 1) as f64).collect();
            let curves = ts.iter().map(|&t| curve(t)).collect();
            return Ok(ImmersionPath { ts, curves, min_speed: ms, attempts: attempt + 1 });
        }
    }
    Err(Error::PerturbationFailed { attempts: 12, min_speed: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, r: f64) -> Vec<R3> {
        (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                [r * a.cos(), r * a.sin(), 0.0]
            })
            .collect()
    }

    #[test]
    fn segment_membership_and_disjointness() {
        let a = Segment::new(0.9, 1.1).unwrap();
        assert!(a.contains(0.05) && a.contains(0.95) && !a.contains(0.5));
        let b = Segment::new(0.2, 0.4).unwrap();
        assert!(a.disjoint(&b));
        let c = Segment::new(0.05, 0.3).unwrap();
        assert!(!a.disjoint(&c) && !b.disjoint(&c));
        assert!(Segment::new(0.3, 0.2).is_err());
    }

    #[test]
    fn pair_loop_round_trip() {
        let h = circle(128, 1.0);
        let dh = real_derivative(&h);
        let g: Vec<R3> = dh.iter().map(|d| [0.0, 0.0, norm3(d)]).collect();
        let p = ConformalPair::new(h.clone(), g).unwrap();
        assert!(p.residuals().max() < 1e-12);
        let back = loop_to_pair(&pair_to_loop(&p), 0, h[0]);
        for (a, b) in back.h.iter().zip(&h) {
            assert!(norm3(&sub3(a, b)) < 1e-12);
        }
    }

    #[test]
    fn zero_period_pair_on_circle() {
        let h = circle(256, 1.0);
        for k in 0..2 {
            let z = make_zero_period_pair(&h, k, 0.05).unwrap();
            assert!(z.pair.residuals().max() < 1e-10);
            assert!(norm3(&z.pair.g_integral()) < 1e-10);
            assert_eq!(pi1_class(&pair_to_loop(&z.pair)).unwrap(), Z2::from_int(k));
        }
    }

    #[test]
    fn circle_to_ellipse() {
        let h0 = circle(64, 1.0);
        let h1: Vec<R3> = h0.iter().map(|p| [p[0], 2.0 * p[1], 0.0]).collect();
        let path = connect_immersions(&h0, &h1, None, 16, 1).unwrap();
        assert!(path.min_speed > 1.0);
        assert_eq!(path.attempts, 1);
    }

    #[test]
    fn reversed_circle_needs_perturbation() {
        let h0 = circle(64, 1.0);
        let h1: Vec<R3> = h0.iter().map(|p| [p[0], -p[1], 0.0]).collect();
        let path = connect_immersions(&h0, &h1, None, 16, 3).unwrap();
        assert!(path.attempts > 1);
        assert!(path.min_speed > 0.0);
    }

    #[test]
    fn nondegenerate_detects_rank_one() {
        let s = PeriodicPath::from_fn(64, |x| {
            let e = C64::from_polar(1.0, 2.0 * PI * x);
            [e, I * e, C64::new(0.0, 0.0)]
        })
        .unwrap();
        let seg = Segment::new(0.1, 0.4).unwrap();
        assert!(!nondegenerate_on(&s, &seg).unwrap());
    }
}
