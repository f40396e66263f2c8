//! Artifacts written by the command-line driver: the family file, the
//! period trace, the report, OBJ meshes and labyrinth polygons.

use crate::error::Result;
use crate::isotopy::{ImmersionFamily, VerificationReport};
use crate::labyrinth::CompletedFamily;
use crate::vec3::*;
use crate::weierstrass::{gl_segment, MinimalImmersion};
use crate::C64;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

pub const TRACE_HEADER: &str =
    "t,generator,re_p1,re_p2,re_p3,im_p1,im_p2,im_p3,flux_norm,real_period_norm,conformality,min_density";

/// One row per (t, generator). Columns 3-8 are the complex period of
/// f theta on the generator; flux is its imaginary part. The last two
/// columns repeat the per-t residuals of the report.
pub fn trace_csv(fam: &ImmersionFamily, report: &VerificationReport) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for (k, m) in fam.members.iter().enumerate() {
        for (j, p) in fam.period_trace[k].iter().enumerate() {
            let (re, im) = (re3(p), im3(p));
            let _ = write!(s, "{:.17e},{j}", m.t);
            for v in re.iter().chain(im.iter()) {
                let _ = write!(s, ",{v:.17e}");
            }
            let conf = report.max_conformality.get(k).copied().unwrap_or(f64::NAN);
            let dens = report.min_metric_density.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, ",{:.17e},{:.17e},{conf:.17e},{dens:.17e}", norm3(&im), norm3(&re));
        }
    }
    s
}

pub fn report_text(fam: &ImmersionFamily, report: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "family: {:?}", fam.kind);
    let _ = writeln!(s, "t-samples: {}", fam.n_t());
    let _ = writeln!(s, "generators: {}", fam.charts.len());
    for (j, t) in fam.target_flux.iter().enumerate() {
        let _ = writeln!(s, "target flux {j}: ({:.12e}, {:.12e}, {:.12e})", t[0], t[1], t[2]);
    }
    if let Some(last) = fam.flux_trace.last() {
        for (j, f) in last.iter().enumerate() {
            let _ = writeln!(s, "final flux {j}: ({:.12e}, {:.12e}, {:.12e})", f[0], f[1], f[2]);
        }
    }
    let _ = writeln!(s, "runge degree: {}  runge error: {:.4e}", fam.runge_degree, fam.runge_error);
    if let Some(m) = fam.spray_sigma_min.iter().copied().reduce(f64::min) {
        let _ = writeln!(s, "spray smallest singular value: {m:.4e}");
    }
    for n in &fam.notices {
        let _ = writeln!(s, "family notice: {n}");
    }
    s.push_str(&report.to_text());
    let _ = writeln!(s, "result: {}", if report.passed() { "PASS" } else { "FAIL" });
    s
}

/// Vertex positions u(z) on a polar grid about the outer center, over the
/// whole domain or over the given radial range.
///
/// Values are accumulated with Gauss-Legendre segments, first along the
/// circle through the base point and then along rays. A vertex is dropped
/// (None) when the ray or circle reaching it leaves the domain.
pub fn polar_mesh(u: &MinimalImmersion, n_r: usize, n_a: usize, range: Option<(f64, f64)>) -> (Vec<f64>, Vec<f64>, Vec<Vec<Option<R3>>>) {
    let dom = &u.domain;
    let c = dom.outer.center;
    let m = 0.02 * dom.outer.radius;
    let r0 = if dom.is_annulus() { dom.holes[0].radius + m } else { m };
    let r1 = dom.outer.radius - m;
    let (r0, r1) = range.map_or((r0, r1), |(a, b)| (a.max(r0), b.min(r1)));
    let radii: Vec<f64> = (0..n_r).map(|i| r0 + (r1 - r0) * i as f64 / (n_r - 1) as f64).collect();
    let angles: Vec<f64> = (0..n_a).map(|k| 2.0 * PI * k as f64 / n_a as f64).collect();
    let form = |z: C64| u.data.form(z);
    let inside = |a: C64, b: C64| (0..=8).all(|k| dom.contains(a + (b - a) * (k as f64 / 8.0)));
    let step = |a: C64, b: C64| -> Option<R3> {
        if !inside(a, b) {
            return None;
        }
        let pieces = ((b - a).norm() / 0.05).ceil().max(1.0) as usize;
        let mut acc = [0.0; 3];
        for p in 0..pieces {
            let za = a + (b - a) * (p as f64 / pieces as f64);
            let zb = a + (b - a) * ((p + 1) as f64 / pieces as f64);
            acc = add3(&acc, &re3(&gl_segment(&form, za, zb)));
        }
        Some(acc)
    };

    // Values on the base circle at every grid angle.
    let rb = (u.basepoint - c).norm();
    let ab = (u.basepoint - c).arg().rem_euclid(2.0 * PI);
    let on_circle = |a: f64| c + C64::from_polar(rb, a);
    let mut base: Vec<Option<R3>> = vec![None; n_a];
    let first = angles.iter().position(|&a| a >= ab).unwrap_or(n_a) % n_a;
    let mut cur = Some(u.value);
    let mut prev_a = ab;
    for i in 0..n_a {
        let k = (first + i) % n_a;
        let mut a = angles[k];
        while a < prev_a {
            a += 2.0 * PI;
        }
        cur = cur.and_then(|v| step(on_circle(prev_a), on_circle(a)).map(|d| add3(&v, &d)));
        base[k] = cur;
        prev_a = a;
    }

    let mut values = vec![vec![None; n_a]; n_r];
    let split = radii.partition_point(|&r| r < rb);
    for (k, &a) in angles.iter().enumerate() {
        let ray = |r: f64| c + C64::from_polar(r, a);
        let mut v = base[k];
        let mut prev = rb;
        for i in split..n_r {
            v = v.and_then(|x| step(ray(prev), ray(radii[i])).map(|d| add3(&x, &d)));
            values[i][k] = v;
            prev = radii[i];
        }
        let mut v = base[k];
        let mut prev = rb;
        for i in (0..split).rev() {
            v = v.and_then(|x| step(ray(prev), ray(radii[i])).map(|d| add3(&x, &d)));
            values[i][k] = v;
            prev = radii[i];
        }
    }
    (radii, angles, values)
}

/// Wavefront OBJ of u on a triangulated polar grid. Faces are wound
/// counterclockwise in the parameter plane, so normals follow the
/// orientation of the immersion in right-handed coordinates.
pub fn obj_mesh(u: &MinimalImmersion, t: f64, n_r: usize, n_a: usize, range: Option<(f64, f64)>) -> String {
    let (_, _, values) = polar_mesh(u, n_r, n_a, range);
    let mut s = String::new();
    let _ = writeln!(s, "# fluxiso mesh");
    let _ = writeln!(s, "# t = {t:.17e}");
    let _ = writeln!(s, "# polar grid {n_r} x {n_a}, right-handed");
    let mut index = vec![vec![0usize; n_a]; n_r];
    let mut next = 1;
    for (i, row) in values.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            if let Some(p) = v {
                let _ = writeln!(s, "v {:.12e} {:.12e} {:.12e}", p[0], p[1], p[2]);
                index[i][k] = next;
                next += 1;
            }
        }
    }
    for i in 0..n_r - 1 {
        for k in 0..n_a {
            let k1 = (k + 1) % n_a;
            let q = [index[i][k], index[i + 1][k], index[i + 1][k1], index[i][k1]];
            if q[0] > 0 && q[1] > 0 && q[2] > 0 {
                let _ = writeln!(s, "f {} {} {}", q[0], q[1], q[2]);
            }
            if q[0] > 0 && q[2] > 0 && q[3] > 0 {
                let _ = writeln!(s, "f {} {} {}", q[0], q[2], q[3]);
            }
        }
    }
    s
}

pub const LABYRINTH_HEADER: &str = "labyrinth,end,set,vertex,x,y";

/// Closed polygons of the labyrinth sets in the z-plane.
pub fn labyrinth_csv(done: &CompletedFamily, per_arc: usize) -> String {
    let mut s = String::from(LABYRINTH_HEADER);
    s.push('\n');
    for (i, m, poly) in done.polygons(per_arc) {
        let end = done.setup.labyrinths[i].band.end;
        for (v, z) in poly.iter().enumerate() {
            let _ = writeln!(s, "{i},{end},{m},{v},{:.17e},{:.17e}", z.re, z.im);
        }
    }
    s
}

pub const DISTANCE_HEADER: &str = "t,core_distance,distance";

pub fn distances_csv(done: &CompletedFamily) -> String {
    let mut s = String::from(DISTANCE_HEADER);
    s.push('\n');
    for ((t, a), b) in done.ts.iter().zip(&done.core_distances).zip(&done.distances) {
        let _ = writeln!(s, "{t:.17e},{a:.17e},{b:.17e}");
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| crate::Error::Io(e.to_string()))?;
    write(dir, name, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| crate::Error::Io(format!("{}: {e}", path.display())))
}
