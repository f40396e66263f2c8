//! Small fixed-size vector helpers for real and complex triples.

use num_complex::Complex64 as C64;

pub type R3 = [f64; 3];
pub type C3 = [C64; 3];

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ZERO3: C3 = [C64 { re: 0.0, im: 0.0 }; 3];

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn add3(a: &R3, b: &R3) -> R3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub fn sub3(a: &R3, b: &R3) -> R3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub fn scale3(s: f64, a: &R3) -> R3 {
    [s * a[0], s * a[1], s * a[2]]
}
#[inline]
pub fn dot3(a: &R3, b: &R3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
#[inline]
pub fn norm3(a: &R3) -> f64 {
    dot3(a, a).sqrt()
}
#[inline]
pub fn cross3(a: &R3, b: &R3) -> R3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
pub fn normalize3(a: &R3) -> R3 {
    let n = norm3(a);
    scale3(1.0 / n, a)
}

#[inline]
pub fn cadd(a: &C3, b: &C3) -> C3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub fn csub(a: &C3, b: &C3) -> C3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub fn cscale(s: C64, a: &C3) -> C3 {
    [s * a[0], s * a[1], s * a[2]]
}
#[inline]
pub fn cnorm(a: &C3) -> f64 {
    (a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()).sqrt()
}
/// Bilinear (not Hermitian) square z1^2 + z2^2 + z3^2.
#[inline]
pub fn csquare(a: &C3) -> C64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}
#[inline]
pub fn re3(a: &C3) -> R3 {
    [a[0].re, a[1].re, a[2].re]
}
#[inline]
pub fn im3(a: &C3) -> R3 {
    [a[0].im, a[1].im, a[2].im]
}
#[inline]
pub fn complexify(re: &R3, im: &R3) -> C3 {
    [c(re[0], im[0]), c(re[1], im[1]), c(re[2], im[2])]
}

/// Rotation matrix taking unit vector `u` to unit vector `v` along the
/// shortest great circle.
pub fn rotation_between(u: &R3, v: &R3) -> [[f64; 3]; 3] {
    let k = cross3(u, v);
    let s = norm3(&k);
    let cth = dot3(u, v);
    if s < 1e-14 {
        if cth > 0.0 {
            return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        }
        // Half turn about any axis perpendicular to u.
        let e = least_aligned_axis(u);
        let a = normalize3(&sub3(&e, &scale3(dot3(&e, u), u)));
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = 2.0 * a[i] * a[j] - if i == j { 1.0 } else { 0.0 };
            }
        }
        return m;
    }
    let k = scale3(1.0 / s, &k);
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut kk = 0.0;
            for l in 0..3 {
                kk += kx[i][l] * kx[l][j];
            }
            m[i][j] = if i == j { 1.0 } else { 0.0 } + s * kx[i][j] + (1.0 - cth) * kk;
        }
    }
    m
}

pub fn mat_vec(m: &[[f64; 3]; 3], v: &R3) -> R3 {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}
pub fn mat_t_vec(m: &[[f64; 3]; 3], v: &R3) -> R3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

/// Standard basis vector least aligned with `v` (lowest index on ties).
pub fn least_aligned_axis(v: &R3) -> R3 {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() < v[k].abs() {
            k = i;
        }
    }
    let mut e = [0.0; 3];
    e[k] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_maps_u_to_v() {
        let u = normalize3(&[0.3, -1.0, 2.0]);
        let v = normalize3(&[-1.0, 0.2, 0.1]);
        let r = rotation_between(&u, &v);
        let w = mat_vec(&r, &u);
        assert!(norm3(&sub3(&w, &v)) < 1e-14);
        let back = mat_t_vec(&r, &v);
        assert!(norm3(&sub3(&back, &u)) < 1e-14);
    }

    #[test]
    fn antipodal_rotation() {
        let u = [1.0, 0.0, 0.0];
        let r = rotation_between(&u, &[-1.0, 0.0, 0.0]);
        let w = mat_vec(&r, &u);
        assert!((w[0] + 1.0).abs() < 1e-15);
    }
}
