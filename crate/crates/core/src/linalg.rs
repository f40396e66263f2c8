//! Thin wrappers over nalgebra's SVD for the least-squares solves used by the
//! continuation drivers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn singular_values_real(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Minimal-norm damped least squares: argmin |J x - r|^2 + lambda^2 |x|^2,
/// with lambda = floor * sigma_max.
pub fn damped_lstsq(j: &DMatrix<C64>, r: &DVector<C64>, floor: f64) -> DVector<C64> {
    let svd = j.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let lam2 = (floor * smax).powi(2);
    let utr = u.adjoint() * r;
    let mut y = DVector::<C64>::zeros(vt.nrows());
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > 0.0 {
            y[k] = utr[k] * (s / (s * s + lam2));
        }
    }
    vt.adjoint() * y
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(m: &DMatrix<C64>, rcond: f64) -> DMatrix<C64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut sinv = DMatrix::<C64>::zeros(vt.nrows(), u.ncols());
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > rcond * smax {
            sinv[(k, k)] = C64::new(1.0 / s, 0.0);
        }
    }
    vt.adjoint() * sinv * u.adjoint()
}

/// Solve a small real least-squares problem with damping.
pub fn damped_lstsq_real(j: &DMatrix<f64>, r: &DVector<f64>, floor: f64) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let lam2 = (floor * smax).powi(2);
    let utr = u.transpose() * r;
    let mut y = DVector::<f64>::zeros(vt.nrows());
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > 0.0 {
            y[k] = utr[k] * (s / (s * s + lam2));
        }
    }
    vt.transpose() * y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_recovers_solution() {
        let j = DMatrix::from_row_slice(
            2,
            3,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, 2.0),
                C64::new(0.5, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 1.0),
                C64::new(-1.0, 0.0),
            ],
        );
        let r = DVector::from_vec(vec![C64::new(1.0, -1.0), C64::new(2.0, 0.5)]);
        let x = damped_lstsq(&j, &r, 1e-14);
        assert!((&j * &x - &r).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(2.0, 0.0), C64::new(4.0, 0.0)]);
        let p = pinv(&m, 1e-12);
        let mpm = &m * &p * &m;
        assert!((mpm - m).norm() < 1e-12);
    }
}
