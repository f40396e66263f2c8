//! Spectral tools for periodic samples on [0, 1) at x_k = k/N.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_in_place(data: &mut [C64]) {
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    plan.process(data);
}

pub fn ifft_in_place(data: &mut [C64]) {
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    plan.process(data);
}

/// Normalized coefficients c_k with s_j = sum_k c_k e^{2 pi i k j / N}.
pub fn coefficients(samples: &[C64]) -> Vec<C64> {
    let n = samples.len() as f64;
    let mut d = samples.to_vec();
    fft_in_place(&mut d);
    for v in &mut d {
        *v /= n;
    }
    d
}

pub fn from_coefficients(coeffs: &[C64]) -> Vec<C64> {
    let mut d = coeffs.to_vec();
    ifft_in_place(&mut d);
    d
}

/// Signed frequency of FFT slot k.
#[inline]
pub fn freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// d/dx of the trigonometric interpolant. The Nyquist mode is dropped.
pub fn derivative(samples: &[C64]) -> Vec<C64> {
    let n = samples.len();
    let mut c = coefficients(samples);
    for (k, v) in c.iter_mut().enumerate() {
        let f = freq(k, n);
        if n % 2 == 0 && k == n / 2 {
            *v = C64::new(0.0, 0.0);
        } else {
            *v *= C64::new(0.0, 2.0 * PI * f as f64);
        }
    }
    from_coefficients(&c)
}

/// Zero-mean antiderivative. The mean of the input is discarded, so callers
/// check it first when it matters.
pub fn antiderivative(samples: &[C64]) -> Vec<C64> {
    let n = samples.len();
    let mut c = coefficients(samples);
    c[0] = C64::new(0.0, 0.0);
    for (k, v) in c.iter_mut().enumerate().skip(1) {
        if n % 2 == 0 && k == n / 2 {
            *v = C64::new(0.0, 0.0);
        } else {
            *v /= C64::new(0.0, 2.0 * PI * freq(k, n) as f64);
        }
    }
    from_coefficients(&c)
}

/// Trapezoid integral over one period, which is the sample mean.
pub fn mean(samples: &[C64]) -> C64 {
    samples.iter().sum::<C64>() / samples.len() as f64
}

/// Evaluate the trigonometric interpolant at x. The Nyquist mode is split
/// symmetrically so the interpolant of real data stays real.
pub fn interpolate(coeffs: &[C64], x: f64) -> C64 {
    let n = coeffs.len();
    let mut acc = coeffs[0];
    let w = C64::from_polar(1.0, 2.0 * PI * x);
    let mut wp = w;
    for k in 1..n.div_ceil(2) {
        acc += coeffs[k] * wp + coeffs[n - k] * wp.conj();
        wp *= w;
    }
    if n % 2 == 0 {
        let th = PI * n as f64 * x;
        acc += coeffs[n / 2] * th.cos();
    }
    acc
}

/// Resample to a new power-of-two length by zero padding or truncation.
pub fn resample(samples: &[C64], m: usize) -> Vec<C64> {
    let n = samples.len();
    if m == n {
        return samples.to_vec();
    }
    let c = coefficients(samples);
    let mut d = vec![C64::new(0.0, 0.0); m];
    let half = n.min(m) / 2;
    for k in 0..half {
        d[k] = c[k];
        if k > 0 {
            d[m - k] = c[n - k];
        }
    }
    if m > n && n % 2 == 0 {
        d[n / 2] = c[n / 2] * 0.5;
        d[m - n / 2] = c[n / 2] * 0.5;
    } else if m < n {
        d[m / 2] = c[m / 2] + c[n - m / 2];
    }
    from_coefficients(&d)
}

/// Energy fraction in the top quarter of the spectrum, a cheap resolution
/// diagnostic.
pub fn tail_fraction(samples: &[C64]) -> f64 {
    let n = samples.len();
    let c = coefficients(samples);
    let total: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = c
        .iter()
        .enumerate()
        .filter(|(k, _)| freq(*k, n).unsigned_abs() as usize > n / 4)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    (tail / total).sqrt()
}

/// Smooth step 0 -> 1 on [0, 1], flat to all orders at both ends.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}
