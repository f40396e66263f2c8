//! Uniformly sampled periodic curves in C^3 on [0, 1).

use crate::error::{Error, Result};
use crate::fourier;
use crate::nullquadric::null_residual;
use crate::vec3::*;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPath {
    samples: Vec<C3>,
}

pub fn check_sample_count(n: usize) -> Result<()> {
    if n < 64 || !n.is_power_of_two() {
        return Err(Error::InvalidSampleCount(n));
    }
    Ok(())
}

impl PeriodicPath {
    pub fn new(samples: Vec<C3>) -> Result<Self> {
        check_sample_count(samples.len())?;
        Ok(PeriodicPath { samples })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> C3) -> Result<Self> {
        check_sample_count(n)?;
        Ok(PeriodicPath { samples: (0..n).map(|k| f(k as f64 / n as f64)).collect() })
    }

    pub fn from_real(v: &[R3]) -> Result<Self> {
        Self::new(v.iter().map(|r| complexify(r, &[0.0; 3])).collect())
    }

    pub fn samples(&self) -> &[C3] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn param(&self, k: usize) -> f64 {
        k as f64 / self.samples.len() as f64
    }

    fn component(&self, i: usize) -> Vec<C64> {
        self.samples.iter().map(|z| z[i]).collect()
    }

    fn from_components(c: [Vec<C64>; 3]) -> Self {
        let n = c[0].len();
        PeriodicPath { samples: (0..n).map(|k| [c[0][k], c[1][k], c[2][k]]).collect() }
    }

    fn map_components(&self, f: impl Fn(&[C64]) -> Vec<C64>) -> Self {
        Self::from_components([f(&self.component(0)), f(&self.component(1)), f(&self.component(2))])
    }

    /// Trapezoid integral over one period.
    pub fn period(&self) -> C3 {
        let n = self.samples.len() as f64;
        let mut acc = ZERO3;
        for z in &self.samples {
            acc = cadd(&acc, z);
        }
        cscale(C64::new(1.0 / n, 0.0), &acc)
    }

    pub fn derivative(&self) -> Self {
        self.map_components(fourier::derivative)
    }

    /// Zero-mean antiderivative; the period is discarded.
    pub fn antiderivative(&self) -> Self {
        self.map_components(fourier::antiderivative)
    }

    pub fn coefficients(&self) -> [Vec<C64>; 3] {
        [
            fourier::coefficients(&self.component(0)),
            fourier::coefficients(&self.component(1)),
            fourier::coefficients(&self.component(2)),
        ]
    }

    pub fn eval(&self, x: f64) -> C3 {
        let c = self.coefficients();
        [fourier::interpolate(&c[0], x), fourier::interpolate(&c[1], x), fourier::interpolate(&c[2], x)]
    }

    pub fn resample(&self, m: usize) -> Result<Self> {
        check_sample_count(m)?;
        Ok(self.map_components(|v| fourier::resample(v, m)))
    }

    /// Energy fraction in the top quarter of the spectrum.
    pub fn refinement_error(&self) -> f64 {
        (0..3).map(|i| fourier::tail_fraction(&self.component(i))).fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> Vec<R3> {
        self.samples.iter().map(re3).collect()
    }

    pub fn imag_part(&self) -> Vec<R3> {
        self.samples.iter().map(im3).collect()
    }

    /// Loop product: traverse self, then other, reparametrized to [0, 1).
    pub fn concat(&self, other: &PeriodicPath) -> Result<Self> {
        let mut s = self.samples.clone();
        s.extend_from_slice(&other.samples);
        Self::new(s)
    }

    pub fn max_null_residual(&self) -> f64 {
        self.samples.iter().map(null_residual).fold(0.0, f64::max)
    }

    pub fn min_norm(&self) -> f64 {
        self.samples.iter().map(cnorm).fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(usize, &C3) -> C3) -> Self {
        PeriodicPath { samples: self.samples.iter().enumerate().map(|(k, z)| f(k, z)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_counts() {
        assert_eq!(PeriodicPath::new(vec![ZERO3; 100]), Err(Error::InvalidSampleCount(100)));
        assert!(PeriodicPath::new(vec![ZERO3; 32]).is_err());
    }

    #[test]
    fn period_of_exponential_loop() {
        let p = PeriodicPath::from_fn(64, |x| {
            let e = C64::from_polar(1.0, 2.0 * PI * x);
            [e, I * e, c(1.0, 0.0)]
        })
        .unwrap();
        let per = p.period();
        assert!((per[2] - 1.0).norm() < 1e-15);
        assert!(per[0].norm() < 1e-15);
    }
}
