//! Truncated Laurent series built from blocks sum_k c_k ((z - a)/s)^k.

use crate::vec3::c;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentBlock {
    pub center: C64,
    pub scale: f64,
    /// Exponent of coeffs[0].
    pub min_exp: i32,
    pub coeffs: Vec<C64>,
}

impl LaurentBlock {
    pub fn max_exp(&self) -> i32 {
        self.min_exp + self.coeffs.len() as i32 - 1
    }

    pub fn eval(&self, z: C64) -> C64 {
        if self.coeffs.is_empty() {
            return c(0.0, 0.0);
        }
        let u = (z - self.center) / self.scale;
        let lo = self.min_exp;
        let hi = self.max_exp();
        let mut acc = c(0.0, 0.0);
        // Nonnegative exponents by Horner in u.
        if hi >= 0 {
            let first = lo.max(0);
            let mut p = c(0.0, 0.0);
            for e in (first..=hi).rev() {
                p = p * u + self.coeffs[(e - lo) as usize];
            }
            acc += p * u.powi(first);
        }
        // Negative exponents by Horner in 1/u.
        if lo < 0 {
            let v = u.inv();
            let last = hi.min(-1);
            let mut p = c(0.0, 0.0);
            for e in lo..=last {
                p = p * v + self.coeffs[(e - lo) as usize];
            }
            acc += p * v.powi(-last);
        }
        acc
    }
}

/// Sum of blocks. `truncation_bound` records a bound on the neglected tail
/// on the domain where the series is meant to be used; 0 for exact data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Laurent {
    pub blocks: Vec<LaurentBlock>,
    pub truncation_bound: f64,
}

impl Laurent {
    pub fn zero() -> Self {
        Laurent::default()
    }

    pub fn constant(v: C64) -> Self {
        Self::monomial(c(0.0, 0.0), 0, v)
    }

    /// coef (z - center)^k
    pub fn monomial(center: C64, k: i32, coef: C64) -> Self {
        Laurent {
            blocks: vec![LaurentBlock { center, scale: 1.0, min_exp: k, coeffs: vec![coef] }],
            truncation_bound: 0.0,
        }
    }

    /// sum_k coeffs[k] z^k
    pub fn polynomial(coeffs: Vec<C64>) -> Self {
        Laurent {
            blocks: vec![LaurentBlock { center: c(0.0, 0.0), scale: 1.0, min_exp: 0, coeffs }],
            truncation_bound: 0.0,
        }
    }

    /// Taylor polynomial of exp(z) with its tail bound on |z| <= radius.
    pub fn exp_taylor(degree: usize, radius: f64) -> Self {
        let mut coeffs = Vec::with_capacity(degree + 1);
        let mut f = 1.0;
        for k in 0..=degree {
            if k > 0 {
                f /= k as f64;
            }
            coeffs.push(c(f, 0.0));
        }
        // Tail <= r^{d+1}/(d+1)! * e^r.
        let mut tail = radius.exp();
        for k in 1..=degree + 1 {
            tail *= radius / k as f64;
        }
        let mut l = Self::polynomial(coeffs);
        l.truncation_bound = tail;
        l
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.blocks.iter().map(|b| b.eval(z)).sum()
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for v in &mut b.coeffs {
                *v *= s;
            }
        }
        out.truncation_bound *= s.norm();
        out
    }

    pub fn plus(&self, other: &Laurent) -> Self {
        let mut out = self.clone();
        out.blocks.extend(other.blocks.iter().cloned());
        out.truncation_bound += other.truncation_bound;
        out
    }

    pub fn n_coeffs(&self) -> usize {
        self.blocks.iter().map(|b| b.coeffs.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_mixed_exponents() {
        let b = LaurentBlock { center: c(1.0, 0.0), scale: 2.0, min_exp: -2, coeffs: vec![c(1.0, 0.0), c(0.0, 1.0), c(3.0, 0.0), c(0.5, 0.0)] };
        let z = c(0.3, 0.7);
        let u = (z - 1.0) / 2.0;
        let expect = u.powi(-2) + c(0.0, 1.0) / u + 3.0 + 0.5 * u;
        assert!((b.eval(z) - expect).norm() < 1e-13);
    }

    #[test]
    fn only_negative_exponents() {
        let b = LaurentBlock { center: c(0.0, 0.0), scale: 1.0, min_exp: -3, coeffs: vec![c(2.0, 0.0), c(1.0, 0.0)] };
        let z = c(0.5, 0.5);
        assert!((b.eval(z) - (2.0 * z.powi(-3) + z.powi(-2))).norm() < 1e-12);
    }

    #[test]
    fn exp_series() {
        let e = Laurent::exp_taylor(40, 2.0);
        let z = c(1.5, -0.7);
        assert!((e.eval(z) - z.exp()).norm() < 1e-14);
        assert!(e.truncation_bound < 1e-30);
    }
}
