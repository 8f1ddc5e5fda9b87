//! Dense complex polynomials, coefficient k multiplies z^k.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Poly { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// Value and first two derivatives.
    pub fn eval_d2(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let (mut p, mut d1, mut d2) = (zero, zero, zero);
        for c in self.coeffs.iter().rev() {
            d2 = d2 * z + d1 * 2.0;
            d1 = d1 * z + p;
            p = p * z + c;
        }
        (p, d1, d2)
    }

    pub fn derivative(&self) -> Poly {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * k as f64)
            .collect();
        Poly { coeffs }
    }

    /// Taylor coefficients about `z0`: `P(z0 + w) = sum out[m] w^m`.
    pub fn taylor_at(&self, z0: Complex64) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        self.taylor_at_into(z0, &mut out);
        out
    }

    /// Repeated synthetic division into a caller-owned buffer.
    pub fn taylor_at_into(&self, z0: Complex64, out: &mut Vec<Complex64>) {
        out.clear();
        out.extend_from_slice(&self.coeffs);
        let n = out.len();
        for i in 0..n {
            for k in (i..n - 1).rev() {
                let t = out[k + 1] * z0;
                out[k] += t;
            }
        }
    }

    /// Coefficients of `P(a z + b)`.
    pub fn compose_affine(&self, a: Complex64, b: Complex64) -> Poly {
        let shifted = self.taylor_at(b);
        let mut pw = Complex64::new(1.0, 0.0);
        let coeffs = shifted
            .into_iter()
            .map(|c| {
                let v = c * pw;
                pw *= a;
                v
            })
            .collect();
        Poly { coeffs }
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn taylor_shift_of_square() {
        // (z0 + w)^2 = z0^2 + 2 z0 w + w^2
        let p = Poly::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let t = p.taylor_at(c(3.0, 1.0));
        assert!((t[0] - c(8.0, 6.0)).norm() < 1e-14);
        assert!((t[1] - c(6.0, 2.0)).norm() < 1e-14);
        assert!((t[2] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eval_d2_matches_derivatives() {
        let p = Poly::new(vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0), c(2.0, -1.0)]);
        let z = c(0.3, -1.2);
        let (v, d1, d2) = p.eval_d2(z);
        assert!((v - p.eval(z)).norm() < 1e-13);
        assert!((d1 - p.derivative().eval(z)).norm() < 1e-13);
        assert!((d2 - p.derivative().derivative().eval(z)).norm() < 1e-13);
    }

    #[test]
    fn affine_composition() {
        let p = Poly::new(vec![c(5.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        let a = c(0.5, 0.5);
        let b = c(-1.0, 2.0);
        let q = p.compose_affine(a, b);
        let z = c(0.7, 0.1);
        assert!((q.eval(z) - p.eval(a * z + b)).norm() < 1e-13);
    }
}
