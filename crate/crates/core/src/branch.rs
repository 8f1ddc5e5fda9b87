//! Square and fourth roots, and arguments, on an arbitrary branch cut.
//!
//! A branch is fixed by a cut angle `phi`; arguments are returned in the
//! half-open window `(phi, phi + 2pi]`. Roots are built from the principal
//! root and the integer shift `kappa`, so changing the cut only ever
//! multiplies a root by an exact power of `i`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

/// Fractional-part tolerance for the integer test in `kappa`.
pub const CHI_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub phi: f64,
}

impl BranchSpec {
    pub fn new(phi: f64) -> Self {
        BranchSpec { phi }
    }

    pub fn arg(&self, z: Complex64) -> Result<f64> {
        arg_on_branch(z, self.phi)
    }

    pub fn sqrt(&self, z: Complex64) -> Complex64 {
        sqrt_on_branch(z, self.phi)
    }

    pub fn fourth_root(&self, z: Complex64) -> Complex64 {
        fourth_root_on_branch(z, self.phi)
    }

    /// `z^p` for real `p` with the argument taken on this branch.
    pub fn pow(&self, z: Complex64, p: f64) -> Complex64 {
        if z == Complex64::new(0.0, 0.0) {
            return z;
        }
        let a = branch_arg_unchecked(z, self.phi);
        Complex64::from_polar(z.norm().powf(p), p * a)
    }

    /// Logarithm with imaginary part in `(phi, phi + 2pi]`.
    pub fn ln(&self, z: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(z.norm().ln(), self.arg(z)?))
    }
}

/// `1` if `t` is an integer up to `CHI_TOL`, else `0`.
fn chi_int(t: f64) -> i64 {
    if (t - t.round()).abs() <= CHI_TOL {
        1
    } else {
        0
    }
}

/// The shift K with `theta + 2pi*K` in `(phi, phi + 2pi]`.
pub fn kappa(theta: f64, phi: f64) -> i64 {
    let t = (phi - theta) / TAU;
    if chi_int(t) == 1 {
        // ceil(t) + 1 for t an integer
        t.round() as i64 + 1
    } else {
        t.ceil() as i64
    }
}

fn principal_arg(z: Complex64) -> f64 {
    z.im.atan2(z.re)
}

fn branch_arg_unchecked(z: Complex64, phi: f64) -> f64 {
    let theta = principal_arg(z);
    theta + TAU * kappa(theta, phi) as f64
}

/// Argument of `z` in `(phi, phi + 2pi]`.
pub fn arg_on_branch(z: Complex64, phi: f64) -> Result<f64> {
    if z.re == 0.0 && z.im == 0.0 {
        return Err(AtlasError::domain("argument of zero undefined"));
    }
    if !phi.is_finite() {
        return Err(AtlasError::domain("branch angle must be finite"));
    }
    Ok(branch_arg_unchecked(z, phi))
}

fn principal_sqrt(z: Complex64, theta: f64) -> Complex64 {
    Complex64::from_polar(z.norm().sqrt(), 0.5 * theta)
}

/// `sqrt|z| * exp(i arg_phi(z) / 2)`. Returns 0 at the origin.
pub fn sqrt_on_branch(z: Complex64, phi: f64) -> Complex64 {
    if z.re == 0.0 && z.im == 0.0 {
        return z;
    }
    let theta = principal_arg(z);
    let s = principal_sqrt(z, theta);
    if kappa(theta, phi).rem_euclid(2) == 1 {
        -s
    } else {
        s
    }
}

/// `|z|^(1/4) * exp(i arg_phi(z) / 4)`. Returns 0 at the origin.
pub fn fourth_root_on_branch(z: Complex64, phi: f64) -> Complex64 {
    if z.re == 0.0 && z.im == 0.0 {
        return z;
    }
    let theta = principal_arg(z);
    let s = Complex64::from_polar(z.norm().sqrt().sqrt(), 0.25 * theta);
    times_i_pow(s, kappa(theta, phi))
}

fn times_i_pow(s: Complex64, k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => s,
        1 => Complex64::new(-s.im, s.re),
        2 => -s,
        _ => Complex64::new(s.im, -s.re),
    }
}

/// Sign `s` with `sqrt_on_branch(z, phi) == s * sqrt_on_branch(z, psi)`.
pub fn branch_relation_sign(z: Complex64, phi: f64, psi: f64) -> i32 {
    if z.re == 0.0 && z.im == 0.0 {
        return 1;
    }
    let theta = principal_arg(z);
    if (kappa(theta, phi) - kappa(theta, psi)).rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Reduce an angle difference into `(-pi, pi]`.
pub fn reduce_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn arg_examples() {
        let z = Complex64::from_polar(3.0, -PI);
        assert!((arg_on_branch(z, -PI).unwrap() - PI).abs() < 1e-12);
        assert!((arg_on_branch(c(-3.0, 0.0), -PI).unwrap() - PI).abs() < 1e-12);
        assert_eq!(arg_on_branch(c(1.0, 0.0), 0.0).unwrap(), TAU);
        let z = Complex64::from_polar(1.0, -FRAC_PI_2);
        assert!((arg_on_branch(z, 0.0).unwrap() - 1.5 * PI).abs() < 1e-12);
        assert!(arg_on_branch(c(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(-FRAC_PI_2, 0.0), 1);
        assert_eq!(kappa(0.7, 0.7), 1);
        assert_eq!(kappa(0.7 + PI, 0.7), 0);
    }

    #[test]
    fn sqrt_examples() {
        assert!(close(sqrt_on_branch(c(-1.0, 0.0), 0.0), c(0.0, 1.0), 1e-15));
        assert!(close(sqrt_on_branch(c(-1.0, 0.0), PI), c(0.0, -1.0), 1e-15));
        assert!(close(sqrt_on_branch(c(4.0, 0.0), -PI), c(2.0, 0.0), 1e-15));
        assert_eq!(sqrt_on_branch(c(0.0, 0.0), 1.0), c(0.0, 0.0));
    }

    #[test]
    fn fourth_root_examples() {
        assert!(close(fourth_root_on_branch(c(16.0, 0.0), -PI), c(2.0, 0.0), 1e-15));
        let e = Complex64::from_polar(1.0, PI / 4.0);
        assert!(close(fourth_root_on_branch(c(-1.0, 0.0), 0.0), e, 1e-15));
        let e = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
        assert!(close(fourth_root_on_branch(c(-1.0, 0.0), PI), e, 1e-15));
    }

    #[test]
    fn relation_examples() {
        assert_eq!(branch_relation_sign(c(-1.0, 0.0), 0.0, PI), -1);
        assert_eq!(branch_relation_sign(c(1.0, 0.0), -PI, -PI), 1);
        assert_eq!(branch_relation_sign(c(0.0, 1.0), 0.0, 4.0 * PI), 1);
    }

    #[test]
    fn pow_matches_roots() {
        let z = c(-2.0, 0.5);
        for phi in [-3.0, 0.0, 1.0, 5.0] {
            let b = BranchSpec::new(phi);
            assert!(close(b.pow(z, 0.5), b.sqrt(z), 1e-14));
            assert!(close(b.pow(z, 0.25), b.fourth_root(z), 1e-14));
        }
    }

    #[test]
    fn reduce_angle_window() {
        assert!((reduce_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((reduce_angle(-PI) - PI).abs() < 1e-12);
        assert!((reduce_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
