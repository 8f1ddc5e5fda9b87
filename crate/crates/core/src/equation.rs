//! The equation f'' + P(z) f = 0, its derived constants and the
//! normalization g(z) = f(mu z - c), Q(z) = mu^2 P(mu z - c).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::branch::reduce_angle;
use crate::error::{AtlasError, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub coeffs: Vec<Complex64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub n: usize,
    pub c: Complex64,
    pub q: f64,
    pub d: Complex64,
    pub mu: Complex64,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    #[serde(rename = "M0")]
    pub m0: f64,
    #[serde(rename = "R_min")]
    pub r_min: f64,
    pub abs_pn: f64,
    pub arg_pn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEquation {
    /// a_0 ... a_{n-2}
    pub a: Vec<Complex64>,
    pub n: usize,
    pub mu: Complex64,
    pub c: Complex64,
}

/// Principal argument in (-pi, pi]; the value -pi is mapped to pi.
pub fn principal_arg(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

pub fn validate(coeffs: &[Complex64]) -> Result<EquationSpec> {
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(AtlasError::validation("coefficients must be finite"));
    }
    let mut v = coeffs.to_vec();
    while v.last().is_some_and(|c| c.re == 0.0 && c.im == 0.0) {
        v.pop();
    }
    if v.len() < 2 {
        return Err(AtlasError::validation("degree must be >= 1"));
    }
    let n = v.len() - 1;
    Ok(EquationSpec { coeffs: v, n })
}

impl EquationSpec {
    pub fn poly(&self) -> Poly {
        Poly::new(self.coeffs.clone())
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs[self.n]
    }

    pub fn derive_constants(&self) -> DerivedConstants {
        derive_constants(self)
    }

    pub fn normalize(&self) -> NormalizedEquation {
        normalize(self)
    }
}

pub fn derive_constants(spec: &EquationSpec) -> DerivedConstants {
    let n = spec.n;
    let pn = spec.leading();
    let np2 = (n + 2) as f64;
    let arg_pn = principal_arg(pn);
    let abs_pn = pn.norm();
    let c = spec.coeffs[n - 1] / (pn * n as f64);
    let q = np2 / 2.0;
    let d = Complex64::from_polar(abs_pn.sqrt(), 0.5 * arg_pn) / q;
    let mu = Complex64::from_polar(abs_pn.powf(-1.0 / np2), -arg_pn / np2);
    let theta = (0..n + 2)
        .map(|j| (TAU * j as f64 - arg_pn) / np2)
        .collect();
    let psi = (0..n + 2).map(|j| TAU * j as f64 / np2).collect();
    let ne = normalize_with(spec, mu, c);
    let m0 = ne.m0();
    let r_min = ne.r_min();
    DerivedConstants {
        n,
        c,
        q,
        d,
        mu,
        theta,
        psi,
        m0,
        r_min,
        abs_pn,
        arg_pn,
    }
}

pub fn normalize(spec: &EquationSpec) -> NormalizedEquation {
    let dc = derive_constants(spec);
    normalize_with(spec, dc.mu, dc.c)
}

fn normalize_with(spec: &EquationSpec, mu: Complex64, c: Complex64) -> NormalizedEquation {
    let n = spec.n;
    let q = spec.poly().compose_affine(mu, -c).scale(mu * mu);
    let a = q.coeffs[..n.saturating_sub(1)].to_vec();
    NormalizedEquation { a, n, mu, c }
}

impl NormalizedEquation {
    /// Q as a full polynomial: monic, no z^{n-1} term.
    pub fn q_poly(&self) -> Poly {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.n + 1];
        coeffs[..self.a.len()].copy_from_slice(&self.a);
        coeffs[self.n] = Complex64::new(1.0, 0.0);
        Poly::new(coeffs)
    }

    pub fn m0(&self) -> f64 {
        self.a.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn r_min(&self) -> f64 {
        let n = self.n as f64;
        1f64.max(((n - 1.0) * self.m0()).sqrt())
    }

    /// ell(z) = sum a_{n-s} z^{-s}, s = 2..n, without the domain check.
    pub fn ell_unchecked(&self, z: Complex64) -> Complex64 {
        let zero = Complex64::new(0.0, 0.0);
        if self.n < 2 {
            return zero;
        }
        let w = z.inv();
        // ell(z) = w^2 (a_{n-2} + a_{n-3} w + ... + a_0 w^{n-2})
        let mut acc = zero;
        for k in 0..=self.n - 2 {
            acc = acc * w + self.a[k];
        }
        acc * w * w
    }

    /// ell(z) and ell'(z).
    pub fn ell_d1(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        if self.n < 2 {
            return (zero, zero);
        }
        let w = z.inv();
        let (mut v, mut dv) = (zero, zero);
        for s in 2..=self.n {
            let a = self.a[self.n - s];
            let ws = w.powu(s as u32);
            v += a * ws;
            dv -= a * ws * w * s as f64;
        }
        (v, dv)
    }

    pub fn ell_eval(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() <= self.r_min() {
            return Err(AtlasError::domain("outside guaranteed domain |z| > R_min"));
        }
        let l = self.ell_unchecked(z);
        if l.norm() >= 1.0 {
            return Err(AtlasError::numeric("|ell(z)| >= 1", l.norm()));
        }
        Ok(l)
    }

    /// Coefficients of P recovered from Q: P(w) = Q((w + c)/mu) / mu^2.
    pub fn denormalize(&self) -> Poly {
        let inv = self.mu.inv();
        self.q_poly()
            .compose_affine(inv, self.c * inv)
            .scale(inv * inv)
    }
}

/// The zero-approach rate e_n(r).
pub fn e_n(r: f64, n: usize) -> Result<f64> {
    if !(r > 0.0) || n == 0 {
        return Err(AtlasError::domain("e_n needs r > 0 and n >= 1"));
    }
    Ok(match n {
        1 => r.powf(-1.5),
        2 => r.ln() / (r * r),
        _ => 1.0 / (r * r),
    })
}

pub fn lambda_membership(z: Complex64, j: usize, dc: &DerivedConstants, cc: f64, r_lambda: f64) -> bool {
    let w = z + dc.c;
    let r = w.norm();
    if !(r > r_lambda) || j >= dc.theta.len() {
        return false;
    }
    let dtheta = reduce_angle(principal_arg(w) - dc.theta[j]).abs();
    match e_n(r, dc.n) {
        Ok(e) => dtheta < cc * e,
        Err(_) => false,
    }
}

/// Distance from z to the critical translate arg(z + c) = theta_j.
pub fn dist_to_translate(z: Complex64, j: usize, dc: &DerivedConstants) -> f64 {
    let w = (z + dc.c) * Complex64::from_polar(1.0, -dc.theta[j]);
    if w.re >= 0.0 {
        w.im.abs()
    } else {
        w.norm()
    }
}

/// Critical index j whose theta_j is angularly closest to arg(z + c).
pub fn nearest_critical(z: Complex64, dc: &DerivedConstants) -> usize {
    let a = principal_arg(z + dc.c);
    let mut best = (0, f64::INFINITY);
    for (j, t) in dc.theta.iter().enumerate() {
        let d = reduce_angle(a - t).abs();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn validate_examples() {
        assert_eq!(validate(&real(&[0.0, 1.0])).unwrap().n, 1);
        assert_eq!(validate(&real(&[5.0, 2.0, 1.0])).unwrap().n, 2);
        assert!(validate(&real(&[7.0])).is_err());
        assert!(validate(&real(&[1.0, 0.0, 0.0])).is_err());
        assert_eq!(validate(&real(&[1.0, 2.0, 0.0])).unwrap().n, 1);
    }

    #[test]
    fn constants_examples() {
        let dc = validate(&real(&[5.0, 2.0, 1.0])).unwrap().derive_constants();
        assert!((dc.c - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(dc.q, 2.0);
        assert!((dc.d - c(0.5, 0.0)).norm() < 1e-15);

        let dc = validate(&real(&[0.0, 1.0])).unwrap().derive_constants();
        let want = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
        for (t, w) in dc.theta.iter().zip(want) {
            assert!((t - w).abs() < 1e-15);
        }
        assert_eq!(dc.q, 1.5);
        assert!((dc.d - c(2.0 / 3.0, 0.0)).norm() < 1e-15);
        assert_eq!(dc.c, c(0.0, 0.0));

        let dc = validate(&real(&[0.0, -1.0])).unwrap().derive_constants();
        let want = [-PI / 3.0, PI / 3.0, PI];
        for (t, w) in dc.theta.iter().zip(want) {
            assert!((t - w).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_examples() {
        let ne = validate(&real(&[0.0, 1.0])).unwrap().normalize();
        assert!((ne.mu - c(1.0, 0.0)).norm() < 1e-15);
        assert!(ne.a.is_empty());

        let ne = validate(&real(&[0.0, 8.0, 4.0])).unwrap().normalize();
        assert!((ne.mu - c(0.5f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!((ne.c - c(1.0, 0.0)).norm() < 1e-15);
        assert!((ne.a[0] - c(-2.0, 0.0)).norm() < 1e-14);

        for n in 1..7 {
            let mut v = vec![c(0.0, 0.0); n + 1];
            v[n] = c(1.0, 0.0);
            let ne = validate(&v).unwrap().normalize();
            assert_eq!(ne.mu, c(1.0, 0.0));
            assert!(ne.a.iter().all(|a| a.norm() == 0.0));
        }
    }

    #[test]
    fn e_n_examples() {
        assert!((e_n(4.0, 1).unwrap() - 0.125).abs() < 1e-15);
        assert!((e_n(10.0, 2).unwrap() - 0.01 * 10f64.ln()).abs() < 1e-15);
        assert!((e_n(10.0, 3).unwrap() - 0.01).abs() < 1e-15);
        assert!(e_n(0.0, 1).is_err());
    }

    #[test]
    fn ell_examples() {
        let ne = validate(&real(&[-2.0, 0.0, 1.0])).unwrap().normalize();
        assert!((ne.ell_eval(c(10.0, 0.0)).unwrap() - c(-0.02, 0.0)).norm() < 1e-15);
        let ne = validate(&real(&[0.0, 1.0])).unwrap().normalize();
        assert_eq!(ne.ell_eval(c(3.0, 4.0)).unwrap(), c(0.0, 0.0));
        let ne = validate(&real(&[0.0, 1.0, 0.0, 1.0])).unwrap().normalize();
        assert!((ne.ell_eval(c(0.0, 10.0)).unwrap() - c(-0.01, 0.0)).norm() < 1e-15);
        let ne = validate(&real(&[-2.0, 0.0, 1.0])).unwrap().normalize();
        assert!(ne.ell_eval(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn ell_derivative_fd() {
        let ne = validate(&[c(1.0, 0.5), c(-0.3, 0.2), c(0.0, 0.0), c(2.0, 1.0)])
            .unwrap()
            .normalize();
        let z = c(3.0, -2.0);
        let h = 1e-5;
        let (v, dv) = ne.ell_d1(z);
        let fd = (ne.ell_unchecked(z + h) - ne.ell_unchecked(z - h)) / (2.0 * h);
        assert!((v - ne.ell_unchecked(z)).norm() < 1e-15);
        assert!((dv - fd).norm() < 1e-9);
    }

    #[test]
    fn lambda_examples() {
        let dc = validate(&real(&[0.0, 1.0])).unwrap().derive_constants();
        assert!(lambda_membership(c(5.0, 0.0), 0, &dc, 1.0, 1.0));
        assert!(!lambda_membership(c(0.5, 0.0), 0, &dc, 1.0, 1.0));
        let z = Complex64::from_polar(9.0, 0.02);
        assert!(lambda_membership(z, 0, &dc, 1.0, 1.0));
        let z = Complex64::from_polar(9.0, 0.04);
        assert!(!lambda_membership(z, 0, &dc, 1.0, 1.0));
    }

    #[test]
    fn translate_distance() {
        let dc = validate(&[c(0.0, 1.0), c(1.0, 0.0)]).unwrap().derive_constants();
        assert!((dist_to_translate(c(5.0, -1.0), 0, &dc)).abs() < 1e-15);
        assert!((dist_to_translate(c(5.0, -0.5), 0, &dc) - 0.5).abs() < 1e-15);
        assert!((dist_to_translate(c(-3.0, -1.0), 0, &dc) - 3.0).abs() < 1e-15);
    }
}
