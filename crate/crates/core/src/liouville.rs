//! The sectorial Liouville transformation zeta = L_j(z) = int_{z0}^z A,
//! A = z^{n/2} (1 + ell)^{1/2}, for the normalized equation g'' + Q g = 0.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branch::{reduce_angle, sqrt_on_branch, BranchSpec};
use crate::config::Tolerances;
use crate::equation::{e_n, NormalizedEquation};
use crate::error::{AtlasError, Result};
use crate::poly::Poly;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleEvaluation {
    pub z: Complex64,
    pub zeta: Complex64,
    #[serde(rename = "K")]
    pub k: Complex64,
    pub j: usize,
    pub method: Method,
    pub est_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesExpansion {
    /// binom(1/2, k)
    pub alpha: Vec<f64>,
    /// (1 + ell)^{1/2} = sum_m c_m z^{-m}
    pub c: Vec<Complex64>,
    /// index p + 1 = n/2 + 1 of the log term, even n only
    pub log_index: Option<usize>,
    pub order: usize,
    /// C(z0) = -S(z0)
    pub constant: Complex64,
    /// majorant coefficients of (1 - |ell|)^{-1/2}, for tail bounds
    majorant: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LiouvilleContext {
    pub eq: NormalizedEquation,
    pub j: usize,
    pub r: f64,
    pub z0: Complex64,
    pub branch: BranchSpec,
    pub psi_j: f64,
    pub half_width: f64,
    pub delta: f64,
    pub r_tilde: f64,
    pub tol: Tolerances,
    qpoly: Poly,
    n: usize,
    q: f64,
    r_min: f64,
    series: SeriesExpansion,
}

/// Binomial coefficients binom(e, k), k = 0..=m.
fn binomials(e: f64, m: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for k in 1..=m {
        let prev = out[k - 1];
        out.push(prev * (e - (k - 1) as f64) / k as f64);
    }
    out
}

fn series_mul<T>(a: &[T], b: &[T], m: usize) -> Vec<T>
where
    T: Copy + Default + std::ops::Mul<Output = T> + std::ops::AddAssign,
{
    let mut out = vec![T::default(); m + 1];
    for (i, &x) in a.iter().enumerate().take(m + 1) {
        for (k, &y) in b.iter().enumerate().take(m + 1 - i) {
            out[i + k] += x * y;
        }
    }
    out
}

/// Sum_k w_k * l^k truncated at degree m, for a series l without constant term.
fn compose_binomial<T>(l: &[T], w: &[f64], m: usize) -> Vec<T>
where
    T: Copy + Default + std::ops::Mul<Output = T> + std::ops::AddAssign + std::ops::Mul<f64, Output = T> + From<f64>,
{
    let mut out = vec![T::default(); m + 1];
    let mut pw = vec![T::default(); m + 1];
    pw[0] = T::from(1.0);
    for (k, &wk) in w.iter().enumerate() {
        if k > 0 {
            pw = series_mul(&pw, l, m);
        }
        for i in 0..=m {
            out[i] += pw[i] * wk;
        }
    }
    out
}

impl SeriesExpansion {
    fn build(eq: &NormalizedEquation, order: usize) -> SeriesExpansion {
        let n = eq.n;
        // ell as a series in w = 1/z
        let mut l = vec![Complex64::new(0.0, 0.0); order + 1];
        let mut lm = vec![0.0; order + 61];
        for s in 2..=n {
            if s <= order {
                l[s] = eq.a[n - s];
            }
            if s < lm.len() {
                lm[s] = eq.a[n - s].norm();
            }
        }
        let kmax = order / 2 + 1;
        let alpha = binomials(0.5, kmax);
        let c = compose_binomial(&l, &alpha, order);
        let mm = order + 60;
        let beta: Vec<f64> = binomials(-0.5, mm / 2 + 1)
            .iter()
            .enumerate()
            .map(|(k, b)| if k % 2 == 0 { *b } else { -*b })
            .collect();
        let majorant = compose_binomial(&lm, &beta, mm);
        let log_index = if n.is_multiple_of(2) { Some(n / 2 + 1) } else { None };
        SeriesExpansion {
            alpha,
            c,
            log_index,
            order,
            constant: Complex64::new(0.0, 0.0),
            majorant,
        }
    }

    /// Relative tail bound at modulus r for the terms beyond `order`.
    fn tail_rel(&self, r: f64, q: f64) -> f64 {
        let x = 1.0 / r;
        let mut sum = 0.0;
        let mut last = 0.0;
        let mut prev = 0.0;
        for m in self.order + 1..self.majorant.len() {
            let t = self.majorant[m] * x.powi(m as i32) * q / (q - m as f64).abs().max(0.5);
            sum += t;
            if t > 0.0 {
                prev = last;
                last = t;
            }
        }
        if last == 0.0 {
            return sum;
        }
        let ratio = if prev > 0.0 { last / prev } else { 0.5 };
        if ratio >= 1.0 {
            return f64::INFINITY;
        }
        sum + last * ratio / (1.0 - ratio)
    }
}

fn crosses_ray(a: Complex64, b: Complex64, alpha: f64) -> bool {
    let rot = Complex64::from_polar(1.0, -alpha);
    let (a, b) = (a * rot, b * rot);
    if (a.im > 0.0 && b.im > 0.0) || (a.im < 0.0 && b.im < 0.0) {
        return false;
    }
    if a.im == b.im {
        return a.re > 0.0 || b.re > 0.0;
    }
    let x = a.re - a.im * (b.re - a.re) / (b.im - a.im);
    x > 0.0
}

fn segment_min_modulus(a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let dd = d.norm_sqr();
    if dd == 0.0 {
        return a.norm();
    }
    let t = (-(a.re * d.re + a.im * d.im) / dd).clamp(0.0, 1.0);
    (a + d * t).norm()
}

impl LiouvilleContext {
    pub fn new(eq: NormalizedEquation, j: usize, r: f64) -> Result<Self> {
        Self::with_tolerances(eq, j, r, Tolerances::default())
    }

    pub fn with_tolerances(eq: NormalizedEquation, j: usize, r: f64, tol: Tolerances) -> Result<Self> {
        let n = eq.n;
        if j >= n + 2 {
            return Err(AtlasError::domain(format!("sector index {j} out of range")));
        }
        let r_min = eq.r_min();
        if !(r >= r_min) {
            return Err(AtlasError::domain(format!("R = {r} below R_min = {r_min}")));
        }
        let psi_j = TAU * j as f64 / (n + 2) as f64;
        let q = (n + 2) as f64 / 2.0;
        let series = SeriesExpansion::build(&eq, n + 6);
        let mut ctx = LiouvilleContext {
            qpoly: eq.q_poly(),
            eq,
            j,
            r,
            z0: Complex64::from_polar(2.0 * r, psi_j),
            branch: BranchSpec::new(psi_j - PI),
            psi_j,
            half_width: TAU / (n + 2) as f64,
            delta: 0.1,
            r_tilde: 0.0,
            tol,
            n,
            q,
            r_min,
            series,
        };
        ctx.series.constant = ctx.integration_constant();
        let far = Complex64::from_polar(3.0 * r, psi_j);
        ctx.r_tilde = ctx.forward(far)?.zeta.norm();
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn series_expansion(&self) -> &SeriesExpansion {
        &self.series
    }

    /// z in G_j(R).
    pub fn in_domain(&self, z: Complex64) -> bool {
        if !(z.norm() > self.r) {
            return false;
        }
        let d = reduce_angle(z.im.atan2(z.re) - self.psi_j);
        d.abs() < self.half_width
    }

    /// zeta in the image domain {|zeta| > R~, |arg zeta - pi j| <= pi - delta}.
    pub fn in_image_domain(&self, zeta: Complex64) -> bool {
        if !(zeta.norm() > self.r_tilde) {
            return false;
        }
        let d = reduce_angle(zeta.im.atan2(zeta.re) - PI * self.j as f64);
        d.abs() <= PI - self.delta
    }

    fn sqrt_z(&self, z: Complex64) -> Complex64 {
        sqrt_on_branch(z, self.branch.phi)
    }

    fn one_plus_ell(&self, z: Complex64) -> Complex64 {
        Complex64::new(1.0, 0.0) + self.eq.ell_unchecked(z)
    }

    pub fn a_of(&self, z: Complex64) -> Complex64 {
        self.sqrt_z(z).powi(self.n as i32) * self.one_plus_ell(z).sqrt()
    }

    pub fn b_of(&self, z: Complex64) -> Complex64 {
        self.branch.fourth_root(z).powi(self.n as i32) * self.one_plus_ell(z).sqrt().sqrt()
    }

    /// u(z) = (2/(n+2)) z^{(n+2)/2} on the anchored branch.
    pub fn u_of(&self, z: Complex64) -> Complex64 {
        self.sqrt_z(z).powi(self.n as i32 + 2) / self.q
    }

    pub fn q_of(&self, z: Complex64) -> Complex64 {
        self.qpoly.eval(z)
    }

    /// Q'(z) / (4 Q(z)), i.e. B'/B.
    pub fn b_log_derivative(&self, z: Complex64) -> Complex64 {
        let (v, d1, _) = self.qpoly.eval_d2(z);
        d1 / (v * 4.0)
    }

    fn quad_scale(&self, z: Complex64) -> f64 {
        z.norm().max(self.z0.norm()).powf(self.q) / self.q
    }

    fn integrate_a(&self, a: Complex64, b: Complex64) -> Result<(Complex64, f64)> {
        let abs_tol = 1e-16 * self.quad_scale(a).max(self.quad_scale(b));
        let r = quad::segment(|x| self.a_of(x), a, b, abs_tol, self.tol.liouville_rel)?;
        Ok((r.value, r.error))
    }

    fn forward_path(&self, z: Complex64) -> Vec<Complex64> {
        let rz = z.norm();
        let mut path = vec![self.z0, Complex64::from_polar(rz, self.psi_j)];
        let d = reduce_angle(z.im.atan2(z.re) - self.psi_j);
        let pieces = (d.abs() / 0.5).ceil().max(1.0) as usize;
        for i in 1..pieces {
            let t = i as f64 / pieces as f64;
            path.push(Complex64::from_polar(rz, self.psi_j + d * t));
        }
        path.push(z);
        path
    }

    /// zeta = L_j(z) by quadrature along z0 -> |z| e^{i psi_j} -> z.
    pub fn forward(&self, z: Complex64) -> Result<LiouvilleEvaluation> {
        if !self.in_domain(z) {
            return Err(AtlasError::domain("z outside G_j(R)"));
        }
        let path = self.forward_path(z);
        let mut zeta = Complex64::new(0.0, 0.0);
        let mut err = 0.0;
        for w in path.windows(2) {
            let (v, e) = self.integrate_a(w[0], w[1])?;
            zeta += v;
            err += e;
        }
        let u = self.u_of(z);
        let target = 1e-10 * zeta.norm().max(1e-300);
        if err > target && err > 1e-14 * self.quad_scale(z) {
            return Err(AtlasError::numeric("Liouville quadrature above target", err / zeta.norm()));
        }
        Ok(LiouvilleEvaluation {
            z,
            zeta,
            k: zeta / u - 1.0,
            j: self.j,
            method: Method::Quadrature,
            est_error: err,
        })
    }

    /// C(z0) = -S(z0), summed to an order where the tail at z0 is negligible.
    fn integration_constant(&self) -> Complex64 {
        let rz0 = self.z0.norm();
        let mut order = self.n + 6;
        loop {
            let s = SeriesExpansion::build(&self.eq, order);
            if s.tail_rel(rz0, self.q) < 1e-15 || order >= 600 {
                return -self.series_sum(&s, self.z0);
            }
            order *= 2;
        }
    }

    /// Sum of the expansion without the integration constant.
    fn series_sum(&self, s: &SeriesExpansion, z: Complex64) -> Complex64 {
        let (rest, log) = self.series_terms(s, z);
        (Complex64::new(1.0, 0.0) + rest + log) * self.u_of(z)
    }

    /// (sum_{m >= 1, m != p+1} c_m q z^{-m}/(q - m), log term / u) relative to u(z);
    /// the m = 0 term is exactly 1 and left out so small K keeps its digits.
    fn series_terms(&self, s: &SeriesExpansion, z: Complex64) -> (Complex64, Complex64) {
        let rt = self.sqrt_z(z);
        let inv_z = (rt * rt).inv();
        let mut body = Complex64::new(0.0, 0.0);
        let mut pw = Complex64::new(1.0, 0.0);
        for (m, cm) in s.c.iter().enumerate() {
            if m > 0 && Some(m) != s.log_index {
                body += cm * pw * (self.q / (self.q - m as f64));
            }
            pw *= inv_z;
        }
        let log = match s.log_index {
            Some(m) if m <= s.order => {
                let lz = Complex64::new(z.norm().ln(), self.branch.arg(z).unwrap_or(0.0));
                s.c[m] * lz / self.u_of(z)
            }
            _ => Complex64::new(0.0, 0.0),
        };
        (body, log)
    }

    /// zeta and K(z) from the rearranged expansion of order `order`.
    pub fn series(&self, z: Complex64, order: usize) -> Result<LiouvilleEvaluation> {
        if !(z.norm() > self.r) {
            return Err(AtlasError::domain("series needs |z| > R"));
        }
        if order < 2 {
            return Err(AtlasError::domain("series order must be >= 2"));
        }
        let owned;
        let s = if order == self.series.order {
            &self.series
        } else {
            let mut fresh = SeriesExpansion::build(&self.eq, order);
            fresh.constant = self.series.constant;
            owned = fresh;
            &owned
        };
        let u = self.u_of(z);
        let (rest, log) = self.series_terms(s, z);
        let k = rest + log + s.constant / u;
        let zeta = u * (Complex64::new(1.0, 0.0) + k);
        let tail = s.tail_rel(z.norm(), self.q) * u.norm();
        if !(tail <= self.tol.series_tail * zeta.norm().max(1.0)) {
            return Err(AtlasError::numeric("series tail above tolerance", tail / zeta.norm()));
        }
        Ok(LiouvilleEvaluation {
            z,
            zeta,
            k,
            j: self.j,
            method: Method::Series,
            est_error: tail,
        })
    }

    /// Series with the order doubled until the tail bound meets tolerance.
    pub fn series_adaptive(&self, z: Complex64) -> Result<LiouvilleEvaluation> {
        let mut order = self.series.order;
        loop {
            match self.series(z, order) {
                Ok(ev) => return Ok(ev),
                Err(e) if order >= 600 => return Err(e),
                Err(_) => order *= 2,
            }
        }
    }

    /// Inverse by Newton on the series form of L_j; meant for |z| well above R.
    pub fn inverse_series(&self, zeta: Complex64) -> Result<Complex64> {
        let mut z = self.inverse_seed(zeta);
        let scale = zeta.norm().max(1.0);
        let mut res = f64::INFINITY;
        for _ in 0..60 {
            let ev = self.series_adaptive(z)?;
            let d = zeta - ev.zeta;
            res = d.norm() / scale;
            if res <= self.tol.inverse_rel {
                return Ok(z);
            }
            let mut dz = d / self.a_of(z);
            let mut tries = 0;
            while !self.in_domain(z + dz) {
                dz *= 0.5;
                tries += 1;
                if tries > 40 {
                    return Err(AtlasError::numeric("inverse not found in sector", res));
                }
            }
            z += dz;
        }
        Err(AtlasError::numeric("inverse not found in sector", res))
    }

    /// T = (Q''/Q^2 - (5/4) Q'^2/Q^3) / 4.
    pub fn perturbation_t(&self, z: Complex64) -> Result<Complex64> {
        if !(z.norm() > self.r) {
            return Err(AtlasError::domain("perturbation_T needs |z| > R"));
        }
        let (v, d1, d2) = self.qpoly.eval_d2(z);
        if v.norm() == 0.0 {
            return Err(AtlasError::domain("Q(z) = 0: pole of T"));
        }
        Ok((d2 / (v * v) - d1 * d1 / (v * v * v) * 1.25) * 0.25)
    }

    fn step_ok(&self, a: Complex64, b: Complex64) -> bool {
        self.in_domain(b)
            && segment_min_modulus(a, b) > self.r_min
            && !crosses_ray(a, b, self.psi_j + PI)
    }

    /// Leading-order seed for the inverse map.
    pub fn inverse_seed(&self, zeta: Complex64) -> Complex64 {
        let w = (zeta - self.series.constant) * self.q;
        let a = crate::branch::arg_on_branch(w, PI * self.j as f64 - PI).unwrap_or(PI * self.j as f64);
        let mut z = Complex64::from_polar(w.norm().powf(1.0 / self.q), a / self.q);
        if !self.in_domain(z) {
            let d = reduce_angle(z.im.atan2(z.re) - self.psi_j).clamp(-0.95 * self.half_width, 0.95 * self.half_width);
            z = Complex64::from_polar(z.norm().max(1.05 * self.r), self.psi_j + d);
        }
        z
    }

    /// Newton on L_j(z) - zeta starting from a point whose image is known.
    pub fn inverse_from(&self, start: Complex64, l_start: Complex64, zeta: Complex64) -> Result<(Complex64, Complex64)> {
        let mut z = start;
        let mut lz = l_start;
        let scale = zeta.norm().max(1.0);
        for _ in 0..50 {
            let res = zeta - lz;
            if res.norm() <= self.tol.inverse_rel * scale {
                return Ok((z, lz));
            }
            let mut dz = res / self.a_of(z);
            let mut tries = 0;
            while !self.step_ok(z, z + dz) {
                dz *= 0.5;
                tries += 1;
                if tries > 40 {
                    return Err(AtlasError::numeric("inverse not found in sector", res.norm() / scale));
                }
            }
            let (inc, _) = self.integrate_a(z, z + dz)?;
            z += dz;
            lz += inc;
        }
        let res = (zeta - lz).norm() / scale;
        if res <= 1e-10 {
            return Ok((z, lz));
        }
        Err(AtlasError::numeric("inverse not found in sector", res))
    }

    /// Inverse without the image-domain precondition.
    pub fn inverse_unchecked(&self, zeta: Complex64) -> Result<Complex64> {
        let z = self.inverse_seed(zeta);
        let lz = self.forward(z)?.zeta;
        Ok(self.inverse_from(z, lz, zeta)?.0)
    }

    pub fn inverse(&self, zeta: Complex64) -> Result<Complex64> {
        if !self.in_image_domain(zeta) {
            return Err(AtlasError::domain("zeta outside the image domain"));
        }
        self.inverse_unchecked(zeta)
    }

    /// max |arg(1 + K)| / e_n(|z|) over sample rays, doubled.
    pub fn estimate_c0(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in [-0.999, -0.5, 0.0, 0.5, 0.999] {
            let ang = self.psi_j + t * self.half_width;
            for k in 0..24 {
                let r = self.r * 1.05 * 2f64.powf(0.5 * k as f64);
                let z = Complex64::from_polar(r, ang);
                let ev = self.series(z, self.series.order).or_else(|_| self.forward(z));
                if let Ok(ev) = ev {
                    let a = (Complex64::new(1.0, 0.0) + ev.k).arg().abs();
                    if let Ok(e) = e_n(r, self.n) {
                        worst = worst.max(a / e);
                    }
                }
            }
        }
        2.0 * worst
    }

    /// Pre-image of the line Im zeta = v0 at Re zeta = (-1)^j u_k.
    pub fn preimage_horizontal(&self, v0: f64, u_samples: &[f64]) -> Result<PreimageCurve> {
        let sign = if self.j.is_multiple_of(2) { 1.0 } else { -1.0 };
        let c0 = self.estimate_c0();
        let bound_c = PI * v0.abs() + TAU / (self.n + 2) as f64 * c0;
        let mut points = Vec::with_capacity(u_samples.len());
        let mut offsets = Vec::with_capacity(u_samples.len());
        let mut prev: Option<(Complex64, Complex64)> = None;
        let mut ok = true;
        for &u in u_samples {
            let zeta = Complex64::new(sign * u, v0);
            if !self.in_image_domain(zeta) {
                return Err(AtlasError::domain("sample outside the image domain"));
            }
            let (z, lz) = match prev {
                Some((zp, lp)) => self
                    .inverse_from(zp, lp, zeta)
                    .or_else(|_| self.inverse_unchecked(zeta).and_then(|z| Ok((z, self.forward(z)?.zeta))))?,
                None => {
                    let z = self.inverse_unchecked(zeta)?;
                    (z, self.forward(z)?.zeta)
                }
            };
            prev = Some((z, lz));
            let off = reduce_angle(z.im.atan2(z.re) - self.psi_j).abs();
            let e = e_n(z.norm(), self.n)?;
            if off >= bound_c * e {
                ok = false;
            }
            points.push(z);
            offsets.push(off);
        }
        Ok(PreimageCurve {
            v0,
            points,
            offsets,
            c0,
            bound_c,
            within_bound: ok,
        })
    }

    /// Random pairs in G_j(R): checks |L(z1) - L(z2)| >= |u(z1) - u(z2)| / 2.
    pub fn univalence_probe(&self, trials: usize, seed: u64) -> Result<UnivalenceReport> {
        if trials == 0 {
            return Err(AtlasError::domain("trials must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(trials);
        while pairs.len() < trials {
            let p1 = self.random_point(&mut rng);
            let p2 = self.random_point(&mut rng);
            if p1 != p2 {
                pairs.push((p1, p2));
            }
        }
        let ratios: Vec<Result<(f64, Complex64, Complex64)>> = pairs
            .par_iter()
            .map(|&(z1, z2)| {
                let l1 = self.forward(z1)?.zeta;
                let l2 = self.forward(z2)?.zeta;
                let du = (self.u_of(z1) - self.u_of(z2)).norm();
                Ok(((l1 - l2).norm() / du, z1, z2))
            })
            .collect();
        let mut min = (f64::INFINITY, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for r in ratios {
            let r = r?;
            if r.0 < min.0 {
                min = r;
            }
        }
        Ok(UnivalenceReport {
            trials,
            min_ratio: min.0,
            witness: [min.1, min.2],
            passed: min.0 >= 0.5,
        })
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        let lr = rng.gen_range(0.0..(20f64).ln());
        let t: f64 = rng.gen_range(-0.98..0.98);
        Complex64::from_polar(self.r * 1.001 * lr.exp(), self.psi_j + t * self.half_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreimageCurve {
    pub v0: f64,
    pub points: Vec<Complex64>,
    pub offsets: Vec<f64>,
    pub c0: f64,
    pub bound_c: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivalenceReport {
    pub trials: usize,
    pub min_ratio: f64,
    pub witness: [Complex64; 2],
    pub passed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::validate;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ctx(coeffs: &[f64], j: usize, r: f64) -> LiouvilleContext {
        let v: Vec<Complex64> = coeffs.iter().map(|&x| c(x, 0.0)).collect();
        LiouvilleContext::new(validate(&v).unwrap().normalize(), j, r).unwrap()
    }

    #[test]
    fn airy_forward_closed_form() {
        let cx = ctx(&[0.0, 1.0], 0, 1.0);
        let ev = cx.forward(c(4.0, 0.0)).unwrap();
        let want = (2.0 / 3.0) * (8.0 - 2f64.powf(1.5));
        assert!((ev.zeta - c(want, 0.0)).norm() < 1e-12);
        assert!((ev.zeta.re - 3.44772).abs() < 1e-5);
        assert_eq!(cx.forward(cx.z0).unwrap().zeta, c(0.0, 0.0));
    }

    #[test]
    fn airy_series_k() {
        let cx = ctx(&[0.0, 1.0], 0, 1.0);
        let ev = cx.series(c(100.0, 0.0), 7).unwrap();
        assert!((ev.k - c(-0.02f64.powf(1.5), 0.0)).norm() < 1e-15);
        assert!((ev.k.re + 0.00282843).abs() < 1e-8);
    }

    #[test]
    fn z2_minus_2_coefficients() {
        let cx = ctx(&[-2.0, 0.0, 1.0], 0, 10.0);
        let s = cx.series_expansion();
        assert_eq!(s.log_index, Some(2));
        assert!((s.c[2] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!(s.c[1].norm() == 0.0);
        assert!((s.alpha[1] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn pure_power_has_no_corrections() {
        for n in 1..6 {
            let mut v = vec![0.0; n + 1];
            v[n] = 1.0;
            let cx = ctx(&v, 0, 1.0);
            let s = cx.series_expansion();
            assert!(s.c.iter().skip(1).all(|x| x.norm() == 0.0));
            let z = c(50.0, 3.0);
            let k = cx.series(z, n + 6).unwrap().k;
            let want = -(cx.u_of(cx.z0) / cx.u_of(z));
            assert!((k - want).norm() < 1e-14);
        }
    }

    #[test]
    fn forward_matches_series() {
        let cx = ctx(&[-2.0, 0.0, 1.0], 0, 2.0);
        let z = c(20.0, 0.0);
        let a = cx.forward(z).unwrap().zeta;
        let b = cx.series(z, 8).unwrap().zeta;
        assert!((a - b).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn perturbation_examples() {
        let cx = ctx(&[0.0, 1.0], 0, 1.0);
        let z = c(7.0, 2.0);
        let t = cx.perturbation_t(z).unwrap();
        assert!((t - (-5.0 / 16.0) * z.powi(-3)).norm() < 1e-14 * t.norm());
        for n in 1..6usize {
            let mut v = vec![0.0; n + 1];
            v[n] = 1.0;
            let cx = ctx(&v, 0, 1.0);
            let t = cx.perturbation_t(z).unwrap();
            let nn = n as f64;
            let want = z.powi(-(n as i32) - 2) * (-(nn / 16.0) * (nn + 4.0));
            assert!((t - want).norm() < 1e-13 * want.norm());
        }
    }

    #[test]
    fn inverse_closed_form() {
        let cx = ctx(&[0.0, 1.0], 0, 1.0);
        let zeta = c((2.0 / 3.0) * (8.0 - 2f64.powf(1.5)), 0.0);
        let z = cx.inverse_unchecked(zeta).unwrap();
        assert!((z - c(4.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn a_squared_is_q() {
        let cx = ctx(&[1.0, 1.0, 0.0, 1.0], 1, 5.0);
        let z = Complex64::from_polar(30.0, cx.psi_j + 0.4);
        let q = cx.q_of(z);
        assert!((cx.a_of(z).powi(2) - q).norm() < 1e-13 * q.norm());
        assert!((cx.b_of(z).powi(4) - q).norm() < 1e-13 * q.norm());
    }

    #[test]
    fn cut_crossing() {
        assert!(crosses_ray(c(-1.0, 1.0), c(-1.0, -1.0), PI));
        assert!(!crosses_ray(c(1.0, 1.0), c(1.0, -1.0), PI));
        assert!(!crosses_ray(c(-1.0, 1.0), c(-2.0, 3.0), PI));
    }
}
