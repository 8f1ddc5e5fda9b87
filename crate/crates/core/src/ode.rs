//! Taylor-series integration of f'' + P(z) f = 0 along complex polylines.
//!
//! Each step expands f about the current point using the exact Taylor
//! coefficients of P there; the recurrence is
//! (k+2)(k+1) a_{k+2} = -sum_m P_m a_{k-m}.
//! The state is kept unit-sized with an accumulated log scale, so paths
//! into blow-up regions never overflow.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{AtlasError, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub z: Complex64,
    pub f: Complex64,
    pub fp: Complex64,
}

impl OdeState {
    pub fn new(z: Complex64, f: Complex64, fp: Complex64) -> Self {
        OdeState { z, f, fp }
    }

    pub fn size(&self) -> f64 {
        self.f.norm() + self.fp.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.f.re.is_finite() && self.f.im.is_finite() && self.fp.re.is_finite() && self.fp.im.is_finite()
    }
}

/// A state whose true value is `state * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledState {
    pub state: OdeState,
    pub log_scale: f64,
}

impl ScaledState {
    pub fn new(state: OdeState) -> Self {
        ScaledState { state, log_scale: 0.0 }
    }

    pub fn z(&self) -> Complex64 {
        self.state.z
    }

    pub fn log_abs_f(&self) -> f64 {
        self.state.f.norm().ln() + self.log_scale
    }

    pub fn log_abs_fp(&self) -> f64 {
        self.state.fp.norm().ln() + self.log_scale
    }

    /// Unscaled state; may overflow for large log scales.
    pub fn unscaled(&self) -> OdeState {
        let s = self.log_scale.exp();
        OdeState::new(self.state.z, self.state.f * s, self.state.fp * s)
    }

    fn renormalize(&mut self, limit: f64) {
        let s = self.state.size();
        if s > 0.0 && (s > limit || s < 1.0 / limit) {
            self.state.f /= s;
            self.state.fp /= s;
            self.log_scale += s.ln();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub h: Complex64,
    /// Estimated truncation error relative to |f| + |f'| |h|.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub polyline: Vec<Complex64>,
    pub samples: Vec<OdeState>,
    pub log_scale: Vec<f64>,
    pub steps: usize,
    pub max_step: f64,
    pub max_local_err: f64,
    pub truncated: bool,
}

impl PathSolution {
    pub fn last(&self) -> ScaledState {
        ScaledState {
            state: *self.samples.last().expect("path has samples"),
            log_scale: *self.log_scale.last().expect("path has samples"),
        }
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone, Default)]
pub struct StepWork {
    pm: Vec<Complex64>,
    a: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Integrator {
    poly: Poly,
    order: usize,
    term_tol: f64,
    rescale_at: f64,
}

impl Integrator {
    pub fn new(poly: Poly) -> Self {
        Self::with_tolerances(poly, &Tolerances::default())
    }

    pub fn with_tolerances(poly: Poly, tol: &Tolerances) -> Self {
        Integrator {
            poly,
            order: 30,
            term_tol: tol.taylor_term,
            rescale_at: tol.rescale_at,
        }
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    /// Taylor coefficients a_0..=a_order of the solution about `s.z`.
    fn coefficients(&self, s: &OdeState, order: usize, pm: &mut Vec<Complex64>, a: &mut Vec<Complex64>) {
        self.poly.taylor_at_into(s.z, pm);
        a.clear();
        a.push(s.f);
        a.push(s.fp);
        for k in 0..order.saturating_sub(1) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, p) in pm.iter().enumerate().take(k + 1) {
                acc += p * a[k - m];
            }
            a.push(-acc / ((k + 2) * (k + 1)) as f64);
        }
    }

    /// Largest |h| for which the last retained terms stay below tolerance.
    fn step_bound(&self, a: &[Complex64]) -> f64 {
        let size = a[0].norm() + a[1].norm();
        if size == 0.0 {
            return f64::INFINITY;
        }
        let n = a.len() - 1;
        // the recurrence can leave gaps of period deg + 2 in the coefficients
        let span = (self.poly.degree() + 2).min(n);
        let mut h = f64::INFINITY;
        for k in n + 1 - span..=n {
            let ak = a[k].norm();
            if ak > 0.0 {
                h = h.min((self.term_tol * size / ak).powf(1.0 / k as f64));
            }
        }
        h
    }

    fn sum(a: &[Complex64], h: Complex64) -> (Complex64, Complex64) {
        let mut f = Complex64::new(0.0, 0.0);
        let mut fp = Complex64::new(0.0, 0.0);
        for k in (0..a.len()).rev() {
            f = f * h + a[k];
            if k > 0 {
                fp = fp * h + a[k] * k as f64;
            }
        }
        (f, fp)
    }

    /// A single Taylor step of size `h`; errors if `h` exceeds the bound.
    pub fn taylor_step(&self, s: &OdeState, h: Complex64) -> Result<OdeState> {
        let mut pm = Vec::new();
        let mut a = Vec::new();
        let mut order = self.order;
        loop {
            self.coefficients(s, order, &mut pm, &mut a);
            if h.norm() <= self.step_bound(&a) * 1.000001 {
                break;
            }
            if order >= 120 {
                return Err(AtlasError::numeric("step exceeds Taylor bound", h.norm()));
            }
            order += 30;
        }
        let (f, fp) = Self::sum(&a, h);
        let out = OdeState::new(s.z + h, f, fp);
        if !out.is_finite() {
            return Err(AtlasError::numeric("non-finite Taylor step", f64::INFINITY));
        }
        Ok(out)
    }

    /// One step toward `target` of length at most `max_h`; returns true once
    /// `target` is reached.
    pub fn step_toward(&self, st: &mut ScaledState, target: Complex64, max_h: f64, work: &mut StepWork) -> Result<(bool, StepInfo)> {
        let rem = target - st.state.z;
        let dist = rem.norm();
        if dist == 0.0 {
            return Ok((true, StepInfo { h: rem, err: 0.0 }));
        }
        self.coefficients(&st.state, self.order, &mut work.pm, &mut work.a);
        let a = &work.a;
        let bound = self.step_bound(a).min(max_h);
        let (h, last) = if bound >= dist { (rem, true) } else { (rem * (bound / dist), false) };
        let (f, fp) = Self::sum(a, h);
        let hn = h.norm();
        let n = a.len() - 1;
        let size = st.state.size();
        let err = if size > 0.0 {
            (a[n].norm() * hn.powi(n as i32)) / (st.state.f.norm() + st.state.fp.norm() * hn).max(1e-300)
        } else {
            0.0
        };
        st.state = OdeState::new(if last { target } else { st.state.z + h }, f, fp);
        if !st.state.is_finite() {
            return Err(AtlasError::numeric("non-finite state", f64::INFINITY));
        }
        st.renormalize(self.rescale_at);
        Ok((last, StepInfo { h, err }))
    }

    /// Advance along the segment to `target`, calling `visit` after each step.
    /// `max_h` caps the step length.
    pub fn advance<V: FnMut(&ScaledState, &StepInfo)>(
        &self,
        st: &mut ScaledState,
        target: Complex64,
        max_h: f64,
        mut visit: V,
    ) -> Result<()> {
        let mut work = StepWork::default();
        loop {
            let (done, info) = self.step_toward(st, target, max_h, &mut work)?;
            if info.h.norm() > 0.0 {
                visit(st, &info);
            }
            if done {
                return Ok(());
            }
        }
    }

    /// Integrate along `polyline` recording samples every 1/samples_per_unit
    /// of arc length (vertices always recorded; 0 records vertices only).
    pub fn integrate_path(&self, init: &OdeState, polyline: &[Complex64], samples_per_unit: f64) -> Result<PathSolution> {
        if polyline.is_empty() || (polyline[0] - init.z).norm() > 1e-14 * (1.0 + init.z.norm()) {
            return Err(AtlasError::domain("init.z must equal the first vertex"));
        }
        let mut st = ScaledState::new(OdeState { z: polyline[0], ..*init });
        let mut sol = PathSolution {
            polyline: polyline.to_vec(),
            samples: vec![st.state],
            log_scale: vec![0.0],
            steps: 0,
            max_step: 0.0,
            max_local_err: 0.0,
            truncated: false,
        };
        for w in polyline.windows(2) {
            let len = (w[1] - w[0]).norm();
            let pieces = if samples_per_unit > 0.0 {
                (len * samples_per_unit).ceil().max(1.0) as usize
            } else {
                1
            };
            for i in 1..=pieces {
                let t = i as f64 / pieces as f64;
                let target = if i == pieces { w[1] } else { w[0] + (w[1] - w[0]) * t };
                let res = self.advance(&mut st, target, f64::INFINITY, |_, info| {
                    sol.steps += 1;
                    sol.max_step = sol.max_step.max(info.h.norm());
                    sol.max_local_err = sol.max_local_err.max(info.err);
                });
                if res.is_err() {
                    sol.truncated = true;
                    return Ok(sol);
                }
                sol.samples.push(st.state);
                sol.log_scale.push(st.log_scale);
            }
        }
        Ok(sol)
    }

    /// Scaled state at `target` reached along the straight segment.
    pub fn solve_to(&self, st: &ScaledState, target: Complex64) -> Result<ScaledState> {
        let mut s = *st;
        self.advance(&mut s, target, f64::INFINITY, |_, _| {})?;
        Ok(s)
    }

    pub fn solve_along(&self, st: &ScaledState, path: &[Complex64]) -> Result<ScaledState> {
        let mut s = *st;
        for &p in path {
            self.advance(&mut s, p, f64::INFINITY, |_, _| {})?;
        }
        Ok(s)
    }

    /// log|f| and log|f'| along the ray arg z = theta from init.z to r_max.
    pub fn ray_profile(&self, theta: f64, r_max: f64, init: &OdeState, samples: usize) -> Result<RayProfile> {
        let r_min = init.z.norm();
        if !(r_max > r_min) || r_min <= 0.0 {
            return Err(AtlasError::domain("ray_profile needs r_max > r_min > 0"));
        }
        let dir = Complex64::from_polar(1.0, theta);
        let mut st = ScaledState::new(*init);
        let trivial = init.f.norm() == 0.0 && init.fp.norm() == 0.0;
        let mut points = Vec::with_capacity(samples + 1);
        let push = |st: &ScaledState, points: &mut Vec<ProfilePoint>| {
            points.push(ProfilePoint {
                r: st.state.z.norm(),
                log_f: st.log_abs_f(),
                log_fp: st.log_abs_fp(),
            })
        };
        push(&st, &mut points);
        let samples = samples.max(1);
        for i in 1..=samples {
            let r = r_min + (r_max - r_min) * i as f64 / samples as f64;
            self.advance(&mut st, dir * r, f64::INFINITY, |_, _| {})?;
            push(&st, &mut points);
        }
        Ok(RayProfile { theta, points, trivial })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub log_f: f64,
    pub log_fp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    pub theta: f64,
    pub points: Vec<ProfilePoint>,
    /// f identically zero: every log|f| is -inf.
    pub trivial: bool,
}

pub fn wronskian(s1: &OdeState, s2: &OdeState) -> Result<Complex64> {
    if s1.z != s2.z {
        return Err(AtlasError::domain("wronskian of states at different points"));
    }
    Ok(s1.f * s2.fp - s1.fp * s2.f)
}

/// Wronskian of two scaled states, returned as (value of unit parts, log scale).
pub fn wronskian_scaled(s1: &ScaledState, s2: &ScaledState) -> Result<(Complex64, f64)> {
    Ok((wronskian(&s1.state, &s2.state)?, s1.log_scale + s2.log_scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn airy_integrator() -> Integrator {
        Integrator::new(Poly::new(vec![c(0.0, 0.0), c(1.0, 0.0)]))
    }

    /// Independent oracle: sum the power series of the solution with
    /// f(0)=1, f'(0)=0 for f'' + z f = 0 directly from a_{k+3} = -a_k/((k+3)(k+2)).
    fn airy_cos_series(x: f64) -> f64 {
        let mut a = 1.0;
        let mut sum = 1.0;
        let mut k = 0;
        while k < 200 {
            a = -a / (((k + 3) * (k + 2)) as f64);
            k += 3;
            sum += a * x.powi(k);
        }
        sum
    }

    #[test]
    fn recurrence_coefficients() {
        let it = airy_integrator();
        let mut pm = Vec::new();
        let mut a = Vec::new();
        it.coefficients(&OdeState::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)), 12, &mut pm, &mut a);
        assert!((a[3] - c(-1.0 / 6.0, 0.0)).norm() < 1e-16);
        assert!((a[6] - c(1.0 / 180.0, 0.0)).norm() < 1e-17);
        assert!((a[9] - c(-1.0 / 12960.0, 0.0)).norm() < 1e-18);
    }

    #[test]
    fn airy_value_at_one() {
        let it = airy_integrator();
        let s0 = OdeState::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let s1 = it.taylor_step(&s0, c(1.0, 0.0)).unwrap();
        assert!((s1.f.re - airy_cos_series(1.0)).abs() < 1e-14);
        assert!((s1.f.re - 0.8388123).abs() < 1e-7);
        let path = it.integrate_path(&s0, &[c(0.0, 0.0), c(1.0, 0.0)], 4.0).unwrap();
        assert!((path.last().unscaled().f.re - airy_cos_series(1.0)).abs() < 1e-14);
    }

    #[test]
    fn trivial_solution_stays_zero() {
        let it = airy_integrator();
        let s0 = OdeState::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let p = it.integrate_path(&s0, &[c(0.0, 0.0), c(3.0, 2.0)], 1.0).unwrap();
        assert!(p.samples.iter().all(|s| s.f.norm() == 0.0 && s.fp.norm() == 0.0));
        let prof = it.ray_profile(0.3, 5.0, &OdeState::new(c(1e-3, 0.0), c(0.0, 0.0), c(0.0, 0.0)), 10);
        assert!(prof.unwrap().trivial);
    }

    #[test]
    fn step_back_and_forth() {
        let it = Integrator::new(Poly::new(vec![c(1.0, 0.5), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]));
        let s0 = OdeState::new(c(0.3, -0.2), c(0.7, 0.1), c(-0.4, 1.0));
        let h = c(0.05, 0.03);
        let s1 = it.taylor_step(&s0, h).unwrap();
        let s2 = it.taylor_step(&s1, -h).unwrap();
        assert!((s2.f - s0.f).norm() < 1e-12 * s0.size());
        assert!((s2.fp - s0.fp).norm() < 1e-12 * s0.size());
    }

    #[test]
    fn wronskian_examples() {
        let z = c(1.0, 1.0);
        let a = OdeState::new(z, c(1.0, 0.0), c(0.0, 0.0));
        let b = OdeState::new(z, c(0.0, 0.0), c(1.0, 0.0));
        assert_eq!(wronskian(&a, &a).unwrap(), c(0.0, 0.0));
        assert_eq!(wronskian(&a, &b).unwrap(), c(1.0, 0.0));
        assert!(wronskian(&a, &OdeState::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))).is_err());
    }

    #[test]
    fn rescaling_keeps_log_magnitude() {
        let it = airy_integrator();
        let s0 = OdeState::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        // f'' = x f on the negative axis grows like exp((2/3)|x|^{3/2})
        let p = it.integrate_path(&s0, &[c(0.0, 0.0), c(-400.0, 0.0)], 0.0).unwrap();
        let last = p.last();
        assert!(!p.truncated);
        let expected = (2.0 / 3.0) * 400f64.powf(1.5);
        assert!((last.log_abs_f() - expected).abs() < 0.05 * expected);
        assert!(last.state.size() < 1e101);
    }
}
