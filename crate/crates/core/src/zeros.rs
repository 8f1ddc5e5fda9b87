//! Zeros of solutions: winding numbers, boxes laid along the critical
//! translates, counting functions, growth classification of rays and the
//! squares of the perturbed sine equation.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::equation::{
    dist_to_translate, e_n, lambda_membership, nearest_critical, principal_arg, DerivedConstants, EquationSpec,
    NormalizedEquation,
};
use crate::error::{AtlasError, Result};
use crate::liouville::LiouvilleContext;
use crate::ode::{Integrator, OdeState, ScaledState, StepWork};
use crate::poly::Poly;
use crate::quad::gauss_legendre_on;
use crate::volterra::{oscillatory_decompose, Base, PerturbationField};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

pub const BOUNDARY_TOO_CLOSE: &str = "boundary too close to zero";

/// Phase budget per Taylor step; steps with |d arg| >= pi/2 are redone.
const PHASE_BUDGET: f64 = 0.8;

fn boundary_error(rate: f64) -> AtlasError {
    AtlasError::numeric(BOUNDARY_TOO_CLOSE, rate)
}

pub fn is_boundary_error(e: &AtlasError) -> bool {
    matches!(e, AtlasError::Numeric { msg, .. } if msg == BOUNDARY_TOO_CLOSE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: C,
    pub hi: C,
}

impl Rect {
    pub fn new(a: C, b: C) -> Rect {
        Rect {
            lo: C::new(a.re.min(b.re), a.im.min(b.im)),
            hi: C::new(a.re.max(b.re), a.im.max(b.im)),
        }
    }

    pub fn around(center: C, half: f64) -> Rect {
        Rect::new(center - C::new(half, half), center + C::new(half, half))
    }

    /// Counterclockwise from the lower-left corner.
    pub fn corners(&self) -> [C; 4] {
        [self.lo, C::new(self.hi.re, self.lo.im), self.hi, C::new(self.lo.re, self.hi.im)]
    }

    pub fn size(&self) -> f64 {
        (self.hi.re - self.lo.re).max(self.hi.im - self.lo.im)
    }

    pub fn center(&self) -> C {
        (self.lo + self.hi) * 0.5
    }

    pub fn contains(&self, z: C) -> bool {
        z.re >= self.lo.re && z.re <= self.hi.re && z.im >= self.lo.im && z.im <= self.hi.im
    }

    pub fn shifted(&self, d: C) -> Rect {
        Rect { lo: self.lo + d, hi: self.hi + d }
    }

    fn bounding(points: &[C]) -> Rect {
        let mut lo = C::new(f64::INFINITY, f64::INFINITY);
        let mut hi = C::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = C::new(lo.re.min(p.re), lo.im.min(p.im));
            hi = C::new(hi.re.max(p.re), hi.im.max(p.im));
        }
        Rect { lo, hi }
    }
}

/// A solution of f'' + P f = 0 fixed by its state at one point, together
/// with the normalized equation g'' + Q g = 0, g(w) = f(mu w - c).
#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub spec: EquationSpec,
    pub dc: DerivedConstants,
    pub ne: NormalizedEquation,
    pub init: OdeState,
    pub tol: Tolerances,
    pz: Integrator,
    qz: Integrator,
}

impl GlobalSolution {
    pub fn new(spec: &EquationSpec, init: OdeState) -> Result<Self> {
        Self::with_tolerances(spec, init, Tolerances::default())
    }

    pub fn with_tolerances(spec: &EquationSpec, init: OdeState, tol: Tolerances) -> Result<Self> {
        if init.f.norm() == 0.0 && init.fp.norm() == 0.0 {
            return Err(AtlasError::validation("trivial solution: f = f' = 0"));
        }
        if !init.is_finite() {
            return Err(AtlasError::validation("initial state must be finite"));
        }
        let ne = spec.normalize();
        Ok(GlobalSolution {
            dc: spec.derive_constants(),
            pz: Integrator::with_tolerances(spec.poly(), &tol),
            qz: Integrator::with_tolerances(ne.q_poly(), &tol),
            ne,
            spec: spec.clone(),
            init,
            tol,
        })
    }

    pub fn to_hat(&self, z: C) -> C {
        (z + self.dc.c) / self.dc.mu
    }

    pub fn from_hat(&self, w: C) -> C {
        self.dc.mu * w - self.dc.c
    }

    /// Initial state of g in the normalized plane.
    pub fn hat_init(&self) -> ScaledState {
        ScaledState::new(OdeState::new(self.to_hat(self.init.z), self.init.f, self.init.fp * self.dc.mu))
    }

    pub fn integrator(&self) -> &Integrator {
        &self.pz
    }

    pub fn hat_integrator(&self) -> &Integrator {
        &self.qz
    }

    /// f at z along the straight path from the initial point.
    pub fn state_at(&self, z: C) -> Result<ScaledState> {
        self.pz.solve_to(&ScaledState::new(self.init), z)
    }
}

/// Continuous change of arg f along the segment to `target`.
pub fn phase_walk(ig: &Integrator, st: &mut ScaledState, target: C, work: &mut StepWork) -> Result<f64> {
    let scale = (target - st.z()).norm().max(1e-300);
    let mut total = 0.0;
    let mut factor = 1.0;
    loop {
        let f = st.state.f;
        if f.norm() == 0.0 {
            return Err(boundary_error(f64::INFINITY));
        }
        let rate = (st.state.fp / f).norm();
        let cap = PHASE_BUDGET * factor / rate.max(1e-300);
        if cap < 1e-12 * scale {
            return Err(boundary_error(rate));
        }
        let old = *st;
        let (done, _) = ig.step_toward(st, target, cap, work)?;
        let nf = st.state.f;
        let d = if nf.norm() == 0.0 { PI } else { (nf / f).arg() };
        if d.abs() >= FRAC_PI_2 {
            *st = old;
            factor *= 0.25;
            if factor < 1e-10 {
                return Err(boundary_error(rate));
            }
            continue;
        }
        total += d;
        factor = (factor * 2.0).min(1.0);
        if done {
            return Ok(total);
        }
    }
}

fn round_winding(total: f64) -> Result<i64> {
    let w = total / TAU;
    let k = w.round();
    if (w - k).abs() > 0.05 {
        return Err(AtlasError::numeric("winding number not integral", (w - k).abs()));
    }
    Ok(k as i64)
}

const JITTER: [(f64, f64); 6] = [(0.0, 0.0), (1.0, 0.37), (-0.61, 1.0), (0.29, -1.0), (-1.0, -0.53), (0.83, 0.71)];

/// Winding number of f around `rect` (z-plane), with boundary jitter.
pub fn winding_number(sol: &GlobalSolution, rect: &Rect, edge_samples: usize) -> Result<i64> {
    let mut last = None;
    for &(a, b) in JITTER.iter().take(sol.tol.jitter_retries.min(JITTER.len() - 1) + 1) {
        let r = rect.shifted(C::new(a, b) * (sol.tol.jitter * rect.size()));
        match winding_once(sol, &r, edge_samples) {
            Ok(w) => return Ok(w),
            Err(e) if is_boundary_error(&e) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| boundary_error(0.0)))
}

fn winding_once(sol: &GlobalSolution, r: &Rect, edge_samples: usize) -> Result<i64> {
    let corners = r.corners();
    let mut st = sol.state_at(corners[0])?;
    let mut work = StepWork::default();
    let n = edge_samples.max(1);
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        for s in 1..=n {
            total += phase_walk(&sol.pz, &mut st, a + (b - a) * (s as f64 / n as f64), &mut work)?;
        }
    }
    round_winding(total)
}

/// Winding number of an analytic function given as z -> (f, f').
pub fn winding_analytic<F: Fn(C) -> (C, C)>(f: F, rect: &Rect, edge_samples: usize) -> Result<i64> {
    let corners = rect.corners();
    let n = edge_samples.max(1);
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        for s in 0..n {
            let p = a + (b - a) * (s as f64 / n as f64);
            let q = a + (b - a) * ((s + 1) as f64 / n as f64);
            total += phase_segment(&f, p, q, 0)?;
        }
    }
    round_winding(total)
}

fn phase_segment<F: Fn(C) -> (C, C)>(f: &F, a: C, b: C, depth: usize) -> Result<f64> {
    let (fa, da) = f(a);
    let (fb, db) = f(b);
    if fa.norm() == 0.0 || fb.norm() == 0.0 {
        return Err(boundary_error(f64::INFINITY));
    }
    let est = (da / fa).norm().max((db / fb).norm()) * (b - a).norm();
    let d = (fb / fa).arg();
    if est < PHASE_BUDGET && d.abs() < FRAC_PI_2 {
        return Ok(d);
    }
    if depth > 50 {
        return Err(boundary_error(est));
    }
    let m = (a + b) * 0.5;
    Ok(phase_segment(f, a, m, depth + 1)? + phase_segment(f, m, b, depth + 1)?)
}

fn point_in_polygon(p: C, poly: &[C]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) * (b.re - a.re) / (b.im - a.im);
            if p.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Settings for the bands of boxes laid along each critical translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateOptions {
    pub max_depth: usize,
    /// C of Lambda_{j,c}.
    pub c_lambda: f64,
    /// R of Lambda_{j,c} in the z-plane; defaults to |mu| R_min.
    pub r_lambda: Option<f64>,
    /// Half-height of the band in zeta.
    pub half_height: f64,
    /// Spacing of the rungs in Re zeta.
    pub du: f64,
    /// Bands are centred on Im zeta = y0 only for |y0| below this.
    pub y_max: f64,
}

impl Default for LocateOptions {
    fn default() -> Self {
        LocateOptions {
            max_depth: 40,
            c_lambda: 10.0,
            r_lambda: None,
            half_height: 3.0,
            du: 1.0,
            y_max: 8.0,
        }
    }
}

/// Annular region |z + c| in [r_lo, r_hi], optionally restricted to some
/// critical translates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub r_lo: f64,
    pub r_hi: f64,
    pub sectors: Option<Vec<usize>>,
}

impl Region {
    pub fn new(r_lo: f64, r_hi: f64) -> Result<Region> {
        if !(r_lo >= 0.0 && r_hi > r_lo && r_hi.is_finite()) {
            return Err(AtlasError::validation("region needs 0 <= r_lo < r_hi < inf"));
        }
        Ok(Region { r_lo, r_hi, sectors: None })
    }
}

/// A band of boxes in the chart of one critical direction. Rungs are
/// vertical segments Re zeta = u_i; consecutive rungs bound a box.
struct Ladder {
    j: usize,
    orient: f64,
    y0: Option<f64>,
    y_c: f64,
    center: Vec<ScaledState>,
    center_logw: Vec<f64>,
    /// center -> top, without the centre point
    rung_top: Vec<Vec<C>>,
    rung_bot: Vec<Vec<C>>,
    up: Vec<Option<f64>>,
    down: Vec<Option<f64>>,
    top_pts: Vec<C>,
    bot_pts: Vec<C>,
    /// prefix sums of the phase increments along bottom minus top
    prefix: Vec<f64>,
}

struct Chart<'a> {
    ctx: &'a LiouvilleContext,
    orient: f64,
}

impl Chart<'_> {
    fn zeta(&self, u: f64, v: f64) -> C {
        C::new(self.orient * u, v)
    }

    /// Inverse images of `targets` by continuation from (z, L(z)).
    fn trace(&self, start: (C, C), targets: &[C]) -> Result<Vec<(C, C)>> {
        let mut cur = start;
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            let s = cur.1;
            let pieces = ((t - s).norm() / 1.0).ceil().max(1.0) as usize;
            for k in 1..=pieces {
                let tk = s + (t - s) * (k as f64 / pieces as f64);
                cur = self.ctx.inverse_from(cur.0, cur.1, tk)?;
            }
            out.push(cur);
        }
        Ok(out)
    }

    fn log_w(&self, st: &ScaledState) -> f64 {
        st.log_abs_f() + self.ctx.b_of(st.z()).norm().ln()
    }

    /// (c1, c2) with w = c1 e^{i zeta} + c2 e^{-i zeta} to leading order.
    fn decompose(&self, st: &ScaledState, zeta: C) -> (C, C) {
        let z = st.z();
        let (g, gp) = (st.state.f, st.state.fp);
        let a = self.ctx.a_of(z);
        let b = self.ctx.b_of(z);
        let w = b * g;
        let wz = b * (self.ctx.b_log_derivative(z) * g + gp) / a;
        ((w - I * wz) * (-I * zeta).exp() * 0.5, (w + I * wz) * (I * zeta).exp() * 0.5)
    }
}

impl Ladder {
    fn build(sol: &GlobalSolution, ctx: &LiouvilleContext, opts: &LocateOptions, r_hat_stop: f64) -> Result<Ladder> {
        let mut last = None;
        for k in 0..=sol.tol.jitter_retries {
            let mut o = opts.clone();
            o.half_height *= 1.0 + 0.0137 * k as f64;
            match Self::build_once(sol, ctx, &o, r_hat_stop) {
                Ok(l) => return Ok(l),
                Err(e) if is_boundary_error(&e) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| boundary_error(0.0)))
    }

    fn build_once(sol: &GlobalSolution, ctx: &LiouvilleContext, opts: &LocateOptions, r_hat_stop: f64) -> Result<Ladder> {
        let j = ctx.j;
        let orient = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        let chart = Chart { ctx, orient };
        let qz = &sol.qz;
        let du = opts.du;

        // axis Im zeta = 0 out to the stopping radius
        let start = (ctx.z0, C::new(0.0, 0.0));
        let st0 = qz.solve_to(&sol.hat_init(), ctx.z0)?;
        let mut axis = vec![start];
        let mut axis_st = vec![st0];
        while axis.last().unwrap().0.norm() < r_hat_stop || axis.len() < 3 {
            let k = axis.len();
            let p = chart.trace(*axis.last().unwrap(), &[chart.zeta(k as f64 * du, 0.0)])?[0];
            let s = qz.solve_to(axis_st.last().unwrap(), p.0)?;
            axis.push(p);
            axis_st.push(s);
        }
        let (c1, c2) = chart.decompose(axis_st.last().unwrap(), axis.last().unwrap().1);
        let y0 = oscillatory_decompose(c1, c2).ok().map(|(_, z0)| z0.im).filter(|y| y.is_finite());
        let y_c = match y0 {
            Some(y) if y.abs() <= opts.y_max && y.abs() >= 1.0 => y,
            _ => 0.0,
        };

        let (centers, center_st, u) = if y_c == 0.0 {
            let u: Vec<f64> = (0..axis.len()).map(|k| k as f64 * du).collect();
            (axis, axis_st, u)
        } else {
            let u_a = 3.0 * y_c.abs();
            let apex = chart.trace(start, &[chart.zeta(u_a, y_c)])?[0];
            let mut st = qz.solve_to(&st0, apex.0)?;
            let mut cs = vec![apex];
            let mut ss = vec![st];
            let mut u = vec![u_a];
            while cs.last().unwrap().0.norm() < r_hat_stop || cs.len() < 3 {
                let uk = u_a + cs.len() as f64 * du;
                let p = chart.trace(*cs.last().unwrap(), &[chart.zeta(uk, y_c)])?[0];
                st = qz.solve_to(&st, p.0)?;
                cs.push(p);
                ss.push(st);
                u.push(uk);
            }
            (cs, ss, u)
        };
        let n = centers.len();
        let h = opts.half_height;
        let hw: Vec<f64> = u.iter().map(|&x| ((x - u[0]) / 3.0).min(h)).collect();

        // top and bottom lines
        let side = |sign: f64| -> Result<(Vec<C>, Vec<f64>)> {
            let targets: Vec<C> = (1..n).map(|i| chart.zeta(u[i], y_c + sign * hw[i])).collect();
            let pts = chart.trace(centers[0], &targets)?;
            let mut zs = vec![centers[0].0];
            zs.extend(pts.iter().map(|p| p.0));
            let mut st = center_st[0];
            let mut work = StepWork::default();
            let mut inc = Vec::with_capacity(n - 1);
            for z in &zs[1..] {
                inc.push(phase_walk(qz, &mut st, *z, &mut work)?);
            }
            Ok((zs, inc))
        };
        let (top_pts, inc_top) = side(1.0)?;
        let (bot_pts, inc_bot) = side(-1.0)?;

        // rungs
        let rungs: Vec<(Vec<C>, Option<f64>, Vec<C>, Option<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let one = |sign: f64, end: C| -> (Vec<C>, Option<f64>) {
                    if hw[i] == 0.0 {
                        return (vec![end], Some(0.0));
                    }
                    let m = (hw[i] / 1.0).ceil().max(1.0) as usize;
                    let targets: Vec<C> =
                        (1..m).map(|k| chart.zeta(u[i], y_c + sign * hw[i] * k as f64 / m as f64)).collect();
                    let mut pts: Vec<C> = match chart.trace(centers[i], &targets) {
                        Ok(v) => v.into_iter().map(|p| p.0).collect(),
                        Err(_) => return (vec![end], None),
                    };
                    pts.push(end);
                    let mut st = center_st[i];
                    let mut work = StepWork::default();
                    let mut total = 0.0;
                    for p in &pts {
                        match phase_walk(qz, &mut st, *p, &mut work) {
                            Ok(d) => total += d,
                            Err(_) => return (pts, None),
                        }
                    }
                    (pts, Some(total))
                };
                let (t, up) = one(1.0, top_pts[i]);
                let (b, down) = one(-1.0, bot_pts[i]);
                (t, up, b, down)
            })
            .collect();
        let mut prefix = vec![0.0; n];
        for i in 1..n {
            prefix[i] = prefix[i - 1] + inc_bot[i - 1] - inc_top[i - 1];
        }
        let center_logw = center_st.iter().map(|s| chart.log_w(s)).collect();
        let mut lad = Ladder {
            j,
            orient,
            y0,
            y_c,
            center: center_st,
            center_logw,
            rung_top: Vec::with_capacity(n),
            rung_bot: Vec::with_capacity(n),
            up: Vec::with_capacity(n),
            down: Vec::with_capacity(n),
            top_pts,
            bot_pts,
            prefix,
        };
        for (t, up, b, down) in rungs {
            lad.rung_top.push(t);
            lad.up.push(up);
            lad.rung_bot.push(b);
            lad.down.push(down);
        }
        Ok(lad)
    }

    fn len(&self) -> usize {
        self.center.len()
    }

    fn valid(&self, i: usize) -> bool {
        self.up[i].is_some() && self.down[i].is_some()
    }

    /// Number of zeros between rungs i1 < i2.
    fn winding(&self, i1: usize, i2: usize) -> Result<i64> {
        let (u1, d1) = (self.up[i1], self.down[i1]);
        let (u2, d2) = (self.up[i2], self.down[i2]);
        match (u1, d1, u2, d2) {
            (Some(u1), Some(d1), Some(u2), Some(d2)) => {
                let total = self.prefix[i2] - self.prefix[i1] + (u2 - d2) - (u1 - d1);
                round_winding(self.orient * total)
            }
            _ => Err(boundary_error(0.0)),
        }
    }

    /// Last valid rung whose centre has |z| <= r (z-plane), or None.
    fn rung_within(&self, sol: &GlobalSolution, r: f64) -> Option<usize> {
        (0..self.len()).rfind(|&i| self.valid(i) && sol.from_hat(self.center[i].z()).norm() <= r)
    }

    fn last_valid(&self) -> Option<usize> {
        (0..self.len()).rev().find(|&i| self.valid(i))
    }

    fn polygon(&self, i1: usize, i2: usize) -> Vec<C> {
        let mut poly: Vec<C> = self.bot_pts[i1..=i2].to_vec();
        let rb = &self.rung_bot[i2];
        poly.extend(rb.iter().rev().skip(1));
        poly.push(self.center[i2].z());
        poly.extend(self.rung_top[i2].iter());
        poly.extend(self.top_pts[i1..i2].iter().rev());
        let rt = &self.rung_top[i1];
        poly.extend(rt.iter().rev().skip(1));
        poly.push(self.center[i1].z());
        poly.extend(self.rung_bot[i1][..self.rung_bot[i1].len().saturating_sub(1)].iter());
        poly
    }

    fn split_point(&self, i1: usize, i2: usize) -> Option<usize> {
        let mid = (i1 + i2) / 2;
        let span = ((i2 - i1) / 4).max(1);
        let lo = (mid.saturating_sub(span)).max(i1 + 1);
        let hi = (mid + span).min(i2 - 1);
        (lo..=hi)
            .filter(|&i| self.valid(i))
            .max_by(|&a, &b| {
                let sa = self.center_logw[a] - 0.05 * (a as f64 - mid as f64).abs();
                let sb = self.center_logw[b] - 0.05 * (b as f64 - mid as f64).abs();
                sa.partial_cmp(&sb).unwrap_or(std::cmp::Ordering::Equal)
            })
    }

    fn leaves(&self, i1: usize, i2: usize, depth: usize, max_depth: usize) -> Vec<(usize, usize, i64)> {
        let w = match self.winding(i1, i2) {
            Ok(w) => w,
            Err(_) => return vec![],
        };
        if w <= 0 {
            return vec![];
        }
        if w == 1 || i2 - i1 <= 1 || depth >= max_depth {
            return vec![(i1, i2, w)];
        }
        match self.split_point(i1, i2) {
            Some(m) => {
                let (mut a, b) = rayon::join(
                    || self.leaves(i1, m, depth + 1, max_depth),
                    || self.leaves(m, i2, depth + 1, max_depth),
                );
                a.extend(b);
                a
            }
            None => vec![(i1, i2, w)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub location: C,
    pub winding: i64,
    #[serde(rename = "box")]
    pub rect: Rect,
    pub r: f64,
    pub nearest_j: usize,
    /// Critical direction of the band the zero was found in.
    pub band_j: usize,
    pub dist_to_translate: f64,
    pub in_lambda: bool,
    pub refined: bool,
    /// |f| / (|f'| diam(box)) at the refined location.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub j: usize,
    /// Im zeta of the asymptotic zero line, when it could be estimated.
    pub y0: Option<f64>,
    pub y_center: f64,
    pub total: i64,
    pub rungs: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroAtlas {
    pub zeros: Vec<ZeroRecord>,
    pub bands: Vec<BandSummary>,
    pub region: Region,
    pub c_lambda: f64,
    pub r_lambda: f64,
    /// Smallest C for which every zero beyond r_lambda lies in Lambda_{j,c}.
    pub c_empirical: f64,
}

fn chart_for(sol: &GlobalSolution, j: usize) -> Result<LiouvilleContext> {
    LiouvilleContext::with_tolerances(sol.ne.clone(), j, sol.ne.r_min(), sol.tol.clone())
}

fn refine_leaf(sol: &GlobalSolution, lad: &Ladder, i1: usize, i2: usize, count: i64, opts: &LocateOptions, r_lambda: f64) -> ZeroRecord {
    let poly = lad.polygon(i1, i2);
    let bbox = Rect::bounding(&poly);
    let diam = (bbox.hi - bbox.lo).norm();
    let g = (i1..=i2)
        .min_by(|&a, &b| lad.center_logw[a].partial_cmp(&lad.center_logw[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(i1);
    let mut st = lad.center[g];
    let mut converged = false;
    if count == 1 {
        for _ in 0..60 {
            let d = -st.state.f / st.state.fp;
            if !d.re.is_finite() || !d.im.is_finite() {
                break;
            }
            let d = if d.norm() > 0.5 * diam { d * (0.5 * diam / d.norm()) } else { d };
            let target = st.z() + d;
            st = match sol.qz.solve_to(&st, target) {
                Ok(s) => s,
                Err(_) => break,
            };
            if d.norm() <= 1e-14 * st.z().norm().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    let zh = st.z();
    let residual = st.state.f.norm() / (st.state.fp.norm() * diam).max(1e-300);
    let refined = converged && point_in_polygon(zh, &poly) && residual <= 1e-9;
    let loc_hat = if refined || count == 1 && point_in_polygon(zh, &poly) { zh } else { lad.center[g].z() };
    let z = sol.from_hat(loc_hat);
    let zs: Vec<C> = poly.iter().map(|p| sol.from_hat(*p)).collect();
    let nj = nearest_critical(z, &sol.dc);
    ZeroRecord {
        location: z,
        winding: count,
        rect: Rect::bounding(&zs),
        r: z.norm(),
        nearest_j: nj,
        band_j: lad.j,
        dist_to_translate: dist_to_translate(z, nj, &sol.dc),
        in_lambda: lambda_membership(z, nj, &sol.dc, opts.c_lambda, r_lambda),
        refined,
        residual,
    }
}

pub fn locate_zeros(spec: &EquationSpec, init: OdeState, region: &Region, max_depth: usize) -> Result<ZeroAtlas> {
    let opts = LocateOptions { max_depth, ..LocateOptions::default() };
    let sol = GlobalSolution::new(spec, init)?;
    locate_zeros_with(&sol, region, &opts)
}

pub fn locate_zeros_with(sol: &GlobalSolution, region: &Region, opts: &LocateOptions) -> Result<ZeroAtlas> {
    let np2 = sol.spec.n + 2;
    let sectors: Vec<usize> = match &region.sectors {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&j| j >= np2) {
                return Err(AtlasError::domain(format!("sector index {bad} out of range")));
            }
            s.clone()
        }
        None => (0..np2).collect(),
    };
    let mu = sol.dc.mu.norm();
    let r_lambda = opts.r_lambda.unwrap_or(mu * sol.ne.r_min());
    let r_hat_stop = region.r_hi / mu;
    let results: Vec<(BandSummary, Vec<ZeroRecord>)> = sectors
        .par_iter()
        .map(|&j| {
            let built = chart_for(sol, j).and_then(|ctx| Ladder::build(sol, &ctx, opts, r_hat_stop));
            let lad = match built {
                Ok(l) => l,
                Err(e) => {
                    let b = BandSummary { j, y0: None, y_center: 0.0, total: 0, rungs: 0, error: Some(e.to_string()) };
                    return (b, vec![]);
                }
            };
            let last = lad.last_valid().unwrap_or(0);
            let total = lad.winding(0, last).unwrap_or(0);
            let leaves = if last > 0 { lad.leaves(0, last, 0, opts.max_depth) } else { vec![] };
            let zeros: Vec<ZeroRecord> = leaves
                .par_iter()
                .map(|&(a, b, w)| refine_leaf(sol, &lad, a, b, w, opts, r_lambda))
                .collect();
            let summary = BandSummary {
                j,
                y0: lad.y0,
                y_center: lad.y_c,
                total,
                rungs: lad.len(),
                error: None,
            };
            (summary, zeros)
        })
        .collect();
    let mut bands = Vec::new();
    let mut zeros: Vec<ZeroRecord> = Vec::new();
    for (b, zs) in results {
        bands.push(b);
        for z in zs {
            let rr = (z.location + sol.dc.c).norm();
            if rr < region.r_lo || rr > region.r_hi {
                continue;
            }
            if zeros.iter().any(|o| (o.location - z.location).norm() <= 1e-8 * z.r.max(1.0)) {
                continue;
            }
            zeros.push(z);
        }
    }
    zeros.sort_by(|a, b| {
        (a.r, principal_arg(a.location))
            .partial_cmp(&(b.r, principal_arg(b.location)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let c_empirical = empirical_c(&zeros, &sol.dc, r_lambda);
    Ok(ZeroAtlas {
        zeros,
        bands,
        region: region.clone(),
        c_lambda: opts.c_lambda,
        r_lambda,
        c_empirical,
    })
}

/// max |arg(z + c) - theta_j| / e_n(|z + c|) over zeros beyond r_lambda.
pub fn empirical_c(zeros: &[ZeroRecord], dc: &DerivedConstants, r_lambda: f64) -> f64 {
    zeros
        .iter()
        .filter_map(|z| {
            let w = z.location + dc.c;
            let r = w.norm();
            if r <= r_lambda {
                return None;
            }
            let d = crate::branch::reduce_angle(principal_arg(w) - dc.theta[z.nearest_j]).abs();
            e_n(r, dc.n).ok().map(|e| d / e)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    pub j: usize,
    pub radii: Vec<f64>,
    pub n_of_r: Vec<u64>,
    #[serde(rename = "N_of_r")]
    pub big_n_of_r: Vec<f64>,
    pub predicted_n: Vec<f64>,
    #[serde(rename = "predicted_N")]
    pub predicted_big_n: Vec<f64>,
    pub c_lambda: f64,
    pub r_lambda: f64,
    pub convention: String,
}

pub const N_CONVENTION: &str = "N(r) = int_0^r (n(t) - n(0))/t dt + n(0) log r, summed exactly as sum log(r/|z_k|)";

/// n(r, Lambda_{j,c}, 1/f), N(r) and their predicted asymptotics.
pub fn counting_function(
    zeros: &[ZeroRecord],
    dc: &DerivedConstants,
    j: usize,
    radii: &[f64],
    c_lambda: f64,
    r_lambda: f64,
) -> CountingReport {
    let members: Vec<f64> = zeros
        .iter()
        .filter(|z| lambda_membership(z.location, j, dc, c_lambda, r_lambda))
        .map(|z| z.location.norm())
        .collect();
    let lead = dc.abs_pn.sqrt();
    let mut n_of_r = Vec::with_capacity(radii.len());
    let mut big_n = Vec::with_capacity(radii.len());
    for &r in radii {
        let inside: Vec<f64> = members.iter().cloned().filter(|&m| m <= r).collect();
        let n0 = inside.iter().filter(|&&m| m == 0.0).count() as f64;
        let s: f64 = inside.iter().filter(|&&m| m > 0.0).map(|&m| (r / m).ln()).sum();
        n_of_r.push(inside.len() as u64);
        big_n.push(s + if n0 > 0.0 { n0 * r.ln() } else { 0.0 });
    }
    CountingReport {
        j,
        radii: radii.to_vec(),
        n_of_r,
        big_n_of_r: big_n,
        predicted_n: radii.iter().map(|r| lead / (dc.q * PI) * r.powf(dc.q)).collect(),
        predicted_big_n: radii.iter().map(|r| lead / (dc.q * dc.q * PI) * r.powf(dc.q)).collect(),
        c_lambda,
        r_lambda,
        convention: N_CONVENTION.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorTag {
    BlowUp,
    Decay,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayTag {
    Shortage,
    NonShortage,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayProxy {
    pub theta: f64,
    /// f is a multiple of the solution decaying along this ray
    pub subdominant: bool,
    pub rel_wronskian: f64,
    /// min and max of r^{-q} log|f| over the last tenth of the ray
    pub liminf: f64,
    pub limsup: f64,
    pub noise: f64,
    pub tag: SectorTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    /// sector (theta_k, theta_{k+1})
    pub k: usize,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub rays: Vec<RayProxy>,
    pub uniform: bool,
    pub tag: SectorTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalReport {
    pub j: usize,
    pub theta: f64,
    pub radii: Vec<f64>,
    pub counts: Vec<i64>,
    pub y0: Option<f64>,
    pub tag: RayTag,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayClassification {
    pub r_max: f64,
    pub q: f64,
    pub sectors: Vec<SectorReport>,
    pub critical: Vec<CriticalReport>,
    /// two adjacent sectors both tagged decay
    pub adjacent_decay: bool,
    /// decay sectors have shortage edges, double blow-up rays are non-shortage
    pub shortage_consistent: bool,
    pub inconclusive: usize,
}

const PROFILE_SAMPLES: usize = 100;
const SUBDOMINANT_WRONSKIAN: f64 = 1e-9;

/// f'/f of the WKB solution decaying outward along `dir`.
fn wkb_state(p: &Poly, z: C, dir: C) -> OdeState {
    let (v, d1, _) = p.eval_d2(z);
    let mut lam = I * v.sqrt();
    if (lam * dir).re > 0.0 {
        lam = -lam;
    }
    OdeState::new(z, C::new(1.0, 0.0), lam - d1 / (v * 4.0))
}

/// Solution decaying outward along arg z = theta, integrated inward from
/// r_start; returns log|E| at `radii` (ascending) and E at `end`.
fn subdominant_profile(ig: &Integrator, theta: f64, r_start: f64, radii: &[f64], end: C) -> Result<(Vec<f64>, ScaledState)> {
    let dir = C::from_polar(1.0, theta);
    let mut st = ScaledState::new(wkb_state(ig.poly(), dir * r_start, dir));
    let mut logs = vec![0.0; radii.len()];
    for (k, &r) in radii.iter().enumerate().rev() {
        st = ig.solve_to(&st, dir * r)?;
        logs[k] = st.log_abs_f();
    }
    st = ig.solve_along(&st, &[C::new(0.0, 0.0), end])?;
    Ok((logs, st))
}

fn relative_wronskian(a: &ScaledState, b: &ScaledState) -> f64 {
    let w = a.state.f * b.state.fp - a.state.fp * b.state.f;
    w.norm() / (a.state.size() * b.state.size())
}

/// The solution decaying in sector (theta_k, theta_{k+1}), as its state at
/// z = 0 with |f| + |f'| = 1.
pub fn subdominant_init(spec: &EquationSpec, k: usize) -> Result<OdeState> {
    let dc = spec.derive_constants();
    let np2 = spec.n + 2;
    if k >= np2 {
        return Err(AtlasError::domain(format!("sector index {k} out of range")));
    }
    let ig = Integrator::new(spec.poly());
    let theta = dc.theta[k] + PI / np2 as f64;
    let dn = dc.d.norm();
    let r_far = (40.0 / dn)
        .powf(1.0 / dc.q)
        .max(4.0 * (dc.c.norm() + 1.0))
        .max(2.0 * dc.mu.norm() * dc.r_min);
    let (_, st) = subdominant_profile(&ig, theta, r_far, &[], C::new(0.0, 0.0))?;
    let s = st.state.size();
    Ok(OdeState::new(C::new(0.0, 0.0), st.state.f / s, st.state.fp / s))
}

fn ray_proxy(sol: &GlobalSolution, theta: f64, r_max: f64) -> Result<RayProxy> {
    let q = sol.dc.q;
    let ig = &sol.pz;
    let radii: Vec<f64> = (1..=PROFILE_SAMPLES).map(|i| r_max * i as f64 / PROFILE_SAMPLES as f64).collect();
    let (elogs, e_at) = subdominant_profile(ig, theta, 1.25 * r_max, &radii, sol.init.z)?;
    let f_at = ScaledState::new(sol.init);
    let rel_w = relative_wronskian(&f_at, &e_at);
    let subdominant = rel_w < SUBDOMINANT_WRONSKIAN;
    let logs: Vec<f64> = if subdominant {
        let e = e_at.state;
        let alpha = (sol.init.f * e.f.conj() + sol.init.fp * e.fp.conj()) / (e.f.norm_sqr() + e.fp.norm_sqr());
        let la = alpha.norm().ln() - e_at.log_scale;
        elogs.iter().map(|l| l + la).collect()
    } else {
        let dir = C::from_polar(1.0, theta);
        let mut st = ig.solve_to(&f_at, C::new(0.0, 0.0))?;
        let mut out = Vec::with_capacity(radii.len());
        for &r in &radii {
            st = ig.solve_to(&st, dir * r)?;
            out.push(st.log_abs_f());
        }
        out
    };
    let start = (PROFILE_SAMPLES * 9) / 10;
    let vals: Vec<f64> = (start..radii.len()).map(|i| logs[i] / radii[i].powf(q)).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let noise = (hi - lo) + 1e-12 * lo.abs().max(hi.abs()) + 1e-14;
    let margin = sol.tol.noise_margin;
    let tag = if lo > margin * noise {
        SectorTag::BlowUp
    } else if hi < -margin * noise {
        SectorTag::Decay
    } else {
        SectorTag::Inconclusive
    };
    Ok(RayProxy {
        theta,
        subdominant,
        rel_wronskian: rel_w,
        liminf: lo,
        limsup: hi,
        noise,
        tag,
    })
}

fn critical_counts(sol: &GlobalSolution, j: usize, r_max: f64, opts: &LocateOptions) -> CriticalReport {
    let radii = vec![r_max / 4.0, r_max / 2.0, r_max];
    let theta = sol.dc.theta[j];
    let r_hat_stop = (r_max + sol.dc.c.norm()) / sol.dc.mu.norm() * 1.05;
    let built = chart_for(sol, j).and_then(|ctx| Ladder::build(sol, &ctx, opts, r_hat_stop));
    let lad = match built {
        Ok(l) => l,
        Err(e) => {
            return CriticalReport {
                j,
                theta,
                radii,
                counts: vec![],
                y0: None,
                tag: RayTag::Inconclusive,
                error: Some(e.to_string()),
            }
        }
    };
    let mut counts = Vec::new();
    let mut err = None;
    for &r in &radii {
        let w = match lad.rung_within(sol, r) {
            Some(i) if i > 0 => lad.winding(0, i),
            _ => Ok(0),
        };
        match w {
            Ok(w) => counts.push(w),
            Err(e) => {
                err = Some(e.to_string());
                break;
            }
        }
    }
    let tag = if err.is_some() {
        RayTag::Inconclusive
    } else if counts[0] < counts[1] && counts[1] < counts[2] {
        RayTag::NonShortage
    } else if counts[1] == counts[2] {
        RayTag::Shortage
    } else {
        RayTag::Inconclusive
    };
    CriticalReport { j, theta, radii, counts, y0: lad.y0, tag, error: err }
}

/// Growth of f on sampled rays of each sector and shortage of each
/// critical ray.
pub fn classify_rays(spec: &EquationSpec, init: OdeState, r_max: f64, rays_per_sector: usize) -> Result<RayClassification> {
    let sol = GlobalSolution::new(spec, init)?;
    let opts = LocateOptions { du: 2.0, ..LocateOptions::default() };
    classify_with(&sol, r_max, rays_per_sector, &opts)
}

pub fn classify_with(sol: &GlobalSolution, r_max: f64, rays_per_sector: usize, opts: &LocateOptions) -> Result<RayClassification> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(AtlasError::validation("r_max must be positive"));
    }
    let np2 = sol.spec.n + 2;
    let width = TAU / np2 as f64;
    let m = rays_per_sector.max(1);
    let fracs: Vec<f64> = if m == 1 {
        vec![0.5]
    } else {
        (0..m).map(|i| 1.0 / 6.0 + (2.0 / 3.0) * i as f64 / (m - 1) as f64).collect()
    };
    let jobs: Vec<(usize, f64)> = (0..np2)
        .flat_map(|k| fracs.iter().map(move |f| (k, f)))
        .map(|(k, f)| (k, sol.dc.theta[k] + f * width))
        .collect();
    let proxies: Vec<Result<RayProxy>> = jobs.par_iter().map(|&(_, th)| ray_proxy(sol, th, r_max)).collect();
    let mut sectors = Vec::with_capacity(np2);
    for k in 0..np2 {
        let mut rays = Vec::new();
        for ((kk, _), p) in jobs.iter().zip(&proxies) {
            if *kk == k {
                rays.push(p.clone()?);
            }
        }
        let first = rays[0].tag;
        let uniform = first != SectorTag::Inconclusive && rays.iter().all(|r| r.tag == first);
        sectors.push(SectorReport {
            k,
            theta_lo: sol.dc.theta[k],
            theta_hi: sol.dc.theta[k] + width,
            rays,
            uniform,
            tag: if uniform { first } else { SectorTag::Inconclusive },
        });
    }
    let critical: Vec<CriticalReport> = (0..np2).into_par_iter().map(|j| critical_counts(sol, j, r_max, opts)).collect();
    let adjacent_decay =
        (0..np2).any(|k| sectors[k].tag == SectorTag::Decay && sectors[(k + 1) % np2].tag == SectorTag::Decay);
    let mut consistent = true;
    for k in 0..np2 {
        if sectors[k].tag == SectorTag::Decay
            && (critical[k].tag != RayTag::Shortage || critical[(k + 1) % np2].tag != RayTag::Shortage)
        {
            consistent = false;
        }
    }
    for j in 0..np2 {
        let before = &sectors[(j + np2 - 1) % np2];
        let after = &sectors[j];
        if before.tag == SectorTag::BlowUp && after.tag == SectorTag::BlowUp && critical[j].tag != RayTag::NonShortage {
            consistent = false;
        }
    }
    let inconclusive = sectors.iter().filter(|s| s.tag == SectorTag::Inconclusive).count()
        + critical.iter().filter(|c| c.tag == RayTag::Inconclusive).count();
    Ok(RayClassification {
        r_max,
        q: sol.dc.q,
        sectors,
        critical,
        adjacent_decay,
        shortage_consistent: consistent,
        inconclusive,
    })
}

/// gamma, sigma0 and the phase data z0 = x0 + i y0, b of S = b sin(zeta - z0) + v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationWindow {
    pub gamma: f64,
    pub sigma0: f64,
    pub v0: f64,
    pub z0: C,
    pub b: C,
    /// log(1 + sin gamma / cosh gamma)
    pub threshold: f64,
    /// sup of the tail integral on the strip at Re zeta = sigma0
    pub edge_tail: f64,
}

impl OscillationWindow {
    pub fn square_center(&self, k: usize) -> C {
        self.z0 + k as f64 * PI
    }
}

fn strip_tail(pf: &PerturbationField, sigma: f64, y0: f64, gamma: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        worst = worst.max(pf.tail_integral(C::new(sigma, y0 + t * gamma))?);
    }
    Ok(worst)
}

/// Fixes sigma0 (by bisection unless given) and shifts z0 by multiples of
/// pi into (sigma0 + gamma, sigma0 + pi - gamma].
pub fn oscillation_window(pf: &PerturbationField, c1: C, c2: C, gamma: f64, sigma0: Option<f64>) -> Result<OscillationWindow> {
    if !(gamma > 0.0 && gamma < FRAC_PI_2) {
        return Err(AtlasError::domain("gamma must lie in (0, pi/2)"));
    }
    let (b, z0) = oscillatory_decompose(c1, c2)?;
    let y0 = z0.im;
    let threshold = (1.0 + gamma.sin() / gamma.cosh()).ln();
    let mut s0 = match sigma0 {
        Some(s) => {
            let t = strip_tail(pf, s, y0, gamma)?;
            if !(t < threshold) || s < pf.r {
                return Err(AtlasError::domain(format!(
                    "window edge violates exp(tail) < 1 + sin(gamma)/cosh(gamma): tail {t:e} >= {threshold:e}"
                )));
            }
            s
        }
        None => {
            let mut lo = pf.r;
            if strip_tail(pf, lo, y0, gamma)? < threshold {
                lo
            } else {
                let mut hi = lo.max(1.0);
                while strip_tail(pf, hi, y0, gamma)? >= threshold {
                    hi *= 2.0;
                    if hi > 1e7 {
                        return Err(AtlasError::numeric("no window edge with small enough tail", hi));
                    }
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if strip_tail(pf, mid, y0, gamma)? < threshold {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    };
    // shift z0 by k pi, flipping the sign of b for odd k
    let lo = s0 + gamma;
    let k = ((lo - z0.re) / PI).floor() + 1.0;
    let mut x0 = z0.re + k * PI;
    let mut shifts = k as i64;
    if x0 - lo >= PI {
        x0 -= PI;
        shifts -= 1;
    }
    if x0 > s0 + PI - gamma {
        s0 = x0 - PI + gamma;
    }
    let b = if shifts.rem_euclid(2) == 1 { -b } else { b };
    let edge_tail = strip_tail(pf, s0, y0, gamma)?;
    Ok(OscillationWindow {
        gamma,
        sigma0: s0,
        v0: y0,
        z0: C::new(x0, y0),
        b,
        threshold,
        edge_tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareReport {
    pub window: OscillationWindow,
    pub k_max: usize,
    pub windings: Vec<i64>,
    /// zero of each square by the first moment of S'/S
    pub zeros: Vec<C>,
    pub violations: Vec<usize>,
    /// zeros in [sigma0, x_end] x [y0 - 1, y0 + 1] by its winding number
    pub rectangle_count: i64,
    pub rectangle_expected: i64,
    pub rho: f64,
    pub n_rho: usize,
    /// n(rho) / (rho / pi)
    pub ratio: f64,
    pub passed: bool,
}

const GL_EDGE: usize = 16;

/// Checks one zero per square Q_{k,gamma}, k = 0..=k_max, none elsewhere in
/// a rectangle of H0 containing them, and n(rho)/(rho/pi).
pub fn square_lemma_check(pf: &PerturbationField, c1: C, c2: C, window: &OscillationWindow, k_max: usize, rho: f64) -> Result<SquareReport> {
    let base = Base::Combo { a: c1, b: c2 };
    let tol = 1e-12;
    let n_max = 30;
    let g = window.gamma;
    let (x0, y0) = (window.z0.re, window.z0.im);
    let centers: Vec<f64> = (0..=k_max).map(|k| x0 + k as f64 * PI).collect();
    let (ex, ew) = gauss_legendre_on(GL_EDGE, -g, g);

    // horizontal edges: corners and Gauss nodes of every square
    let mut hx = Vec::new();
    for &xc in &centers {
        hx.push(xc - g);
        hx.extend(ex.iter().map(|t| xc + t));
        hx.push(xc + g);
    }
    // vertical edges at Gauss heights
    let mut vx = Vec::new();
    for &xc in &centers {
        vx.push(xc - g);
        vx.push(xc + g);
    }
    let mut lines: Vec<(f64, Vec<f64>)> = vec![(y0 - g, hx.clone()), (y0 + g, hx.clone())];
    for t in &ex {
        lines.push((y0 + t, vx.clone()));
    }
    // enclosing rectangle
    let yb = 1.0_f64.max(2.0 * g);
    let x_lo = window.sigma0;
    let x_hi = x0 + k_max as f64 * PI + FRAC_PI_2;
    let nh = ((x_hi - x_lo) / 0.05).ceil() as usize;
    let rx: Vec<f64> = (0..=nh).map(|i| x_lo + (x_hi - x_lo) * i as f64 / nh as f64).collect();
    lines.push((y0 - yb, rx.clone()));
    lines.push((y0 + yb, rx));
    let (ry, _) = gauss_legendre_on(32, y0 - yb, y0 + yb);
    for y in &ry {
        lines.push((*y, vec![x_lo, x_hi]));
    }
    let sweeps: Vec<Vec<(C, C)>> = lines
        .par_iter()
        .map(|(y, xs)| {
            pf.sweep_line(base, *y, xs, n_max, tol)
                .map(|v| v.into_iter().map(|s| (s.w, s.dw)).collect())
        })
        .collect::<Result<_>>()?;

    let phase = |vals: &[C]| -> Result<f64> {
        let mut t = 0.0;
        for w in vals.windows(2) {
            if w[0].norm() == 0.0 || w[1].norm() == 0.0 {
                return Err(boundary_error(f64::INFINITY));
            }
            let d = (w[1] / w[0]).arg();
            if d.abs() >= FRAC_PI_2 {
                return Err(boundary_error(d.abs()));
            }
            t += d;
        }
        Ok(t)
    };

    let per = GL_EDGE + 2;
    let mut windings = Vec::with_capacity(k_max + 1);
    let mut zeros = Vec::with_capacity(k_max + 1);
    let mut violations = Vec::new();
    for (k, &xc) in centers.iter().enumerate() {
        let bot = &sweeps[0][k * per..(k + 1) * per];
        let top = &sweeps[1][k * per..(k + 1) * per];
        // right edge upward, left edge downward, at Gauss heights
        let right: Vec<(C, C)> = (0..GL_EDGE).map(|m| sweeps[2 + m][2 * k + 1]).collect();
        let left: Vec<(C, C)> = (0..GL_EDGE).map(|m| sweeps[2 + m][2 * k]).collect();
        let mut ring: Vec<C> = bot.iter().map(|p| p.0).collect();
        ring.extend(right.iter().map(|p| p.0));
        ring.extend(top.iter().rev().map(|p| p.0));
        ring.extend(left.iter().rev().map(|p| p.0));
        ring.push(bot[0].0);
        let w = round_winding(phase(&ring)?)?;
        windings.push(w);
        if w != 1 {
            violations.push(k);
        }
        // first moment: sum z S'/S dz over the four edges
        let mut num = C::new(0.0, 0.0);
        let mut den = C::new(0.0, 0.0);
        for m in 0..GL_EDGE {
            let wt = ew[m];
            let zb = C::new(xc + ex[m], y0 - g);
            let zt = C::new(xc + ex[m], y0 + g);
            let zr = C::new(xc + g, y0 + ex[m]);
            let zl = C::new(xc - g, y0 + ex[m]);
            let (sb, db) = bot[m + 1];
            let (st, dt) = top[m + 1];
            let (sr, dr) = right[m];
            let (sl, dl) = left[m];
            let terms = [
                (zb, db / sb, C::new(wt, 0.0)),
                (zt, dt / st, C::new(-wt, 0.0)),
                (zr, dr / sr, I * wt),
                (zl, dl / sl, -I * wt),
            ];
            for (z, ld, dz) in terms {
                num += z * ld * dz;
                den += ld * dz;
            }
        }
        zeros.push(num / den);
    }

    let bottom: Vec<C> = sweeps[2 + GL_EDGE].iter().map(|p| p.0).collect();
    let top: Vec<C> = sweeps[3 + GL_EDGE].iter().map(|p| p.0).collect();
    let vstart = 4 + GL_EDGE;
    let mut ring = bottom.clone();
    ring.extend((0..ry.len()).map(|m| sweeps[vstart + m][1].0));
    ring.extend(top.iter().rev());
    ring.extend((0..ry.len()).rev().map(|m| sweeps[vstart + m][0].0));
    ring.push(bottom[0]);
    let rectangle_count = round_winding(phase(&ring)?)?;
    let rectangle_expected = (k_max + 1) as i64;
    let n_rho = zeros.iter().filter(|z| z.norm() <= rho).count();
    let ratio = n_rho as f64 / (rho / PI);
    let passed = violations.is_empty() && rectangle_count == rectangle_expected;
    Ok(SquareReport {
        window: *window,
        k_max,
        windings,
        zeros,
        violations,
        rectangle_count,
        rectangle_expected,
        rho,
        n_rho,
        ratio,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::validate;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn airy() -> EquationSpec {
        validate(&[c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    /// Smallest zero of y'' + x y = 0 with y decaying as x -> -inf, by
    /// shooting from x = -8 with the WKB slope and bisection on the sign.
    fn first_airy_zero_oracle() -> f64 {
        let rhs = |x: f64, y: [f64; 2]| [y[1], -x * y[0]];
        let x_start = -8.0f64;
        let mut y = [1.0, (-x_start).sqrt() - 0.25 / x_start];
        let h = 1e-4;
        let mut x = x_start;
        loop {
            let k1 = rhs(x, y);
            let k2 = rhs(x + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(x + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            let ny = [
                y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            x += h;
            if ny[0] * y[0] < 0.0 && x > 0.0 {
                // linear interpolation inside the final step
                let t = y[0] / (y[0] - ny[0]);
                return x - h + t * h;
            }
            y = ny;
        }
    }

    #[test]
    fn airy_first_zero_oracle_value() {
        assert!((first_airy_zero_oracle() - 2.338107).abs() < 1e-5);
    }

    #[test]
    fn winding_of_sin_boxes() {
        let f = |z: C| (z.sin(), z.cos());
        assert_eq!(winding_analytic(f, &Rect::around(c(PI + 0.3, 0.1), 1.0), 4).unwrap(), 1);
        assert_eq!(winding_analytic(f, &Rect::around(c(PI / 2.0, 0.0), 1.0), 4).unwrap(), 0);
        assert_eq!(winding_analytic(f, &Rect::new(c(0.5, -1.0), c(10.0, 1.0)), 4).unwrap(), 3);
        assert!(winding_analytic(f, &Rect::new(c(0.0, -1.0), c(1.0, 1.0)), 4).is_err());
    }

    #[test]
    fn airy_first_zero_located() {
        let spec = airy();
        let init = subdominant_init(&spec, 1).unwrap();
        let atlas = locate_zeros(&spec, init, &Region::new(0.0, 12.0).unwrap(), 40).unwrap();
        let first = &atlas.zeros[0];
        assert!(first.refined);
        assert_eq!(first.winding, 1);
        assert!((first.location - c(first_airy_zero_oracle(), 0.0)).norm() < 1e-5);
        assert!((first.location.re - 2.338107410459767).abs() < 1e-9);
        assert!(atlas.zeros.iter().all(|z| z.location.im.abs() < 1e-8 && z.band_j == 0));
    }

    #[test]
    fn ode_winding_matches_airy_zeros() {
        let spec = airy();
        let sol = GlobalSolution::new(&spec, subdominant_init(&spec, 1).unwrap()).unwrap();
        let one = Rect::new(c(1.5, -0.5), c(3.0, 0.5));
        assert_eq!(winding_number(&sol, &one, 4).unwrap(), 1);
        let three = Rect::new(c(1.5, -0.5), c(6.0, 0.5));
        assert_eq!(winding_number(&sol, &three, 4).unwrap(), 3);
        let parts = [
            Rect::new(c(1.5, -0.5), c(3.0, 0.5)),
            Rect::new(c(3.0, -0.5), c(4.5, 0.5)),
            Rect::new(c(4.5, -0.5), c(6.0, 0.5)),
        ];
        let sum: i64 = parts.iter().map(|r| winding_number(&sol, r, 4).unwrap()).sum();
        assert_eq!(sum, 3);
        let decay = Rect::around(c(-6.0, 0.0), 1.0);
        assert_eq!(winding_number(&sol, &decay, 4).unwrap(), 0);
    }

    #[test]
    fn translate_zeros_for_z_plus_i() {
        let spec = validate(&[c(0.0, 1.0), c(1.0, 0.0)]).unwrap();
        let init = subdominant_init(&spec, 1).unwrap();
        let atlas = locate_zeros(&spec, init, &Region::new(0.0, 15.0).unwrap(), 40).unwrap();
        assert!(!atlas.zeros.is_empty());
        for z in &atlas.zeros {
            assert!((z.location.im + 1.0).abs() < 1e-8, "{:?}", z.location);
            assert!(z.dist_to_translate < 1e-8);
        }
        assert!((atlas.zeros[0].location.re - 2.338107410459767).abs() < 1e-8);
    }

    #[test]
    fn counting_examples() {
        let spec = airy();
        let dc = spec.derive_constants();
        let empty = counting_function(&[], &dc, 0, &[10.0, 20.0], 10.0, 1.0);
        assert_eq!(empty.n_of_r, vec![0, 0]);
        assert_eq!(empty.big_n_of_r, vec![0.0, 0.0]);
        assert!((empty.predicted_n[1] - 2.0 / (3.0 * PI) * 20f64.powf(1.5)).abs() < 1e-12);
        let atlas = locate_zeros(&spec, subdominant_init(&spec, 1).unwrap(), &Region::new(0.0, 21.0).unwrap(), 40).unwrap();
        let rep = counting_function(&atlas.zeros, &dc, 0, &[20.0], 10.0, 1.0);
        assert_eq!(rep.n_of_r, vec![19]);
    }

    #[test]
    fn airy_classification() {
        let spec = airy();
        let cls = classify_rays(&spec, subdominant_init(&spec, 1).unwrap(), 12.0, 3).unwrap();
        let tags: Vec<SectorTag> = cls.sectors.iter().map(|s| s.tag).collect();
        assert_eq!(tags, vec![SectorTag::BlowUp, SectorTag::Decay, SectorTag::BlowUp]);
        let rays: Vec<RayTag> = cls.critical.iter().map(|c| c.tag).collect();
        assert_eq!(rays, vec![RayTag::NonShortage, RayTag::Shortage, RayTag::Shortage]);
        assert!(cls.shortage_consistent && !cls.adjacent_decay);
    }

    #[test]
    fn sine_squares_without_perturbation() {
        let pf = PerturbationField::from_fn(|_| C::new(0.0, 0.0), crate::volterra::Side::Plus);
        let z0 = c(0.4, 0.3);
        let (c1, c2) = Base::Sine { z0 }.coefficients();
        let win = oscillation_window(&pf, c1, c2, 0.1, None).unwrap();
        assert!((win.sigma0 - pf.r).abs() < 1e-12);
        assert!(win.z0.re > win.sigma0 + 0.1 && win.z0.re <= win.sigma0 + PI - 0.1);
        let rep = square_lemma_check(&pf, c1, c2, &win, 5, 100.0).unwrap();
        assert!(rep.passed, "{rep:?}");
        for (k, z) in rep.zeros.iter().enumerate() {
            assert!((z - (win.z0 + k as f64 * PI)).norm() < 1e-10);
            assert!(((z - z0) / PI).re.fract().abs() < 1e-10 || ((z - z0) / PI).re.fract().abs() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn window_gate() {
        let pf = PerturbationField::from_fn(|z: C| -5.0 / (36.0 * z * z), crate::volterra::Side::Plus);
        let (c1, c2) = Base::Sine { z0: c(0.0, 0.0) }.coefficients();
        let win = oscillation_window(&pf, c1, c2, 0.1, None).unwrap();
        let expect = 5.0 / 36.0 / (1.0 + 0.1f64.sin() / 0.1f64.cosh()).ln();
        assert!((win.sigma0 - expect).abs() < 1e-6 || win.sigma0 > expect);
        assert!(oscillation_window(&pf, c1, c2, 0.01, Some(1.5)).is_err());
        assert!(oscillation_window(&pf, c1, c2, 2.0, None).is_err());
    }
}
