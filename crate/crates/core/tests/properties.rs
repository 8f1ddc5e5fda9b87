use std::f64::consts::{PI, TAU};

use hille_atlas::branch::*;
use hille_atlas::equation::*;
use hille_atlas::liouville::LiouvilleContext;
use hille_atlas::ode::{wronskian_scaled, Integrator, OdeState, ScaledState};
use hille_atlas::volterra::oscillatory_decompose;
use hille_atlas::zeros::{winding_analytic, Rect};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn cplx(r: std::ops::Range<f64>) -> impl Strategy<Value = C> {
    (r.clone(), r).prop_map(|(a, b)| C::new(a, b))
}

fn nonzero() -> impl Strategy<Value = C> {
    (-12.0..6.0f64, -PI..PI).prop_map(|(lr, t)| C::from_polar(10f64.powf(lr / 2.0), t))
}

fn moderate() -> impl Strategy<Value = C> {
    (-4.0..2.0f64, -PI..PI).prop_map(|(l, t)| C::from_polar(10f64.powf(l), t))
}

/// Random P of degree 1..=4 with a leading coefficient bounded away from 0.
fn poly_spec() -> impl Strategy<Value = EquationSpec> {
    (1usize..=4)
        .prop_flat_map(|n| (prop::collection::vec(cplx(-2.0..2.0), n), 0.5..2.0f64, -PI..PI))
        .prop_map(|(mut v, m, t)| {
            v.push(C::from_polar(m, t));
            validate(&v).unwrap()
        })
}

/// End state and the log of the largest |f| + |f'| met along the path.
fn walk(ig: &Integrator, init: OdeState, path: &[C]) -> (ScaledState, f64) {
    let sol = ig.integrate_path(&init, path, 8.0).unwrap();
    assert!(!sol.truncated);
    let peak = sol
        .samples
        .iter()
        .zip(&sol.log_scale)
        .map(|(s, l)| s.size().ln() + l)
        .fold(f64::NEG_INFINITY, f64::max);
    (sol.last(), peak)
}

/// Log of the largest |f| + |f'| met by either basis solution along the path.
fn basis_peak(ig: &Integrator, path: &[C]) -> f64 {
    let o = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let (_, a) = walk(ig, OdeState::new(path[0], one, o), path);
    let (_, b) = walk(ig, OdeState::new(path[0], o, one), path);
    a.max(b)
}

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn sqrt_squares_back(z in nonzero(), phi in -20.0..20.0f64) {
        let s = sqrt_on_branch(z, phi);
        prop_assert!(rel(s * s, z) <= 1e-14);
        let f = fourth_root_on_branch(z, phi);
        prop_assert!(rel(f * f * f * f, z) <= 4e-14);
    }

    #[test]
    fn sqrt_period_and_flip(z in nonzero(), phi in -20.0..20.0f64) {
        let s = sqrt_on_branch(z, phi);
        prop_assert_eq!(s, sqrt_on_branch(z, phi + 4.0 * PI));
        prop_assert_eq!(s, -sqrt_on_branch(z, phi + TAU));
    }

    #[test]
    fn relation_sign_identity(z in nonzero(), phi in -20.0..20.0f64, psi in -20.0..20.0f64) {
        let s = branch_relation_sign(z, phi, psi);
        prop_assert!(s == 1 || s == -1);
        prop_assert_eq!(sqrt_on_branch(z, phi), sqrt_on_branch(z, psi) * s as f64);
    }

    #[test]
    fn arg_in_window(z in nonzero(), phi in -20.0..20.0f64) {
        let a = arg_on_branch(z, phi).unwrap();
        prop_assert!(a > phi - 1e-12 && a <= phi + TAU + 1e-12);
        prop_assert!(rel(C::from_polar(z.norm(), a), z) <= 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn normalize_round_trip(spec in poly_spec()) {
        let ne = spec.normalize();
        let back = ne.denormalize();
        let scale = spec.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert_eq!(back.coeffs.len(), spec.coeffs.len());
        for (a, b) in back.coeffs.iter().zip(&spec.coeffs) {
            prop_assert!((a - b).norm() <= 1e-12 * scale);
        }
        let q = ne.q_poly();
        prop_assert!((q.coeffs[spec.n] - C::new(1.0, 0.0)).norm() <= 1e-12);
    }

    #[test]
    fn rays_rotate_with_mu(spec in poly_spec()) {
        let dc = spec.derive_constants();
        let n = spec.n;
        prop_assert_eq!(dc.theta.len(), n + 2);
        for j in 0..n + 2 {
            let next = if j + 1 < n + 2 { dc.theta[j + 1] } else { dc.theta[0] + TAU };
            prop_assert!((next - dc.theta[j] - TAU / (n + 2) as f64).abs() <= 1e-12);
            let dir = dc.mu * C::from_polar(1.0, dc.psi[j]);
            prop_assert!(reduce_angle(dir.im.atan2(dir.re) - dc.theta[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn ell_bound(spec in poly_spec(), t in -PI..PI, s in 1.0001..50.0f64) {
        let ne = spec.normalize();
        let z = C::from_polar(s * ne.r_min(), t);
        let bound = (ne.n as f64 - 1.0) * ne.m0() / z.norm_sqr();
        prop_assert!(ne.ell_unchecked(z).norm() <= bound * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn a_and_b_powers_are_q(spec in poly_spec(), jj in 0usize..6, t in -1.0..1.0f64, s in 1.01..40.0f64) {
        let ne = spec.normalize();
        let j = jj % (ne.n + 2);
        let ctx = LiouvilleContext::new(ne.clone(), j, ne.r_min()).unwrap();
        let z = C::from_polar(s * ctx.r, ctx.psi_j + t * ctx.half_width);
        prop_assume!(ctx.in_domain(z));
        let q = ctx.q_of(z);
        prop_assert!(rel(ctx.a_of(z).powi(2), q) <= 1e-12);
        prop_assert!(rel(ctx.b_of(z).powi(4), q) <= 1e-12);
    }
}

#[test]
fn e_n_decreasing() {
    for n in 1..=6 {
        let mut last = f64::INFINITY;
        let mut r = 3.0;
        while r < 1e6 {
            let e = e_n(r, n).unwrap();
            assert!(e < last, "n = {n}, r = {r}");
            last = e;
            r *= 1.01;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn liouville_round_trip(spec in poly_spec(), jj in 0usize..6, t in -0.8..0.8f64, s in 2.0..20.0f64) {
        let ne = spec.normalize();
        let j = jj % (ne.n + 2);
        let ctx = LiouvilleContext::new(ne.clone(), j, 10.0 * ne.r_min()).unwrap();
        let z = C::from_polar(s * ctx.r, ctx.psi_j + t * ctx.half_width);
        let ev = ctx.forward(z).unwrap();
        let back = ctx.inverse_from(z, ev.zeta, ev.zeta).unwrap().0;
        prop_assert!((back - z).norm() <= 1e-9 * z.norm());
        let seeded = ctx.inverse_unchecked(ev.zeta).unwrap();
        prop_assert!((seeded - z).norm() <= 1e-8 * z.norm());
    }

    #[test]
    fn wronskian_and_linearity(spec in poly_spec(), end in cplx(-4.0..4.0), mid in cplx(-4.0..4.0),
                               a in cplx(-1.0..1.0), b in cplx(-1.0..1.0)) {
        let ig = Integrator::new(spec.poly());
        let o = C::new(0.0, 0.0);
        let path = [o, mid, end];
        let (u, su) = walk(&ig, OdeState::new(o, C::new(1.0, 0.0), o), &path);
        let (v, sv) = walk(&ig, OdeState::new(o, o, C::new(1.0, 0.0)), &path);
        let (m, _) = walk(&ig, OdeState::new(o, a, b), &path);
        let (w, lw) = wronskian_scaled(&u, &v).unwrap();
        let drift = (w - C::new(-lw, 0.0).exp()).norm() * (lw - su - sv).exp();
        prop_assert!(drift <= 1e-10, "drift {drift}");
        let (uu, vv, mm) = (u.unscaled(), v.unscaled(), m.unscaled());
        let lin = uu.f * a + vv.f * b;
        // errors made at s reach the end through |Y(end)| |Y(s)| / |W|
        let kappa = (2.0 * su.max(sv)).exp() * uu.size().max(vv.size());
        let lin_err = (mm.f - lin).norm() / (kappa * (a.norm() + b.norm())).max(1e-300);
        prop_assert!(lin_err <= 1e-12, "linearity {lin_err}");
    }

    #[test]
    fn path_independence(spec in poly_spec(), end in cplx(-3.0..3.0), p1 in cplx(-3.0..3.0), p2 in cplx(-3.0..3.0),
                         f0 in cplx(-1.0..1.0), fp0 in cplx(-1.0..1.0)) {
        prop_assume!(f0.norm() + fp0.norm() > 1e-3);
        let ig = Integrator::new(spec.poly());
        let o = C::new(0.0, 0.0);
        let init = OdeState::new(o, f0, fp0);
        let (pa, pb) = ([o, p1, end], [o, p2, end]);
        let (a, _) = walk(&ig, init, &pa);
        let (b, _) = walk(&ig, init, &pb);
        let (a, b) = (a.unscaled(), b.unscaled());
        // roundoff grows like eps times the condition of the fundamental matrix
        let kappa = (2.0 * basis_peak(&ig, &pa).max(basis_peak(&ig, &pb))).exp();
        let tol = 1e-12 * kappa * a.size().max(b.size());
        let (ef, efp) = ((a.f - b.f).norm() / tol, (a.fp - b.fp).norm() / tol);
        prop_assert!(ef <= 1.0 && efp <= 1.0, "{ef} {efp}");
    }

    #[test]
    fn decompose_is_exact(c1 in moderate(), c2 in moderate(), z in cplx(-5.0..5.0)) {
        let (b, z0) = oscillatory_decompose(c1, c2).unwrap();
        let i = C::new(0.0, 1.0);
        let lhs = c1 * (i * z).exp() + c2 * (-i * z).exp();
        let bound = 1e-12 * (c1.norm() + c2.norm()) * z.im.abs().exp();
        let err = (lhs - b * (z - z0).sin()).norm() / bound;
        prop_assert!(err <= 1.0, "{err} {b} {z0}");
        prop_assert!(z0.re > -PI / 2.0 && z0.re <= PI / 2.0);
    }

    #[test]
    fn winding_subdivides(roots in prop::collection::vec(cplx(-3.0..3.0), 1..6), cut in 0.2..0.8f64, vert in any::<bool>()) {
        let f = |z: C| {
            let mut v = C::new(1.0, 0.0);
            let mut d = C::new(0.0, 0.0);
            for r in &roots {
                d = d * (z - r) + v;
                v *= z - r;
            }
            (v, d)
        };
        let rect = Rect::new(C::new(-2.5, -2.1), C::new(2.3, 2.7));
        let (ra, rb) = if vert {
            let x = rect.lo.re + cut * (rect.hi.re - rect.lo.re);
            (Rect::new(rect.lo, C::new(x, rect.hi.im)), Rect::new(C::new(x, rect.lo.im), rect.hi))
        } else {
            let y = rect.lo.im + cut * (rect.hi.im - rect.lo.im);
            (Rect::new(rect.lo, C::new(rect.hi.re, y)), Rect::new(C::new(rect.lo.re, y), rect.hi))
        };
        let near = |r: &Rect| roots.iter().any(|z| {
            let dx = (z.re - r.lo.re).abs().min((z.re - r.hi.re).abs());
            let dy = (z.im - r.lo.im).abs().min((z.im - r.hi.im).abs());
            let inside_x = z.re >= r.lo.re - 1e-3 && z.re <= r.hi.re + 1e-3;
            let inside_y = z.im >= r.lo.im - 1e-3 && z.im <= r.hi.im + 1e-3;
            (dx < 1e-3 && inside_y) || (dy < 1e-3 && inside_x)
        });
        prop_assume!(!near(&rect) && !near(&ra) && !near(&rb));
        let whole = winding_analytic(f, &rect, 64).unwrap();
        let parts = winding_analytic(f, &ra, 64).unwrap() + winding_analytic(f, &rb, 64).unwrap();
        prop_assert_eq!(whole, parts);
        let inside = roots.iter().filter(|z| rect.contains(**z)).count() as i64;
        prop_assert_eq!(whole, inside);
    }
}
