//! Adaptive Gauss-Kronrod (7/15) quadrature for complex integrands along
//! segments of the complex plane, plus a semi-infinite real variant.

use num_complex::Complex64;

use crate::error::{AtlasError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
}

/// One 15-point rule on the parameter interval [t0, t1] of `g`.
fn gk15<G: Fn(f64) -> Complex64>(g: &G, t0: f64, t1: f64) -> (Complex64, f64) {
    let c = 0.5 * (t0 + t1);
    let h = 0.5 * (t1 - t0);
    let fc = g(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = g(c - x) + g(c + x);
        rk += s * WGK[i];
        if i % 2 == 1 {
            rg += s * WG[i / 2];
        }
    }
    ((rk * h), ((rk - rg) * h).norm())
}

/// Globally adaptive integration of `g` over [t0, t1].
pub fn adaptive<G: Fn(f64) -> Complex64>(
    g: G,
    t0: f64,
    t1: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult> {
    let (v, e) = gk15(&g, t0, t1);
    let mut parts = vec![(t0, t1, v, e)];
    let mut evals = 15;
    loop {
        let total: Complex64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let target = abs_tol.max(rel_tol * total.norm());
        if !total.re.is_finite() || !total.im.is_finite() {
            return Err(AtlasError::numeric("non-finite integrand", f64::INFINITY));
        }
        if err <= target {
            return Ok(QuadResult {
                value: total,
                error: err,
                evals,
            });
        }
        if parts.len() >= max_intervals {
            return Err(AtlasError::numeric(
                "quadrature did not converge",
                err / total.norm().max(f64::MIN_POSITIVE),
            ));
        }
        let (iw, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |b, (i, p)| if p.3 > b.1 { (i, p.3) } else { b });
        let (a, b, _, _) = parts.swap_remove(iw);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(&g, a, m);
        let (v2, e2) = gk15(&g, m, b);
        evals += 30;
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

/// Integral of `f(z) dz` along the straight segment from `a` to `b`.
pub fn segment<F: Fn(Complex64) -> Complex64>(
    f: F,
    a: Complex64,
    b: Complex64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let d = b - a;
    if d.norm() == 0.0 {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evals: 0,
        });
    }
    let r = adaptive(|t| f(a + d * t), 0.0, 1.0, abs_tol / d.norm(), rel_tol, 2000)?;
    Ok(QuadResult {
        value: r.value * d,
        error: r.error * d.norm(),
        evals: r.evals,
    })
}

/// Integral over [a, inf) of a real function by x = a + s/(1-s).
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    let g = |s: f64| {
        let u = 1.0 - s;
        Complex64::new(f(a + s / u) / (u * u), 0.0)
    };
    adaptive(g, 0.0, 1.0, abs_tol, rel_tol, 4000)
}

/// Complex-valued variant of `semi_infinite`; the tolerance applies to the modulus.
pub fn semi_infinite_complex<F: Fn(f64) -> Complex64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    let g = |s: f64| {
        let u = 1.0 - s;
        f(a + s / u) / (u * u)
    };
    adaptive(g, 0.0, 1.0, abs_tol, rel_tol, 4000)
}

/// Real integral over [a, b].
pub fn real<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    adaptive(|t| Complex64::new(f(t), 0.0), a, b, abs_tol, rel_tol, 4000)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { t } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * pn - pm) / (t * t - 1.0);
            let dt = pn / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and weights mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let m = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    (x.iter().map(|t| m + r * t).collect(), w.iter().map(|v| v * r).collect())
}
