//! Command-line front end for hille-atlas.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use hille_atlas::config::Tolerances;
use hille_atlas::equation::{validate, DerivedConstants, EquationSpec, NormalizedEquation};
use hille_atlas::liouville::{LiouvilleContext, LiouvilleEvaluation, SeriesExpansion, UnivalenceReport};
use hille_atlas::ode::OdeState;
use hille_atlas::report::{emit_svg, zeros_csv, Check, Envelope, SvgOptions, VerifyReport};
use hille_atlas::volterra::{PerturbationField, Side, VolterraSample};
use hille_atlas::zeros::{
    classify_with, counting_function, locate_zeros_with, subdominant_init, GlobalSolution, LocateOptions,
    RayClassification, Region, RayTag, ZeroAtlas,
};
use hille_atlas::AtlasError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const THREADS_ENV: &str = "HILLE_ATLAS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hille-atlas", version, about = "Zeros and asymptotics of f'' + P(z) f = 0")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Critical rays and derived constants
    Rays,
    /// Normalized equation Q(z) = mu^2 P(mu z - c)
    Normalize,
    /// Liouville map of one sector: series vs quadrature, T, univalence
    Liouville,
    /// E+ and E- of the perturbed sine equation on the real zeta ray
    Asymptote,
    /// Zeros along the critical translates
    Zeros,
    /// Growth of the solution on each sector and shortage of critical rays
    Classify,
    /// Zero counts against the predicted asymptotics
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Opts {
    /// Coefficients p_0..p_n as JSON [[re, im], ...]
    #[arg(long, global = true)]
    pub poly: Option<String>,
    #[arg(long, global = true)]
    pub rmax: Option<f64>,
    #[arg(long, global = true)]
    pub rmin: Option<f64>,
    /// Convergence target of the Volterra iteration
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub sector: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Initial data at z = 0 as JSON [[f_re, f_im], [fp_re, fp_im]]
    #[arg(long, global = true, conflicts_with = "decay_sector")]
    pub init: Option<String>,
    /// Use the solution decaying in sector (theta_k, theta_k+1); default 1
    #[arg(long, global = true)]
    pub decay_sector: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numeric(String),
}

impl From<AtlasError> for Failure {
    fn from(e: AtlasError) -> Self {
        match e {
            AtlasError::Numeric { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<Artifact, Failure>;

struct Artifact {
    body: String,
    /// verify only: every check passed
    passed: bool,
}

impl Artifact {
    fn ok(body: String) -> Outcome {
        Ok(Artifact { body, passed: true })
    }
}

fn parse_pairs(text: &str, what: &str) -> std::result::Result<Vec<Complex64>, Failure> {
    let v: Vec<[f64; 2]> =
        serde_json::from_str(text).map_err(|e| Failure::Validation(format!("{what}: expected [[re, im], ...]: {e}")))?;
    Ok(v.into_iter().map(|[a, b]| Complex64::new(a, b)).collect())
}

fn spec_of(opts: &Opts) -> std::result::Result<EquationSpec, Failure> {
    let text = opts.poly.as_deref().ok_or_else(|| Failure::Validation("--poly is required".into()))?;
    Ok(validate(&parse_pairs(text, "--poly")?)?)
}

fn tolerances(opts: &Opts) -> std::result::Result<Tolerances, Failure> {
    let mut t = Tolerances::default();
    if let Some(x) = opts.tol {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Failure::Validation("--tol must be positive".into()));
        }
        t.volterra = x;
    }
    Ok(t)
}

fn radii(opts: &Opts, default_max: f64) -> std::result::Result<(f64, f64), Failure> {
    let r_lo = opts.rmin.unwrap_or(0.0);
    let r_hi = opts.rmax.unwrap_or(default_max);
    if !(r_lo >= 0.0 && r_hi > r_lo && r_hi.is_finite()) {
        return Err(Failure::Validation("need 0 <= --rmin < --rmax".into()));
    }
    Ok((r_lo, r_hi))
}

fn check_opts(opts: &Opts) -> std::result::Result<(), Failure> {
    tolerances(opts)?;
    for (name, v) in [("--rmin", opts.rmin), ("--rmax", opts.rmax)] {
        if let Some(x) = v {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Failure::Validation(format!("{name} must be finite and non-negative")));
            }
        }
    }
    if let (Some(a), Some(b)) = (opts.rmin, opts.rmax) {
        if a >= b {
            return Err(Failure::Validation("need --rmin < --rmax".into()));
        }
    }
    Ok(())
}

fn init_of(opts: &Opts, spec: &EquationSpec) -> std::result::Result<OdeState, Failure> {
    if let Some(text) = &opts.init {
        let v = parse_pairs(text, "--init")?;
        if v.len() != 2 {
            return Err(Failure::Validation("--init needs [[f_re, f_im], [fp_re, fp_im]]".into()));
        }
        return Ok(OdeState::new(Complex64::new(0.0, 0.0), v[0], v[1]));
    }
    Ok(subdominant_init(spec, opts.decay_sector.unwrap_or(1))?)
}

fn json<T: Serialize>(command: &str, tol: &Tolerances, data: T) -> std::result::Result<String, Failure> {
    Ok(Envelope::new(command, tol, data).to_json()?)
}

#[derive(Serialize)]
struct NormalizeOut {
    normalized: NormalizedEquation,
    q_coefficients: Vec<Complex64>,
    #[serde(rename = "M0")]
    m0: f64,
    #[serde(rename = "R_min")]
    r_min: f64,
}

#[derive(Serialize)]
struct LiouvilleSample {
    quadrature: LiouvilleEvaluation,
    series: LiouvilleEvaluation,
    rel_diff: f64,
    #[serde(rename = "T")]
    t: Complex64,
}

#[derive(Serialize)]
struct LiouvilleOut {
    j: usize,
    #[serde(rename = "R")]
    r: f64,
    z0: Complex64,
    #[serde(rename = "R_tilde")]
    r_tilde: f64,
    series: SeriesExpansion,
    c0_estimate: f64,
    samples: Vec<LiouvilleSample>,
    univalence: UnivalenceReport,
}

#[derive(Serialize)]
struct AsymptoteOut {
    j: usize,
    side: Side,
    e_plus: Vec<VolterraSample>,
    e_minus: Vec<VolterraSample>,
    zero_free: Vec<bool>,
}

#[derive(Serialize)]
struct ClassifyOut {
    classification: RayClassification,
}

#[derive(Serialize)]
struct ZerosOut {
    atlas: ZeroAtlas,
}

#[derive(Serialize)]
struct VerifyOut {
    report: VerifyReport,
    counting: Vec<hille_atlas::zeros::CountingReport>,
}

fn chart(spec: &EquationSpec, opts: &Opts, tol: &Tolerances) -> std::result::Result<LiouvilleContext, Failure> {
    let ne = spec.normalize();
    let r = opts.rmin.unwrap_or(10.0 * ne.r_min()).max(ne.r_min());
    Ok(LiouvilleContext::with_tolerances(ne, opts.sector.unwrap_or(0), r, tol.clone())?)
}

fn cmd_rays(opts: &Opts) -> Outcome {
    let spec = spec_of(opts)?;
    let dc: DerivedConstants = spec.derive_constants();
    Artifact::ok(json("rays", &tolerances(opts)?, dc)?)
}

fn cmd_normalize(opts: &Opts) -> Outcome {
    let spec = spec_of(opts)?;
    let ne = spec.normalize();
    let out = NormalizeOut {
        q_coefficients: ne.q_poly().coeffs,
        m0: ne.m0(),
        r_min: ne.r_min(),
        normalized: ne,
    };
    Artifact::ok(json("normalize", &tolerances(opts)?, out)?)
}

fn cmd_liouville(opts: &Opts) -> Outcome {
    let spec = spec_of(opts)?;
    let tol = tolerances(opts)?;
    let ctx = chart(&spec, opts, &tol)?;
    let r_hi = opts.rmax.unwrap_or(100.0 * ctx.r).max(6.0 * ctx.r);
    let mut samples = Vec::new();
    for k in 0..8 {
        let rad = 5.0 * ctx.r * (r_hi / (5.0 * ctx.r)).powf(k as f64 / 7.0);
        for off in [-0.5, 0.0, 0.5] {
            let z = Complex64::from_polar(rad, ctx.psi_j + off * ctx.half_width);
            let quad = ctx.forward(z)?;
            let ser = ctx.series_adaptive(z)?;
            samples.push(LiouvilleSample {
                rel_diff: (quad.zeta - ser.zeta).norm() / quad.zeta.norm(),
                t: ctx.perturbation_t(z)?,
                quadrature: quad,
                series: ser,
            });
        }
    }
    let out = LiouvilleOut {
        j: ctx.j,
        r: ctx.r,
        z0: ctx.z0,
        r_tilde: ctx.r_tilde,
        series: ctx.series_expansion().clone(),
        c0_estimate: ctx.estimate_c0(),
        univalence: ctx.univalence_probe(200, opts.seed)?,
        samples,
    };
    Artifact::ok(json("liouville", &tol, out)?)
}

fn cmd_asymptote(opts: &Opts) -> Outcome {
    let spec = spec_of(opts)?;
    let tol = tolerances(opts)?;
    let ctx = chart(&spec, opts, &tol)?;
    let side = if ctx.j % 2 == 0 { Side::Plus } else { Side::Minus };
    let sign = if side == Side::Plus { 1.0 } else { -1.0 };
    let x_lo = 2.0 * ctx.r_tilde.max(1.0);
    let x_hi = opts.rmax.unwrap_or(4.0 * x_lo).max(2.0 * x_lo);
    let ctx2 = ctx.clone();
    let f = move |zeta: Complex64| match ctx2
        .inverse_series(zeta)
        .or_else(|_| ctx2.inverse_unchecked(zeta))
        .and_then(|z| ctx2.perturbation_t(z))
    {
        Ok(t) => t,
        Err(_) => Complex64::new(f64::NAN, f64::NAN),
    };
    let pf = PerturbationField::from_fn(f, side);
    let grid: Vec<Complex64> = (0..8)
        .map(|k| Complex64::new(sign * x_lo * (x_hi / x_lo).powf(k as f64 / 7.0), 0.0))
        .collect();
    let pair = pf.asymptotic_pair(&grid, 40, tol.volterra)?;
    if pair.e_plus.iter().chain(&pair.e_minus).any(|s| !s.w.re.is_finite() || !s.w.im.is_finite()) {
        return Err(Failure::Numeric("perturbation undefined on the sweep".into()));
    }
    let out = AsymptoteOut {
        j: ctx.j,
        side,
        zero_free: pair.zero_free,
        e_plus: pair.e_plus,
        e_minus: pair.e_minus,
    };
    Artifact::ok(json("asymptote", &tol, out)?)
}

fn solution(opts: &Opts) -> std::result::Result<GlobalSolution, Failure> {
    let spec = spec_of(opts)?;
    let init = init_of(opts, &spec)?;
    Ok(GlobalSolution::with_tolerances(&spec, init, tolerances(opts)?)?)
}

fn locate(sol: &GlobalSolution, opts: &Opts, default_max: f64) -> std::result::Result<ZeroAtlas, Failure> {
    let (r_lo, r_hi) = radii(opts, default_max)?;
    let mut region = Region::new(r_lo, r_hi)?;
    if let Some(j) = opts.sector {
        region.sectors = Some(vec![j]);
    }
    Ok(locate_zeros_with(sol, &region, &LocateOptions::default())?)
}

fn cmd_zeros(opts: &Opts) -> Outcome {
    let sol = solution(opts)?;
    let atlas = locate(&sol, opts, 30.0)?;
    let body = match opts.format.unwrap_or(Format::Csv) {
        Format::Csv => zeros_csv(&atlas.zeros)?,
        Format::Json => json("zeros", &sol.tol, ZerosOut { atlas })?,
        Format::Svg => {
            let so = SvgOptions {
                c_lambda: atlas.c_lambda,
                r_lambda: atlas.r_lambda,
                r_max: atlas.region.r_hi,
                ..SvgOptions::default()
            };
            emit_svg(&atlas.zeros, &sol.dc, &so)?
        }
    };
    Artifact::ok(body)
}

fn cmd_classify(opts: &Opts) -> Outcome {
    let sol = solution(opts)?;
    let (_, r_max) = radii(opts, 30.0)?;
    let lo = LocateOptions { du: 2.0, ..LocateOptions::default() };
    let classification = classify_with(&sol, r_max, 5, &lo)?;
    Artifact::ok(json("classify", &sol.tol, ClassifyOut { classification })?)
}

fn cmd_verify(opts: &Opts) -> Outcome {
    let sol = solution(opts)?;
    let (_, r_max) = radii(opts, 40.0)?;
    let atlas = locate(&sol, opts, r_max)?;
    let dc = &sol.dc;
    let mut checks = Vec::new();
    let mut counting = Vec::new();
    let all_simple = atlas.zeros.iter().all(|z| z.winding == 1 && z.refined && z.residual <= 1e-9);
    checks.push(Check::flag(
        "zeros simple and refined",
        all_simple,
        format!("{} zeros", atlas.zeros.len()),
    ));
    let q = dc.q;
    let radii_list = [r_max / 4.0, r_max / 2.0, r_max];
    for j in 0..dc.theta.len() {
        let rep = counting_function(&atlas.zeros, dc, j, &radii_list, atlas.c_lambda, atlas.r_lambda);
        let n = rep.n_of_r[2];
        // only rays with zeros growing across both doublings are held to the law
        if rep.n_of_r[0] < rep.n_of_r[1] && rep.n_of_r[1] < n {
            checks.push(Check::relative(&format!("n(r_max) on ray {j}"), n as f64, rep.predicted_n[2], 0.05));
            checks.push(Check::relative(&format!("N/n on ray {j}"), rep.big_n_of_r[2] / n as f64, 1.0 / q, 0.05));
        }
        counting.push(rep);
    }
    let lo = LocateOptions { du: 2.0, ..LocateOptions::default() };
    let cls = classify_with(&sol, r_max, 3, &lo)?;
    checks.push(Check::flag("no adjacent decay sectors", !cls.adjacent_decay, "growth dichotomy"));
    checks.push(Check::flag(
        "shortage consistent with sector growth",
        cls.shortage_consistent,
        format!(
            "rays {:?}",
            cls.critical.iter().map(|c| c.tag).collect::<Vec<RayTag>>()
        ),
    ));
    let report = VerifyReport::new(checks);
    let passed = report.passed;
    let body = json("verify", &sol.tol, VerifyOut { report, counting })?;
    Ok(Artifact { body, passed })
}

/// Caps the global worker pool at HILLE_ATLAS_THREADS if set.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        let n = n.max(1);
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let opts = &cli.opts;
    let result = check_opts(opts).and_then(|_| match cli.command {
        Command::Rays => cmd_rays(opts),
        Command::Normalize => cmd_normalize(opts),
        Command::Liouville => cmd_liouville(opts),
        Command::Asymptote => cmd_asymptote(opts),
        Command::Zeros => cmd_zeros(opts),
        Command::Classify => cmd_classify(opts),
        Command::Verify => cmd_verify(opts),
    });
    match result {
        Ok(a) => {
            let written = match &opts.out {
                Some(p) => std::fs::write(p, &a.body).map_err(|e| e.to_string()),
                None => out.write_all(a.body.as_bytes()).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: cannot write output: {e}");
                return EXIT_VALIDATION;
            }
            if a.passed {
                EXIT_OK
            } else {
                let _ = writeln!(err, "verification failed");
                EXIT_NUMERIC
            }
        }
        Err(Failure::Validation(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_VALIDATION
        }
        Err(Failure::Numeric(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_NUMERIC
        }
    }
}
