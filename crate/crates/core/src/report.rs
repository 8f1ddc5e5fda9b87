//! Serialized outputs: JSON envelopes, the zero table as CSV and the SVG
//! zero atlas.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Tolerances, SCHEMA_VERSION};
use crate::equation::{e_n, DerivedConstants};
use crate::error::{AtlasError, Result};
use crate::zeros::ZeroRecord;

/// Every JSON document carries the schema version and the tolerances used;
/// the payload's fields sit beside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: String,
    pub command: String,
    pub tolerances: Tolerances,
    #[serde(flatten)]
    pub data: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, tolerances: &Tolerances, data: T) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            tolerances: tolerances.clone(),
            data,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| AtlasError::validation(e.to_string()))
    }
}

/// One pass/fail line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// |measured / expected - 1| <= tolerance.
    pub fn relative(name: &str, measured: f64, expected: f64, tolerance: f64) -> Check {
        let dev = (measured / expected - 1.0).abs();
        Check {
            name: name.to_string(),
            passed: dev <= tolerance,
            measured,
            expected,
            tolerance,
            detail: format!("relative deviation {dev:.4e}"),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.to_string(),
            passed,
            measured: if passed { 1.0 } else { 0.0 },
            expected: 1.0,
            tolerance: 0.0,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.6} expected {:.6} tol {:.1e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.expected,
            self.tolerance,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn new(checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        VerifyReport { checks, passed }
    }
}

pub const ZERO_CSV_HEADER: [&str; 6] = ["re", "im", "r", "nearest_j", "dist_to_translate", "in_lambda"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRow {
    pub re: f64,
    pub im: f64,
    pub r: f64,
    pub nearest_j: usize,
    pub dist_to_translate: f64,
    pub in_lambda: bool,
}

impl From<&ZeroRecord> for ZeroRow {
    fn from(z: &ZeroRecord) -> Self {
        ZeroRow {
            re: z.location.re,
            im: z.location.im,
            r: z.r,
            nearest_j: z.nearest_j,
            dist_to_translate: z.dist_to_translate,
            in_lambda: z.in_lambda,
        }
    }
}

/// UTF-8 CSV with a header row and LF line endings.
pub fn zeros_csv(zeros: &[ZeroRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(true)
        .from_writer(Vec::new());
    if zeros.is_empty() {
        w.write_record(ZERO_CSV_HEADER).map_err(csv_err)?;
    }
    for z in zeros {
        w.serialize(ZeroRow::from(z)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| AtlasError::validation(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AtlasError::validation(e.to_string()))
}

pub fn parse_zeros_csv(text: &str) -> Result<Vec<ZeroRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != ZERO_CSV_HEADER {
        return Err(AtlasError::validation(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> AtlasError {
    AtlasError::validation(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgOptions {
    pub c_lambda: f64,
    pub r_lambda: f64,
    pub r_max: f64,
    pub size: u32,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions { c_lambda: 10.0, r_lambda: 1.0, r_max: 30.0, size: 800 }
    }
}

struct Frame {
    center: Complex64,
    half: f64,
    size: f64,
}

impl Frame {
    fn map(&self, z: Complex64) -> (f64, f64) {
        let s = self.size / (2.0 * self.half);
        ((z.re - self.center.re + self.half) * s, (self.center.im + self.half - z.im) * s)
    }
}

/// SVG 1.1 picture of the critical translates, the Lambda_{j,c} bands and
/// the zeros. Output is a pure function of the input.
pub fn emit_svg(zeros: &[ZeroRecord], dc: &DerivedConstants, opts: &SvgOptions) -> Result<String> {
    if !(opts.r_max > 0.0 && opts.r_max.is_finite()) || opts.size == 0 {
        return Err(AtlasError::validation("svg needs r_max > 0 and a positive size"));
    }
    let origin = -dc.c;
    let reach = zeros.iter().map(|z| z.location.norm()).fold(opts.r_max + dc.c.norm(), f64::max);
    let frame = Frame { center: Complex64::new(0.0, 0.0), half: 1.05 * reach, size: opts.size as f64 };
    let np2 = dc.theta.len();
    let cap = PI / np2 as f64;
    let mut s = String::new();
    let n = opts.size;
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{n}" height="{n}" viewBox="0 0 {n} {n}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{n}" height="{n}" fill="white"/>"#);
    let (ax0, ay0) = frame.map(Complex64::new(-frame.half, 0.0));
    let (ax1, _) = frame.map(Complex64::new(frame.half, 0.0));
    let (bx0, by0) = frame.map(Complex64::new(0.0, -frame.half));
    let (_, by1) = frame.map(Complex64::new(0.0, frame.half));
    let _ = writeln!(
        s,
        r##"<g id="axes" stroke="#999999" stroke-width="1"><line x1="{ax0:.3}" y1="{ay0:.3}" x2="{ax1:.3}" y2="{ay0:.3}"/><line x1="{bx0:.3}" y1="{by0:.3}" x2="{bx0:.3}" y2="{by1:.3}"/></g>"##
    );
    let _ = writeln!(s, r##"<g id="lambda" fill="#4477aa" fill-opacity="0.15" stroke="none">"##);
    let r_lo = opts.r_lambda.max(1e-9);
    if r_lo < opts.r_max {
        for &th in &dc.theta {
            let m = 120;
            let mut upper = Vec::with_capacity(m + 1);
            let mut lower = Vec::with_capacity(m + 1);
            for k in 0..=m {
                let r = r_lo + (opts.r_max - r_lo) * k as f64 / m as f64;
                let w = (opts.c_lambda * e_n(r, dc.n)?).min(cap);
                upper.push(frame.map(origin + Complex64::from_polar(r, th + w)));
                lower.push(frame.map(origin + Complex64::from_polar(r, th - w)));
            }
            let pts: Vec<String> =
                upper.iter().chain(lower.iter().rev()).map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
            let _ = writeln!(s, r#"<polygon points="{}"/>"#, pts.join(" "));
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="translates" stroke="#cc3311" stroke-width="1.5">"##);
    let (ox, oy) = frame.map(origin);
    for &th in &dc.theta {
        let (x, y) = frame.map(origin + Complex64::from_polar(opts.r_max, th));
        let _ = writeln!(s, r#"<line x1="{ox:.3}" y1="{oy:.3}" x2="{x:.3}" y2="{y:.3}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="zeros" fill="#000000">"##);
    for z in zeros {
        let (x, y) = frame.map(z.location);
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}
