//! Experiment runners and report export.
//!
//! Reports are written as CSV or JSON lines with UTF-8, LF line endings, a
//! `.` decimal point and 12 significant digits. Values held in memory are
//! already rounded to that precision, so a written report parses back equal.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::CapacityError;
use crate::channel::Channel;
use crate::exponents::{reliability_function, strong_converse_exponent, ExponentError};
use crate::measures::{Extended, MeasureError, RenyiOrder};
use crate::par;
use crate::protocol::{
    build_product_split, build_rf_scheme, build_sc_scheme, build_uniform_fallback, one_shot_converse_bound,
    rf_case1_bound, simulation_performance, ProtocolError, SimulationScheme, DEFAULT_DELTA,
};
use crate::types::TypesError;

/// CSV header, in column order.
pub const CSV_HEADER: &str =
    "n,c_bits,rate,alpha,D_value_bits,bound_lower,bound_upper,theory_exponent,slope,verdict";
/// Divergences below this count as zero when classifying the regime.
pub const EXACT_THRESHOLD: f64 = 1e-9;
const SIG_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

impl HarnessError {
    /// `3` for sizes out of reach, `4` for solver non-convergence, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        let exponent_code = |e: &ExponentError| match e {
            ExponentError::Capacity(CapacityError::NotConverged { .. }) => 4,
            ExponentError::Budget { .. } => 3,
            _ => 1,
        };
        match self {
            HarnessError::Exponent(e) => exponent_code(e),
            HarnessError::Protocol(p) => match p {
                ProtocolError::Exponent(e) | ProtocolError::InnerSolver { source: e, .. } => exponent_code(e),
                ProtocolError::CapExceeded { .. }
                | ProtocolError::Infeasible { .. }
                | ProtocolError::BudgetOverflow { .. }
                | ProtocolError::Types(TypesError::CapExceeded { .. }) => 3,
                _ => 1,
            },
            _ => 1,
        }
    }
}

/// Which scheme an experiment builds at each blocklength.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeChoice {
    /// Reliability scheme.
    Rf,
    /// Per-type tilted scheme, `α < 1` only.
    Sc,
    ProductSplit,
    Uniform,
    /// `sc` below order one, product split at or above it when `r < I_α`,
    /// `rf` otherwise.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset such as `bsc:0.1`.
    #[serde(default)]
    pub channel: Option<String>,
    /// Explicit matrix, one row per input.
    #[serde(default)]
    pub channel_matrix: Option<Vec<Vec<f64>>>,
    pub alpha: RenyiOrder,
    pub rate: f64,
    pub n_min: u32,
    pub n_max: u32,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeChoice,
    /// `s` of the rf scheme; defaults to `α − 1` above order one and 1 otherwise.
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Slack allowed in the converse gate.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_scheme() -> SchemeChoice {
    SchemeChoice::Auto
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_tolerance() -> f64 {
    1e-9
}

impl ExperimentConfig {
    pub fn new(channel: &str, alpha: RenyiOrder, rate: f64, n_min: u32, n_max: u32) -> Self {
        ExperimentConfig {
            channel: Some(channel.to_string()),
            channel_matrix: None,
            alpha,
            rate,
            n_min,
            n_max,
            scheme: SchemeChoice::Auto,
            s: None,
            delta: DEFAULT_DELTA,
            seed: 0,
            tolerance: default_tolerance(),
            output: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(HarnessError::Config(format!(
                "n-range [{}, {}] is empty or starts at zero",
                self.n_min, self.n_max
            )));
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(HarnessError::Config(format!("rate must be nonnegative, got {}", self.rate)));
        }
        if self.channel.is_some() == self.channel_matrix.is_some() {
            return Err(HarnessError::Config("give exactly one of channel and channel-matrix".into()));
        }
        self.build_channel().map(|_| ())
    }

    pub fn build_channel(&self) -> Result<Channel, HarnessError> {
        match (&self.channel, &self.channel_matrix) {
            (Some(p), None) => Ok(Channel::from_preset(p)?),
            (None, Some(m)) => Ok(Channel::new(m.clone())?),
            _ => Err(HarnessError::Config("give exactly one of channel and channel-matrix".into())),
        }
    }

    fn rf_s(&self) -> Extended {
        match (self.s, self.alpha) {
            (Some(s), _) if s.is_infinite() => Extended::Infinite,
            (Some(s), _) => Extended::Finite(s),
            (None, RenyiOrder::Infinity) => Extended::Infinite,
            (None, RenyiOrder::Finite(a)) if a > 1.0 => Extended::Finite(a - 1.0),
            _ => Extended::Finite(1.0),
        }
    }

    fn describe_channel(&self) -> String {
        match (&self.channel, &self.channel_matrix) {
            (Some(p), _) => p.clone(),
            (_, Some(m)) => format!("matrix {}x{}", m.len(), m.first().map_or(0, Vec::len)),
            _ => String::new(),
        }
    }
}

/// One blocklength of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub n: u32,
    pub c_bits: f64,
    pub rate: f64,
    pub alpha: RenyiOrder,
    #[serde(rename = "D_value_bits")]
    pub d_value_bits: Extended,
    /// One-shot converse bound at the scheme's bit cost.
    pub bound_lower: f64,
    /// Scheme-specific upper bound, when one is known.
    pub bound_upper: Option<f64>,
    pub theory_exponent: Extended,
    pub slope: Option<f64>,
    pub verdict: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Least-squares slope of `−log₂ D` against `n`.
    pub slope: f64,
    /// Root mean square residual of the fit.
    pub residual: f64,
    /// Two standard errors of the slope.
    pub band: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub gate: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub channel: String,
    pub records: Vec<ReportRecord>,
    pub fit: Option<SlopeFit>,
    pub theory_exponent: Extended,
    pub regime: String,
    pub gates: Vec<GateVerdict>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn gates_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }
}

/// Rounds to 12 significant digits through the text form used on disk.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_sig(x).parse().expect("formatted float parses")
}

fn format_sig(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{:.*e}", SIG_DIGITS - 1, x)
    }
}

fn round_ext(x: Extended) -> Extended {
    match x {
        Extended::Finite(v) => Extended::Finite(round_sig(v)),
        e => e,
    }
}

/// Least squares on the last `⌈half⌉` of the points with finite positive `D`.
pub fn fit_slope(points: &[(u32, f64)]) -> Option<SlopeFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, d)| d.is_finite() && *d > 0.0)
        .map(|&(n, d)| (n as f64, -d.log2()))
        .collect();
    let take = usable.len().div_ceil(2);
    let pts = &usable[usable.len() - take..];
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let band = if pts.len() > 2 {
        2.0 * (sse / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(SlopeFit {
        slope,
        residual: (sse / m).sqrt(),
        band,
        points: pts.len(),
    })
}

struct NPoint {
    n: u32,
    c_bits: f64,
    d: Extended,
    lower: f64,
    upper: Option<f64>,
}

fn is_infeasible(e: &ProtocolError) -> bool {
    matches!(
        e,
        ProtocolError::CapExceeded { .. }
            | ProtocolError::Infeasible { .. }
            | ProtocolError::BudgetOverflow { .. }
            | ProtocolError::Types(TypesError::CapExceeded { .. })
    )
}

fn below_order_one(o: RenyiOrder) -> bool {
    matches!(o, RenyiOrder::Zero) || matches!(o, RenyiOrder::Finite(a) if a < 1.0)
}

fn build_scheme(cfg: &ExperimentConfig, w: &Channel, n: u32, choice: SchemeChoice) -> Result<SimulationScheme, ProtocolError> {
    match choice {
        SchemeChoice::Rf => build_rf_scheme(w, n, cfg.rate, cfg.rf_s()),
        SchemeChoice::Sc => build_sc_scheme(w, n, cfg.rate, cfg.alpha.alpha(), cfg.delta),
        SchemeChoice::ProductSplit => build_product_split(w, n, cfg.rate, cfg.alpha, cfg.delta),
        SchemeChoice::Uniform => build_uniform_fallback(w, n),
        SchemeChoice::Auto => unreachable!("resolved before building"),
    }
}

fn resolve_choice(cfg: &ExperimentConfig, w: &Channel) -> Result<SchemeChoice, HarnessError> {
    if cfg.scheme != SchemeChoice::Auto {
        return Ok(cfg.scheme);
    }
    if below_order_one(cfg.alpha) {
        return Ok(SchemeChoice::Sc);
    }
    let i = crate::exponents::capacity_checked(w, cfg.alpha)?.value;
    Ok(if cfg.rate < i {
        SchemeChoice::ProductSplit
    } else {
        SchemeChoice::Rf
    })
}

/// Builds and evaluates one scheme per `n`, in parallel. Stops at the first
/// blocklength that is out of reach and records a warning; fails if that is
/// `n_min` itself.
fn evaluate_range(cfg: &ExperimentConfig, w: &Channel, choice: SchemeChoice) -> Result<(Vec<NPoint>, Vec<String>), HarnessError> {
    let ns: Vec<u32> = (cfg.n_min..=cfg.n_max).collect();
    let results = par::map(ns, |n| -> Result<NPoint, ProtocolError> {
        let scheme = build_scheme(cfg, w, n, choice)?;
        let d = simulation_performance(w, &scheme, cfg.alpha)?;
        let c_bits = scheme.communication_bits();
        let lower = one_shot_converse_bound(w, n, c_bits, cfg.alpha)?;
        let case1_order = match cfg.rf_s() {
            Extended::Finite(s) => RenyiOrder::from_t(s).ok(),
            Extended::Infinite => None,
        };
        let upper = if case1_order == Some(cfg.alpha) {
            rf_case1_bound(w, &scheme)?
        } else {
            None
        };
        Ok(NPoint {
            n,
            c_bits,
            d,
            lower,
            upper,
        })
    });
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => points.push(p),
            Err(e) if is_infeasible(&e) && i > 0 => {
                warnings.push(format!("range truncated at n = {}: {e}", cfg.n_min + i as u32));
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((points, warnings))
}

fn converse_gate(points: &[NPoint], tol: f64) -> GateVerdict {
    let bad: Vec<u32> = points
        .iter()
        .filter(|p| match p.d {
            Extended::Infinite => false,
            Extended::Finite(d) => d < p.lower - tol,
        })
        .map(|p| p.n)
        .collect();
    GateVerdict {
        gate: "one-shot-converse".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("D >= bound at all {} blocklengths", points.len())
        } else {
            format!("violations at n = {bad:?}")
        },
    }
}

fn assemble(
    cfg: &ExperimentConfig,
    points: Vec<NPoint>,
    warnings: Vec<String>,
    theory: Extended,
    fit: Option<SlopeFit>,
    regime: String,
    mut gates: Vec<GateVerdict>,
) -> ExperimentReport {
    gates.insert(0, converse_gate(&points, cfg.tolerance));
    let row_verdict = |p: &NPoint| -> String {
        let violated = matches!(p.d, Extended::Finite(d) if d < p.lower - cfg.tolerance);
        if violated {
            "gate-violation".into()
        } else {
            regime.clone()
        }
    };
    let records = points
        .iter()
        .map(|p| ReportRecord {
            n: p.n,
            c_bits: round_sig(p.c_bits),
            rate: round_sig(cfg.rate),
            alpha: cfg.alpha,
            d_value_bits: round_ext(p.d),
            bound_lower: round_sig(p.lower),
            bound_upper: p.upper.map(round_sig),
            theory_exponent: round_ext(theory),
            slope: fit.map(|f| round_sig(f.slope)),
            verdict: row_verdict(p),
        })
        .collect();
    ExperimentReport {
        channel: cfg.describe_channel(),
        records,
        fit,
        theory_exponent: theory,
        regime,
        gates,
        warnings,
    }
}

/// Reliability experiment: exact `max_x D_α` of the scheme per `n`, the
/// decay slope of `−log₂ D`, and the regime it indicates.
pub fn run_rf_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.check()?;
    let w = cfg.build_channel()?;
    let choice = match cfg.scheme {
        SchemeChoice::Auto => SchemeChoice::Rf,
        c => c,
    };
    let (points, warnings) = evaluate_range(cfg, &w, choice)?;
    let e_rf = reliability_function(&w, cfg.rate, cfg.alpha)?.value;
    let s = cfg.rf_s();
    let achievable = match s {
        Extended::Finite(s) => {
            let i = crate::exponents::capacity_checked(&w, RenyiOrder::from_t(s).map_err(ExponentError::from)?)?.value;
            Extended::Finite((s * (cfg.rate - i)).max(0.0))
        }
        Extended::Infinite => Extended::Finite(0.0),
    };
    let theory = e_rf.max(achievable);
    let ds: Vec<(u32, f64)> = points.iter().map(|p| (p.n, p.d.to_f64())).collect();
    let fit = fit_slope(&ds);
    let regime = if points.iter().all(|p| p.d.to_f64() <= EXACT_THRESHOLD) {
        "exact-regime".to_string()
    } else {
        match fit {
            Some(f) if f.slope - f.band > 0.0 => "decay".to_string(),
            _ => "no-decay".to_string(),
        }
    };
    let mut gates = Vec::new();
    let over: Vec<u32> = points
        .iter()
        .filter(|p| matches!((p.upper, p.d), (Some(u), Extended::Finite(d)) if d > u + cfg.tolerance))
        .map(|p| p.n)
        .collect();
    if points.iter().any(|p| p.upper.is_some()) {
        gates.push(GateVerdict {
            gate: "case1-upper-bound".into(),
            passed: over.is_empty(),
            detail: if over.is_empty() {
                "D below the scheme bound at every n".into()
            } else {
                format!("bound exceeded at n = {over:?}")
            },
        });
    }
    Ok(assemble(cfg, points, warnings, theory, fit, regime, gates))
}

/// Converse audit: checks the one-shot bound per `n` and tracks `D/n`
/// against the strong converse exponent.
pub fn run_sc_audit(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.check()?;
    let w = cfg.build_channel()?;
    let choice = resolve_choice(cfg, &w)?;
    let (points, warnings) = evaluate_range(cfg, &w, choice)?;
    let theory = strong_converse_exponent(&w, cfg.rate, cfg.alpha)?.value;
    let last = points.last().map(|p| p.d.to_f64() / p.n as f64);
    let regime = match last {
        Some(v) if v.is_finite() => format!("growth-{}", format_sig(round_sig(v))),
        _ => "growth-unknown".to_string(),
    };
    Ok(assemble(cfg, points, warnings, theory, None, regime, Vec::new()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

fn fmt_ext(x: Extended) -> String {
    match x {
        Extended::Infinite => "inf".into(),
        Extended::Finite(v) => format_sig(v),
    }
}

/// One CSV line, without the newline.
pub fn record_to_csv(r: &ReportRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.n,
        format_sig(r.c_bits),
        format_sig(r.rate),
        r.alpha,
        fmt_ext(r.d_value_bits),
        format_sig(r.bound_lower),
        fmt_opt(r.bound_upper),
        fmt_ext(r.theory_exponent),
        fmt_opt(r.slope),
        r.verdict
    )
}

/// Whole CSV document; header only for an empty report.
pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        out.push_str(&record_to_csv(r));
        out.push('\n');
    }
    out
}

/// One JSON object per record.
pub fn report_to_jsonl(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for r in &report.records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(format!("unknown format {other:?}; expected csv or jsonl")),
        }
    }
}

pub fn export_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let text = match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::JsonLines => report_to_jsonl(report),
    };
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}

fn parse_f64(field: &str) -> Result<f64, String> {
    match field {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        s => s.parse().map_err(|_| format!("bad number {s:?}")),
    }
}

fn parse_opt(field: &str) -> Result<Option<f64>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field).map(Some)
    }
}

/// Parses a CSV document written by [`report_to_csv`].
pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<ReportRecord>, HarnessError> {
    let err = |line: usize, message: String| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(err(1, "unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(lineno, format!("expected 10 fields, got {}", f.len())));
        }
        let rec = (|| -> Result<ReportRecord, String> {
            Ok(ReportRecord {
                n: f[0].parse().map_err(|_| "bad n".to_string())?,
                c_bits: parse_f64(f[1])?,
                rate: parse_f64(f[2])?,
                alpha: f[3].parse().map_err(|e| format!("{e}"))?,
                d_value_bits: Extended::from_f64(parse_f64(f[4])?),
                bound_lower: parse_f64(f[5])?,
                bound_upper: parse_opt(f[6])?,
                theory_exponent: Extended::from_f64(parse_f64(f[7])?),
                slope: parse_opt(f[8])?,
                verdict: f[9].to_string(),
            })
        })()
        .map_err(|m| err(lineno, m))?;
        out.push(rec);
    }
    Ok(out)
}

/// Parses a JSON-lines document written by [`report_to_jsonl`].
pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<ReportRecord>, HarnessError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        ReportFormat::Csv => parse_csv(&text, path),
        ReportFormat::JsonLines => parse_jsonl(&text, path),
    }
}
