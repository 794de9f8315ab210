//! `chansim` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 converse gate violation,
//! 3 size out of reach, 4 solver did not converge.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chansim::harness::{
    export_report, report_to_csv, run_rf_experiment, run_sc_audit, ExperimentConfig, ExperimentReport,
    HarnessError, ReportFormat,
};
use chansim::{
    reliability_function, renyi_capacity, renyi_simulation_rate, strong_converse_exponent, variational_sc_exponent,
    Channel, RenyiOrder,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const WORKERS_ENV: &str = "CHANSIM_WORKERS";

#[derive(Parser)]
#[command(name = "chansim", version, about = "Channel simulation under Rényi divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rényi capacity I_α(W) with optimizers and duality gap.
    Capacity(ChannelArgs),
    /// One exponent value at a given rate.
    Exponent {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        rate: f64,
        #[arg(long, value_enum, default_value = "rf")]
        kind: ExponentChoice,
    },
    /// Builds schemes over the n-range and reports exact divergences.
    Simulate(ExperimentArgs),
    /// Checks every blocklength against the one-shot converse bound.
    Audit(ExperimentArgs),
    /// Exponent curves over a grid of rates, as CSV.
    Sweep {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 0.0)]
        rate_min: f64,
        #[arg(long, default_value_t = 1.0)]
        rate_max: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExponentChoice {
    /// Reliability function.
    Rf,
    /// Strong converse exponent.
    Sc,
    /// Variational form of the strong converse exponent (order below one).
    Variational,
    /// Simulation rate threshold.
    Rate,
}

#[derive(Args)]
struct ChannelArgs {
    /// Preset: bsc:p, bec:e, identity:k or constant:k.
    #[arg(long, conflicts_with = "channel_file")]
    channel: Option<String>,
    /// Whitespace-separated matrix, one row per input.
    #[arg(long)]
    channel_file: Option<PathBuf>,
    /// Order α; a number or `inf`.
    #[arg(long, default_value = "1")]
    alpha: String,
    #[arg(long, default_value_t = chansim::capacity::DEFAULT_TOL)]
    tol: f64,
}

impl ChannelArgs {
    fn channel(&self) -> Result<Channel, Failure> {
        match (&self.channel, &self.channel_file) {
            (Some(p), _) => Channel::from_preset(p).map_err(|e| Failure::usage(format!("--channel {p}: {e}"))),
            (None, Some(path)) => {
                let text = read(path)?;
                Channel::parse_matrix(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
            }
            (None, None) => Err(Failure::usage("one of --channel or --channel-file is required".into())),
        }
    }

    fn order(&self) -> Result<RenyiOrder, Failure> {
        self.alpha
            .parse()
            .map_err(|e| Failure::usage(format!("--alpha {}: {e}", self.alpha)))
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "channel_file")]
    channel: Option<String>,
    #[arg(long)]
    channel_file: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    n_min: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
    /// rf, sc, product-split, uniform or auto.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Report path; the CSV goes to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long, default_value = "csv")]
    format: String,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut table = match &self.config {
            Some(path) => read(path)?
                .parse::<toml::Table>()
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
            None => toml::Table::new(),
        };
        if let Some(c) = &self.channel {
            table.remove("channel-matrix");
            table.insert("channel".into(), c.clone().into());
        }
        if let Some(path) = &self.channel_file {
            let w = Channel::parse_matrix(&read(path)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let rows: Vec<toml::Value> = w
                .rows()
                .into_iter()
                .map(|r| toml::Value::Array(r.into_iter().map(toml::Value::Float).collect()))
                .collect();
            table.remove("channel");
            table.insert("channel-matrix".into(), toml::Value::Array(rows));
        }
        if let Some(a) = &self.alpha {
            let value = match a.parse::<f64>() {
                Ok(v) if v.is_finite() => toml::Value::Float(v),
                _ => toml::Value::String(a.clone()),
            };
            table.insert("alpha".into(), value);
        }
        let mut put_f = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                table.insert(k.into(), toml::Value::Float(v));
            }
        };
        put_f("rate", self.rate);
        put_f("s", self.s);
        put_f("delta", self.delta);
        put_f("tolerance", self.tolerance);
        for (k, v) in [("n-min", self.n_min), ("n-max", self.n_max)] {
            if let Some(v) = v {
                table.insert(k.into(), toml::Value::Integer(v.into()));
            }
        }
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| Failure::usage("--seed must fit in 63 bits".into()))?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        if let Some(s) = &self.scheme {
            table.insert("scheme".into(), s.clone().into());
        }
        if let Some(o) = &self.output {
            table.insert("output".into(), o.display().to_string().into());
        }
        let text = toml::to_string(&table).map_err(|e| Failure::usage(e.to_string()))?;
        ExperimentConfig::from_toml(&text).map_err(Failure::from)
    }

    fn format(&self) -> Result<ReportFormat, Failure> {
        self.format.parse().map_err(Failure::usage)
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: String) -> Self {
        Failure { code: 1, message }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn out(text: &str) -> Result<(), Failure> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::usage(e.to_string())),
        _ => Ok(()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("values serialize")
}

fn exponent_failure(e: chansim::exponents::ExponentError) -> Failure {
    HarnessError::from(e).into()
}

fn emit_report(report: &ExperimentReport, cfg: &ExperimentConfig, format: ReportFormat) -> Result<(), Failure> {
    match &cfg.output {
        Some(path) => export_report(report, format, path)?,
        None => out(&report_to_csv(report))?,
    }
    if let Some(fit) = report.fit {
        eprintln!(
            "slope {:.6} ± {:.6} over {} points (rms residual {:.3e})",
            fit.slope, fit.band, fit.points, fit.residual
        );
    }
    eprintln!("theory exponent {}; regime {}", report.theory_exponent, report.regime);
    for g in &report.gates {
        eprintln!("gate {}: {} ({})", g.gate, if g.passed { "pass" } else { "FAIL" }, g.detail);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.gates_passed() {
        return Err(Failure {
            code: 2,
            message: "gate violation".into(),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Capacity(args) => {
            let w = args.channel()?;
            let res = renyi_capacity(&w, args.order()?, args.tol)
                .map_err(|e| exponent_failure(chansim::exponents::ExponentError::Capacity(e)))?;
            out(&format!("{}\n", json(&res)))?;
        }
        Command::Exponent { channel, rate, kind } => {
            let w = channel.channel()?;
            let order = channel.order()?;
            let text = match kind {
                ExponentChoice::Rf => json(&reliability_function(&w, rate, order).map_err(exponent_failure)?),
                ExponentChoice::Sc => json(&strong_converse_exponent(&w, rate, order).map_err(exponent_failure)?),
                ExponentChoice::Variational => {
                    json(&variational_sc_exponent(&w, rate, order.alpha()).map_err(exponent_failure)?)
                }
                ExponentChoice::Rate => json(&renyi_simulation_rate(&w, order).map_err(exponent_failure)?),
            };
            out(&format!("{text}\n"))?;
        }
        Command::Simulate(args) => {
            let cfg = args.config()?;
            let report = run_rf_experiment(&cfg)?;
            emit_report(&report, &cfg, args.format()?)?;
        }
        Command::Audit(args) => {
            let cfg = args.config()?;
            let report = run_sc_audit(&cfg)?;
            emit_report(&report, &cfg, args.format()?)?;
        }
        Command::Sweep {
            channel,
            rate_min,
            rate_max,
            steps,
            output,
        } => {
            let w = channel.channel()?;
            let order = channel.order()?;
            if steps < 2 || !(rate_max > rate_min) || rate_min < 0.0 {
                return Err(Failure::usage("need steps >= 2 and 0 <= rate-min < rate-max".into()));
            }
            let mut text = String::from("rate,alpha,E_rf,E_sc\n");
            for i in 0..steps {
                let r = rate_min + (rate_max - rate_min) * i as f64 / (steps - 1) as f64;
                let rf = reliability_function(&w, r, order).map_err(exponent_failure)?;
                let sc = strong_converse_exponent(&w, r, order).map_err(exponent_failure)?;
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt12(r),
                    order,
                    fmt_ext(rf.value),
                    fmt_ext(sc.value)
                ));
            }
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
                None => out(&text)?,
            }
        }
    }
    Ok(())
}

fn fmt12(x: f64) -> String {
    format!("{:.11e}", x)
}

fn fmt_ext(x: chansim::Extended) -> String {
    match x {
        chansim::Extended::Infinite => "inf".into(),
        chansim::Extended::Finite(v) => fmt12(v),
    }
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n = match v.parse::<usize>() {
        Ok(n) if n > 0 => n,
        _ => return Err(Failure::usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_workers().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
