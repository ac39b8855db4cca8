//! Command-line front end for the polarization-curve estimation harness.
//!
//! Verbs: `simulate` (generate data, no estimation), `estimate` (run an
//! estimator, optionally across seeds), `replay` (run on a measured CSV),
//! `diagnose` (excitation / linear-dependence checks on a regressor file),
//! `fit` (batch fits of the reduced models to an `i,v` sweep), `compare`
//! (per-interval curve error table), `presets` (built-in configurations).
//!
//! Exit codes: 0 success, 1 configuration or domain error, 2 numerical
//! divergence. Errors go to stderr as one-line JSON
//! (`{"error": kind, "message": ...}`) so scripts can dispatch on them.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use polcurve::diagnostics;
use polcurve::harness::{self, ExcitationMode, RunConfig};
use polcurve::io;
use polcurve::{Error, Result};

#[derive(Parser)]
#[command(
    name = "polcurve",
    version,
    about = "Online parameter estimation for fuel-cell polarization curves",
    after_help = "Errors are reported on stderr as one-line JSON; exit code 1 means a \
                  configuration or domain error, 2 means the estimator diverged."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a data set (input, output, regressor traces) without estimating.
    Simulate(RunArgs),
    /// Run an estimator on synthesized or replayed data and report the result.
    Estimate(EstimateArgs),
    /// Run the configured pipeline on a measured t,i_fc,v_fc record.
    Replay(ReplayArgs),
    /// Excitation and linear-dependence diagnostics on a regressor CSV.
    #[command(subcommand)]
    Diagnose(DiagnoseCmd),
    /// Batch least-squares fits of the reduced models to an i,v sweep.
    Fit(FitArgs),
    /// Tabulate per-interval errors of candidate curves against a reference.
    Compare(CompareArgs),
    /// List or show the built-in run configurations.
    #[command(subcommand)]
    Presets(PresetsCmd),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration name (see `presets list`).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override a config key, e.g. --set estimator.gamma0=12.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for traces, report.json and the plot script.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Run a Monte Carlo batch over these seeds (comma-separated).
    #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
    seeds: Vec<u64>,
    /// Worker threads for the Monte Carlo batch (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run configuration (TOML) with a [replay] section.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Measured record (CSV: t,i_fc,v_fc); overrides replay.path.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// Derivative-stack determinant series: near-zero means the regressor
    /// entries are linearly dependent and the parameters unidentifiable.
    Wronskian {
        /// Regressor CSV: `t,phi_1..phi_p` or `t,Y,phi_1..phi_p`.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Where to write the determinant series.
        #[arg(long, value_name = "PATH", default_value = "wronskian.csv")]
        out: PathBuf,
    },
    /// Windowed Gram-matrix eigenvalue check (interval or persistent).
    Excitation {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// "ie" integrates one window from the start; "pe" slides it.
        #[arg(long, default_value = "pe")]
        mode: String,
        /// Window length in seconds (ie: integration endpoint offset).
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// Pass threshold on min-eigenvalue / max-eigenvalue.
        #[arg(long, default_value_t = diagnostics::DEFAULT_EXCITATION_THRESHOLD)]
        threshold: f64,
        /// Optional CSV of per-window minimum eigenvalues.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Polarization sweep (CSV: i,v).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Open-circuit voltage for the exponential and power-law fits.
    #[arg(long = "e-oc", value_name = "VOLTS")]
    e_oc: f64,
    /// Optional JSON output path (fits always go to stdout too).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference sweep (CSV: i,v).
    #[arg(long, value_name = "PATH")]
    reference: PathBuf,
    /// Candidate curve as label=path.csv (repeatable).
    #[arg(long = "candidate", value_name = "LABEL=PATH")]
    candidates: Vec<String>,
    /// Current intervals as "lo:hi,lo:hi,..." (default 1:10,10:20,20:30).
    #[arg(long, value_name = "INTERVALS")]
    intervals: Option<String>,
    /// Optional JSON output path (the table always goes to stdout).
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PresetsCmd {
    /// Print the available preset names.
    List,
    /// Print one preset's full configuration as TOML.
    Show { name: String },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            emit_error("usage", &e.to_string());
            std::process::exit(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            let code = if matches!(e, Error::Divergence { .. }) { 2 } else { 1 };
            emit_error(error_kind(&e), &e.to_string());
            std::process::exit(code);
        }
    }
}

fn emit_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Divergence { .. } => "divergence",
        Error::Config(_) | Error::Dimension(_) => "config",
        Error::Csv(_) | Error::NonMonotoneTime { .. } => "csv",
        Error::Io(_) => "io",
        Error::NotExciting { .. } => "excitation",
        Error::LogDomain { .. }
        | Error::EocDominance { .. }
        | Error::NonFiniteSample { .. }
        | Error::SingularReparameterization(_) => "domain",
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate(args) => {
            let mut config = load_config(&args)?;
            // Data generation only: any configured estimator is ignored.
            config.estimator = None;
            if config.output_dir.is_none() {
                return Err(Error::Config(
                    "simulate writes traces; give --out or set output_dir".into(),
                ));
            }
            let out = harness::run(&config)?;
            print_json(&out.report)
        }
        Cmd::Estimate(args) => {
            let config = load_config(&args.run)?;
            if config.estimator.is_none() {
                return Err(Error::Config(
                    "estimate needs an [estimator] section in the config".into(),
                ));
            }
            if args.seeds.is_empty() {
                let out = harness::run(&config)?;
                print_json(&out.report)
            } else {
                let outs = harness::monte_carlo(&config, &args.seeds, args.jobs)?;
                let rows: Vec<serde_json::Value> = outs
                    .iter()
                    .map(|o| {
                        serde_json::json!({
                            "seed": o.report.seed,
                            "eta_hat": o.report.eta_hat,
                            "final_relative_error": o.report.final_relative_error,
                            "convergence_time": o.report.convergence_time,
                        })
                    })
                    .collect();
                print_json(&rows)
            }
        }
        Cmd::Replay(args) => {
            let mut config = RunConfig::from_toml_path(&args.config)?;
            for kv in &args.set {
                let (key, value) = split_kv(kv)?;
                harness::apply_override(&mut config, key, value)?;
            }
            if let Some(dir) = args.out {
                config.output_dir = Some(dir);
            }
            let out = harness::replay(&args.input, &config)?;
            print_json(&out.report)
        }
        Cmd::Diagnose(what) => diagnose(what),
        Cmd::Fit(args) => {
            let points = io::read_sweep(&args.input)?;
            let fits = harness::fit_all_sweep(&points, args.e_oc)?;
            if let Some(path) = &args.out {
                write_json(path, &fits)?;
            }
            print_json(&fits)
        }
        Cmd::Compare(args) => {
            let reference = io::read_sweep(&args.reference)?;
            let mut candidates = Vec::new();
            for spec in &args.candidates {
                let (label, path) = split_kv(spec)?;
                candidates.push((label.to_string(), io::read_sweep(Path::new(path))?));
            }
            if candidates.is_empty() {
                return Err(Error::Config("compare needs at least one --candidate".into()));
            }
            let intervals = match &args.intervals {
                Some(text) => parse_intervals(text)?,
                None => harness::DEFAULT_INTERVALS.to_vec(),
            };
            let table = harness::compare_curves(&reference, &candidates, &intervals)?;
            if let Some(path) = &args.json {
                write_json(path, &table)?;
            }
            print!("{}", table.render());
            Ok(())
        }
        Cmd::Presets(PresetsCmd::List) => {
            for name in harness::PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Cmd::Presets(PresetsCmd::Show { name }) => {
            let config = harness::preset(&name)?;
            print!("{}", config.to_toml_string()?);
            Ok(())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => RunConfig::from_toml_path(path)?,
        (None, Some(name)) => harness::preset(name)?,
        (Some(_), Some(_)) => {
            return Err(Error::Config("give --config or --preset, not both".into()))
        }
        (None, None) => return Err(Error::Config("give --config or --preset".into())),
    };
    for kv in &args.set {
        let (key, value) = split_kv(kv)?;
        harness::apply_override(&mut config, key, value)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = &args.out {
        config.output_dir = Some(dir.clone());
    }
    Ok(config)
}

fn diagnose(cmd: DiagnoseCmd) -> Result<()> {
    match cmd {
        DiagnoseCmd::Wronskian { input, out } => {
            let stream = read_regressor_file(&input)?;
            let dt = stream_dt(&stream)?;
            let series = diagnostics::wronskian_determinant(&stream, dt)?;
            io::write_wronskian(&out, &series)?;
            print_json(&serde_json::json!({
                "rows": series.times.len(),
                "transient_peak": series.transient_peak,
                "transient_peak_normalized": series.transient_peak_normalized,
                "output": out,
            }))
        }
        DiagnoseCmd::Excitation { input, mode, window, threshold, out } => {
            let stream = read_regressor_file(&input)?;
            let (mode, reports) = match mode.as_str() {
                "ie" => {
                    let t0 = stream.first().map_or(0.0, |s| s.t);
                    let t_end = stream.last().map_or(0.0, |s| s.t);
                    let t_c = (t0 + window).min(t_end);
                    let report = diagnostics::excitation_ie(&stream, t_c, threshold)?;
                    (ExcitationMode::Ie, vec![report])
                }
                "pe" => (
                    ExcitationMode::Pe,
                    diagnostics::excitation_pe(&stream, window, threshold)?,
                ),
                other => {
                    return Err(Error::Config(format!(
                        "excitation mode must be ie or pe, got {other:?}"
                    )))
                }
            };
            if let Some(path) = &out {
                io::write_excitation(path, &reports)?;
            }
            print_json(&harness::summarize_excitation(mode, &reports))
        }
    }
}

/// Accept both regressor stream layouts: `t,Y,phi_*` (as written by runs)
/// and bare `t,phi_*`.
fn read_regressor_file(path: &Path) -> Result<Vec<polcurve::regressor::RegressorSample>> {
    let file = std::fs::File::open(path)?;
    let mut header = String::new();
    std::io::BufReader::new(file).read_line(&mut header)?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(Error::Csv(format!(
            "{}: expected a t,phi_1..phi_p or t,Y,phi_1..phi_p header",
            path.display()
        )));
    }
    if cols[1] == "Y" {
        io::read_regressor_stream(path, cols.len() - 2)
    } else {
        io::read_phi_stream(path, cols.len() - 1)
    }
}

fn stream_dt(stream: &[polcurve::regressor::RegressorSample]) -> Result<f64> {
    if stream.len() < 2 {
        return Err(Error::Config("regressor file has fewer than two rows".into()));
    }
    Ok(stream[1].t - stream[0].t)
}

fn split_kv(text: &str) -> Result<(&str, &str)> {
    text.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {text:?}")))
}

fn parse_intervals(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut intervals = Vec::new();
    for part in text.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("interval {part:?} is not lo:hi")))?;
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad interval bound {lo:?}")))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad interval bound {hi:?}")))?;
        if !(lo < hi) {
            return Err(Error::Config(format!("interval {part:?} needs lo < hi")));
        }
        intervals.push((lo, hi));
    }
    if intervals.is_empty() {
        return Err(Error::Config("no intervals given".into()));
    }
    Ok(intervals)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization: {e}")))?;
    println!("{text}");
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
