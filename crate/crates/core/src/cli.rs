//! Command-line front end.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{sweep, FerCurve};
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::output::{format_f64, render_curves, to_json_document, write_file};
use crate::rate::ServerError;
use crate::schemes::AnalyzedScheme;
use crate::simulate::{run_mc, McConfig};

#[derive(Debug, Parser)]
#[command(name = "nfv-fer", version, about = "Frame error rate versus latency for coded distributed decoding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: GlobalOptions,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Code metrics and per-server error probabilities.
    Analyze,
    /// Both bounds over the time grid, one file per scheme plus a merged file.
    Sweep,
    /// Sweep plus Monte Carlo estimates.
    Simulate,
    /// Summary of where each scheme's union bound reaches target levels.
    Compare,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalOptions {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.path`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Monte Carlo seed, overriding `mc.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials, overriding `mc.trials`.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl GlobalOptions {
    /// Loads the config and applies command-line overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| Error::config("--config", "a configuration file is required"))?;
        let mut config = ExperimentConfig::load(path)?;
        if let Some(out) = &self.out {
            config.output.path = out.clone();
        }
        if let Some(format) = self.format {
            config.output.format = format;
        }
        if self.seed.is_some() || self.trials.is_some() {
            let mc = config.mc.get_or_insert(McConfig {
                trials: 1,
                seed: 0,
                noise_dim: None,
                mode: Default::default(),
            });
            if let Some(seed) = self.seed {
                mc.seed = seed;
            }
            if let Some(trials) = self.trials {
                mc.trials = trials;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// Runs a parsed command line, printing a short report to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.options.resolve()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = cli.options.threads {
        if threads == 0 {
            return Err(Error::config("--threads", "must be >= 1"));
        }
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("--threads", e.to_string()))?;
    let report = pool.install(|| execute(cli.command, &config))?;
    print!("{report}");
    Ok(())
}

/// Runs `command` and returns the text report.
pub fn execute(command: Command, config: &ExperimentConfig) -> Result<String> {
    match command {
        Command::Analyze => cmd_analyze(config),
        Command::Sweep => cmd_sweep(config),
        Command::Simulate => cmd_simulate(config),
        Command::Compare => cmd_compare(config),
    }
}

#[derive(Debug, Serialize)]
pub struct AnalyzeRow {
    pub scheme: String,
    pub k: usize,
    pub n_servers: usize,
    pub n: usize,
    pub d_min: usize,
    pub chi: usize,
    pub field_prime: u32,
    pub column_sq_norms: Vec<u64>,
    pub servers: Vec<ServerError>,
    pub asymptotic_approximation: bool,
    pub notes: Vec<String>,
}

impl AnalyzeRow {
    pub fn from_scheme(s: &AnalyzedScheme) -> Self {
        Self {
            scheme: s.name().to_string(),
            k: s.scheme.k,
            n_servers: s.n_servers(),
            n: s.scheme.n,
            d_min: s.metrics.d_min,
            chi: s.metrics.chromatic_number,
            field_prime: s.scheme.code.field_prime(),
            column_sq_norms: s.metrics.column_sq_norms.clone(),
            servers: s.profile.servers.clone(),
            asymptotic_approximation: s.profile.asymptotic_approximation,
            notes: s.scheme.notes.clone(),
        }
    }
}

pub fn analyze_rows(config: &ExperimentConfig) -> Result<Vec<AnalyzeRow>> {
    Ok(config.analyzed_schemes()?.iter().map(AnalyzeRow::from_scheme).collect())
}

fn out_file(config: &ExperimentConfig, stem: &str, ext: &str) -> PathBuf {
    config.output.path.join(format!("{stem}.{ext}"))
}

fn cmd_analyze(config: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Body<'a> {
        schemes: &'a [AnalyzeRow],
    }
    let rows = analyze_rows(config)?;
    let mut text = String::new();
    writeln!(
        text,
        "{:<10} {:>3} {:>3} {:>5} {:>5} {:>3} {:>8}  {:<24} {:<12} {:<12}",
        "scheme", "K", "N", "n", "d_min", "chi", "field", "norms", "max P_e", "min R*"
    )
    .unwrap();
    for r in &rows {
        let max_pe = r.servers.iter().map(|s| s.p_e_ml).fold(0.0, f64::max);
        let min_rate = r.servers.iter().map(|s| s.comp_rate).fold(f64::INFINITY, f64::min);
        let norms = summarize(&r.column_sq_norms);
        writeln!(
            text,
            "{:<10} {:>3} {:>3} {:>5} {:>5} {:>3} {:>8}  {:<24} {:<12.4e} {:<12.6}",
            r.scheme, r.k, r.n_servers, r.n, r.d_min, r.chi, r.field_prime, norms, max_pe, min_rate
        )
        .unwrap();
    }
    let path = out_file(config, "analyze", "json");
    write_file(&path, &to_json_document(config, Body { schemes: &rows })?)?;
    writeln!(text, "wrote {}", path.display()).unwrap();
    Ok(text)
}

fn summarize(values: &[u64]) -> String {
    let parts: Vec<String> = values.iter().map(u64::to_string).collect();
    parts.join("/")
}

/// Bound curves for every scheme, in config order.
pub fn sweep_curves(config: &ExperimentConfig) -> Result<Vec<FerCurve>> {
    let grid = config.grid()?;
    let schemes = config.analyzed_schemes()?;
    schemes
        .par_iter()
        .map(|s| sweep(s, &config.latency, &grid, &config.bounds))
        .collect()
}

/// Bound curves with Monte Carlo estimates attached.
pub fn simulate_curves(config: &ExperimentConfig) -> Result<Vec<FerCurve>> {
    let mc = config
        .mc
        .as_ref()
        .ok_or_else(|| Error::config("mc", "simulate needs an [mc] section or --trials"))?;
    let grid = config.grid()?;
    let ch = config.channel_params()?;
    let schemes = config.analyzed_schemes()?;
    let mut curves = Vec::with_capacity(schemes.len());
    for s in &schemes {
        let mut curve = sweep(s, &config.latency, &grid, &config.bounds)?;
        curve.attach_mc(run_mc(s, &ch, &config.latency, mc, &grid)?)?;
        curves.push(curve);
    }
    Ok(curves)
}

/// Writes one file per curve plus the merged `comparison` file and returns
/// the paths in write order.
pub fn write_curves(config: &ExperimentConfig, curves: &[FerCurve]) -> Result<Vec<PathBuf>> {
    let format = config.output.format;
    let ext = format.extension();
    let mut written = Vec::with_capacity(curves.len() + 1);
    for curve in curves {
        let path = out_file(config, &curve.metadata.scheme, ext);
        write_file(&path, &render_curves(std::slice::from_ref(curve), config, format)?)?;
        written.push(path);
    }
    let path = out_file(config, "comparison", ext);
    write_file(&path, &render_curves(curves, config, format)?)?;
    written.push(path);
    Ok(written)
}

fn listing(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("wrote {}\n", p.display())).collect()
}

fn cmd_sweep(config: &ExperimentConfig) -> Result<String> {
    let curves = sweep_curves(config)?;
    Ok(listing(&write_curves(config, &curves)?))
}

fn cmd_simulate(config: &ExperimentConfig) -> Result<String> {
    let curves = simulate_curves(config)?;
    Ok(listing(&write_curves(config, &curves)?))
}

/// Union-bound levels reported by `compare`.
pub const TARGETS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scheme: String,
    pub d_min: usize,
    pub chi: usize,
    pub n: usize,
    pub ub_floor: Option<f64>,
    pub ldb_threshold: Option<f64>,
    /// First grid time with `UB <= target`, per entry of `TARGETS`.
    pub first_reach: Vec<Option<f64>>,
    /// Grid points where this scheme alone has the smallest union bound.
    pub lead_points: usize,
}

pub fn compare_rows(curves: &[FerCurve]) -> Vec<CompareRow> {
    let n_points = curves.first().map_or(0, |c| c.points.len());
    let mut leads = vec![0usize; curves.len()];
    for k in 0..n_points {
        let values: Vec<f64> = curves
            .iter()
            .map(|c| c.points[k].ub.unwrap_or(f64::INFINITY))
            .collect();
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
        if let [only] = winners[..] {
            leads[only] += 1;
        }
    }
    curves
        .iter()
        .zip(leads)
        .map(|(c, lead_points)| CompareRow {
            scheme: c.metadata.scheme.clone(),
            d_min: c.metadata.d_min,
            chi: c.metadata.chi,
            n: c.metadata.n,
            ub_floor: c.metadata.ub_floor,
            ldb_threshold: c.metadata.ldb_threshold,
            first_reach: TARGETS
                .iter()
                .map(|&target| {
                    c.points
                        .iter()
                        .find(|p| p.ub.is_some_and(|u| u <= target))
                        .map(|p| p.t)
                })
                .collect(),
            lead_points,
        })
        .collect()
}

fn compare_csv(rows: &[CompareRow], config: &ExperimentConfig) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# nfv-fer {}", crate::output::VERSION).unwrap();
    writeln!(out, "# config: {}", config.to_json()?).unwrap();
    let targets: Vec<String> = TARGETS.iter().map(|t| format!("t_ub_{t:e}")).collect();
    writeln!(
        out,
        "scheme,d_min,chi,n,ub_floor,ldb_threshold,{},lead_points",
        targets.join(",")
    )
    .unwrap();
    let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
    for r in rows {
        let reach: Vec<String> = r.first_reach.iter().map(|&x| opt(x)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme,
            r.d_min,
            r.chi,
            r.n,
            opt(r.ub_floor),
            opt(r.ldb_threshold),
            reach.join(","),
            r.lead_points
        )
        .unwrap();
    }
    Ok(out)
}

fn cmd_compare(config: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Body<'a> {
        targets: [f64; 3],
        schemes: &'a [CompareRow],
    }
    let curves = sweep_curves(config)?;
    let rows = compare_rows(&curves);
    let mut text = String::new();
    write!(text, "{:<10} {:>5} {:>3} {:>5} {:>12}", "scheme", "d_min", "chi", "n", "UB floor").unwrap();
    for t in TARGETS {
        write!(text, " {:>12}", format!("t@UB<={t:e}")).unwrap();
    }
    writeln!(text, " {:>6}", "leads").unwrap();
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
    for r in &rows {
        write!(
            text,
            "{:<10} {:>5} {:>3} {:>5} {:>12}",
            r.scheme,
            r.d_min,
            r.chi,
            r.n,
            show(r.ub_floor)
        )
        .unwrap();
        for &x in &r.first_reach {
            write!(text, " {:>12}", show(x)).unwrap();
        }
        writeln!(text, " {:>6}", r.lead_points).unwrap();
    }
    let format = config.output.format;
    let path = out_file(config, "compare", format.extension());
    let body = match format {
        OutputFormat::Csv => compare_csv(&rows, config)?,
        OutputFormat::Json => to_json_document(config, Body { targets: TARGETS, schemes: &rows })?,
    };
    write_file(&path, &body)?;
    writeln!(text, "wrote {}", path.display()).unwrap();
    Ok(text)
}

/// Parses `args` and runs them, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "nfv-fer", "sweep", "--config", "x.toml", "--out", "o", "--format", "json", "--seed", "3",
            "--trials", "10", "--threads", "2",
        ])
        .unwrap();
        assert_eq!(cli.command, Command::Sweep);
        assert_eq!(cli.options.format, Some(OutputFormat::Json));
        assert_eq!(cli.options.threads, Some(2));
        assert!(Cli::try_parse_from(["nfv-fer", "sweep", "--format", "xml"]).is_err());
    }

    #[test]
    fn missing_config_is_config_error() {
        let cli = Cli::try_parse_from(["nfv-fer", "analyze"]).unwrap();
        assert_eq!(run(&cli).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn simulate_requires_mc() {
        let err = execute(Command::Simulate, &ExperimentConfig::scaled_identity()).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "mc"));
    }

    #[test]
    fn fig2_analysis_rows() {
        let rows = analyze_rows(&ExperimentConfig::scaled_identity()).unwrap();
        assert_eq!(rows.len(), 3);
        let norms: Vec<u64> = rows.iter().map(|r| r.column_sq_norms[0]).collect();
        assert_eq!(norms, vec![1, 9, 25]);
        let pe: Vec<f64> = rows.iter().map(|r| r.servers[0].p_e_ml).collect();
        assert!(pe[0] < pe[1] && pe[1] < pe[2], "{pe:?}");
    }

    #[test]
    fn ss_analysis_row() {
        let mut config = ExperimentConfig::baselines();
        config.schemes.truncate(1);
        let rows = analyze_rows(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].n, rows[0].d_min, rows[0].chi), (1008, 1, 1));
    }
}
