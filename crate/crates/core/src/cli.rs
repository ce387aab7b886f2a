//! Command-line front end.
//!
//! Every subcommand writes one CSV plus a `.meta.json` sidecar that records
//! the fully resolved command, so `ganscape replay <sidecar>` reproduces the
//! CSV byte for byte. Values come from flags, then from a `--config` file of
//! `key = value` lines (keys are long flag names), then from defaults.
//! Diagnostics go to stderr as one JSON object per line. Exit codes are
//! 0 on success, 1 when a computation fails and 2 for usage errors.

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::complexity::{
    max_index_map, sweep, theta_surface, CacheStats, DensityCache, Landscape, MinimizerConfig, SweepParam,
    VarthetaConfig,
};
use crate::error::Error;
use crate::output::{self, format_float, Table};
use crate::params::ModelParams;
use crate::rmt::{self, ProbeConfig, SeedRecord, SpectralParams};
use crate::spectral::{density_grid_with, GridConfig};

/// Environment variable naming a directory for cached density grids.
pub const CACHE_ENV: &str = "GANSCAPE_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "ganscape", version, about = "Complexity of the two-spin-glass GAN landscape")]
pub struct Cli {
    /// File of `key = value` lines supplying values for long flags not given on the command line.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Limiting spectral density, optionally against sampled spectra.
    Density(DensityArgs),
    /// Log-potential against Monte-Carlo log-determinants.
    ValidateMc(ValidateMcArgs),
    /// Field variances at the poles against their closed forms.
    ValidateCov(ValidateCovArgs),
    /// Θ at one point.
    Theta(ThetaArgs),
    /// Θ on a grid of loss bounds.
    ThetaSurface(SurfaceArgs),
    /// Index-resolved Θ on a grid of loss bounds.
    ThetaIndex(ThetaIndexArgs),
    /// Largest index with positive complexity, per network.
    Banded(BandedArgs),
    /// Thresholds ϑ_D and ϑ_G across a hyperparameter.
    Sweep(SweepArgs),
    /// Rerun the command recorded in a sidecar.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RunArgs {
    /// Output CSV; the sidecar goes next to it.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Worker threads (0: one per core). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Directory for cached density grids.
    #[arg(long, env = CACHE_ENV)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 3)]
    pub p: u32,
    #[arg(long, default_value_t = 3)]
    pub q: u32,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_z: f64,
    #[arg(long, default_value_t = 0.9)]
    pub kappa: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams, Failure> {
        ModelParams::new(self.p, self.q, self.sigma_z, self.kappa).map_err(usage)
    }
}

#[derive(Args, Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridArgs {
    /// Tabulation points per support interval.
    #[arg(long, default_value_t = 256)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 1024)]
    pub scan_points: usize,
    #[arg(long, default_value_t = 1e-11)]
    pub panel_tol: f64,
    #[arg(long, default_value_t = 4000)]
    pub max_panels: usize,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig {
            n_points: self.grid_points,
            scan_points: self.scan_points,
            panel_tol: self.panel_tol,
            max_panels: self.max_panels,
        }
    }
}

#[derive(Args, Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchArgs {
    /// Rows and columns of the coarse minimisation grid.
    #[arg(long, default_value_t = 200)]
    pub coarse: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 64)]
    pub inner_samples: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub x1_tol: f64,
    /// Shift the coarse grid by a seeded random offset.
    #[arg(long)]
    pub jitter_seed: Option<u64>,
}

impl SearchArgs {
    fn config(&self) -> Result<MinimizerConfig, Failure> {
        if self.coarse < 2 || self.inner_samples < 2 || !(self.x1_tol > 0.0) {
            return Err(usage(Error::Domain("coarse and inner-samples must be >= 2 and x1-tol > 0".into())));
        }
        Ok(MinimizerConfig {
            grid: self.coarse,
            restarts: self.restarts,
            inner_samples: self.inner_samples,
            x1_tol: self.x1_tol,
            stop_below: None,
            jitter_seed: self.jitter_seed,
        })
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Bulk scale; selects direct spectral parameters.
    #[arg(long, conflicts_with_all = ["p", "q", "sigma_z"])]
    pub b: Option<f64>,
    #[arg(long, requires = "b")]
    pub b1: Option<f64>,
    #[arg(long)]
    pub p: Option<u32>,
    #[arg(long)]
    pub q: Option<u32>,
    #[arg(long)]
    pub sigma_z: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x1: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also sample `S` matrices of size `N`, given as `N,S`.
    #[arg(long, value_parser = parse_counts)]
    pub empirical: Option<(usize, usize)>,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Gap below which two support intervals count as touching.
    #[arg(long, default_value_t = 1e-2)]
    pub edge_tol: f64,
    /// Write the sampled spectra in the binary dump format.
    #[arg(long)]
    pub dump_spectra: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ValidateMcArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Matrix dimension.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub n_samples: usize,
    /// `lo,hi` for x; defaults to 1.5 times the spectral reach on each side.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub x_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 5)]
    pub x_points: usize,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "-4,4")]
    pub x1_range: (f64, f64),
    #[arg(long, default_value_t = 5)]
    pub x1_points: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ValidateCovArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dimension of each sphere.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub tangent_dirs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub fd_step: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ThetaArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub ud: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub ug: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LossGrid {
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "-2,4")]
    pub ud_range: (f64, f64),
    #[arg(long, default_value_t = 13)]
    pub ud_points: usize,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "-2,4")]
    pub ug_range: (f64, f64),
    #[arg(long, default_value_t = 13)]
    pub ug_points: usize,
}

impl LossGrid {
    fn axes(&self) -> Result<(Vec<f64>, Vec<f64>), Failure> {
        Ok((linspace(self.ud_range, self.ud_points)?, linspace(self.ug_range, self.ug_points)?))
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub losses: LossGrid,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ThetaIndexArgs {
    #[command(flatten)]
    pub surface: SurfaceArgs,
    #[arg(long, default_value_t = 0)]
    pub kd: u32,
    #[arg(long, default_value_t = 0)]
    pub kg: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BandedArgs {
    #[command(flatten)]
    pub surface: SurfaceArgs,
    #[arg(long, default_value_t = 3)]
    pub k_max: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// `sigma_z` or `kappa`.
    #[arg(long, value_parser = parse_param)]
    pub param: SweepParam,
    /// Explicit comma-separated values.
    #[arg(long, value_delimiter = ',', conflicts_with = "log_range", required_unless_present = "log_range")]
    pub values: Option<Vec<f64>>,
    /// `lo,hi` with points spaced evenly in log scale.
    #[arg(long, value_parser = parse_pair)]
    pub log_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Value of the other loss bound while one is varied.
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub cap: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Sidecar written by an earlier run.
    pub sidecar: PathBuf,
    /// Write here instead of the recorded output path.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, env = CACHE_ENV)]
    pub cache_dir: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(format!("need finite lo <= hi, got `{s}`"));
    }
    Ok((a, b))
}

fn parse_counts(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `N,S`, got `{s}`"))?;
    let n = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let k = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((n, k))
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    match s {
        "sigma_z" | "sigma-z" => Ok(SweepParam::SigmaZ),
        "kappa" => Ok(SweepParam::Kappa),
        _ => Err(format!("expected sigma_z or kappa, got `{s}`")),
    }
}

fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::SigmaZ => "sigma_z",
        SweepParam::Kappa => "kappa",
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Result<Vec<f64>, Failure> {
    match n {
        0 => Err(usage(Error::Domain("a grid needs at least one point".into()))),
        1 => Ok(vec![lo]),
        _ if lo == hi => Err(usage(Error::Domain("a grid with several points needs lo < hi".into()))),
        _ => Ok((0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()),
    }
}

fn logspace((lo, hi): (f64, f64), n: usize) -> Result<Vec<f64>, Failure> {
    if !(lo > 0.0) {
        return Err(usage(Error::Domain("log-range needs positive bounds".into())));
    }
    let exps = linspace((lo.ln(), hi.ln()), n)?;
    Ok(exps
        .iter()
        .enumerate()
        .map(|(i, e)| match i {
            0 => lo,
            _ if i + 1 == n => hi,
            _ => e.exp(),
        })
        .collect())
}

/// Why a run stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(Error),
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

fn diag(record: serde_json::Value) {
    eprintln!("{record}");
}

/// Parse, run and report; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(Parsed::Exit(text, code)) => {
            print!("{text}");
            return code;
        }
        Err(Parsed::Usage(message)) => {
            diag(json!({"level": "error", "kind": "usage", "message": message}));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            diag(json!({"level": "error", "kind": "usage", "message": message}));
            2
        }
        Err(Failure::Compute(e)) => {
            diag(json!({"level": "error", "kind": e.kind(), "message": e.to_string()}));
            1
        }
    }
}

enum Parsed {
    /// Help or version text with its exit code.
    Exit(String, i32),
    Usage(String),
}

fn clap_failure(e: clap::Error) -> Parsed {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Parsed::Exit(e.render().to_string(), 0),
        _ => {
            let text = e.render().to_string();
            let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("Usage") && !l.starts_with("For more")).collect();
            Parsed::Usage(lines.join(" "))
        }
    }
}

fn parse(mut argv: Vec<OsString>) -> Result<Cli, Parsed> {
    let matches = Cli::command().try_get_matches_from(argv.clone()).map_err(clap_failure)?;
    let cli = Cli::from_arg_matches(&matches).map_err(clap_failure)?;
    let Some(path) = &cli.config else { return Ok(cli) };
    let text = std::fs::read_to_string(path).map_err(|e| Parsed::Usage(format!("{}: {e}", path.display())))?;
    let (name, sub) = matches.subcommand().ok_or_else(|| Parsed::Usage("missing subcommand".into()))?;
    let command = Cli::command();
    let definition = command.find_subcommand(name).ok_or_else(|| Parsed::Usage(format!("unknown subcommand {name}")))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Parsed::Usage(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            continue;
        }
        let arg = definition
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Parsed::Usage(format!("{}:{}: `{key}` is not an option of {name}", path.display(), lineno + 1)))?;
        match sub.value_source(arg.get_id().as_str()) {
            Some(ValueSource::CommandLine) | Some(ValueSource::EnvVariable) => {}
            _ => argv.push(format!("--{key}={value}").into()),
        }
    }
    Cli::try_parse_from(argv).map_err(clap_failure)
}

/// Run one resolved command.
pub fn execute(command: Command) -> Result<(), Failure> {
    if let Command::Replay(r) = command {
        return replay(&r);
    }
    let threads = run_args(&command).threads;
    if threads > 0 {
        // a pool already set up by an earlier call in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &command {
        Command::Density(a) => cmd_density(&command, a),
        Command::ValidateMc(a) => cmd_validate_mc(&command, a),
        Command::ValidateCov(a) => cmd_validate_cov(&command, a),
        Command::Theta(a) => cmd_theta(&command, a),
        Command::ThetaSurface(a) => cmd_surface(&command, a, (0, 0)),
        Command::ThetaIndex(a) => cmd_surface(&command, &a.surface, (a.kd, a.kg)),
        Command::Banded(a) => cmd_banded(&command, a),
        Command::Sweep(a) => cmd_sweep(&command, a),
        Command::Replay(_) => unreachable!(),
    }
}

fn run_args(c: &Command) -> &RunArgs {
    match c {
        Command::Density(a) => &a.run,
        Command::ValidateMc(a) => &a.run,
        Command::ValidateCov(a) => &a.run,
        Command::Theta(a) => &a.run,
        Command::ThetaSurface(a) => &a.run,
        Command::ThetaIndex(a) => &a.surface.run,
        Command::Banded(a) => &a.surface.run,
        Command::Sweep(a) => &a.run,
        Command::Replay(_) => unreachable!("replay carries no run arguments"),
    }
}

fn run_args_mut(c: &mut Command) -> &mut RunArgs {
    match c {
        Command::Density(a) => &mut a.run,
        Command::ValidateMc(a) => &mut a.run,
        Command::ValidateCov(a) => &mut a.run,
        Command::Theta(a) => &mut a.run,
        Command::ThetaSurface(a) => &mut a.run,
        Command::ThetaIndex(a) => &mut a.surface.run,
        Command::Banded(a) => &mut a.surface.run,
        Command::Sweep(a) => &mut a.run,
        Command::Replay(_) => unreachable!("replay carries no run arguments"),
    }
}

fn replay(r: &ReplayArgs) -> Result<(), Failure> {
    let text = std::fs::read(&r.sidecar).map_err(|e| Failure::Usage(format!("{}: {e}", r.sidecar.display())))?;
    let meta: serde_json::Value = serde_json::from_slice(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut command: Command = serde_json::from_value(meta["config"].clone())
        .map_err(|e| Failure::Usage(format!("sidecar has no usable config: {e}")))?;
    let run = run_args_mut(&mut command);
    if let Some(o) = &r.output {
        run.output = Some(o.clone());
    }
    if let Some(t) = r.threads {
        run.threads = t;
    }
    // the cache only affects speed, so the current one wins
    run.cache_dir = r.cache_dir.clone();
    execute(command)
}

fn output_path(run: &RunArgs, default: &str) -> PathBuf {
    run.output.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn make_cache(run: &RunArgs, grid: GridConfig) -> Result<Arc<DensityCache>, Failure> {
    Ok(Arc::new(match &run.cache_dir {
        Some(dir) => DensityCache::with_dir(grid, dir)?,
        None => DensityCache::new(grid),
    }))
}

#[derive(Serialize)]
struct Meta<'a, R: Serialize> {
    software: serde_json::Value,
    config: &'a Command,
    result: R,
    cache: Option<CacheStats>,
    threads: usize,
}

fn finish<R: Serialize>(command: &Command, csv: &Path, table: &Table, result: R, cache: Option<&DensityCache>) -> Result<(), Failure> {
    table.write(csv)?;
    let meta = Meta {
        software: json!({"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")}),
        config: command,
        result,
        cache: cache.map(|c| c.stats()),
        threads: rayon::current_num_threads(),
    };
    let side = output::write_sidecar(csv, &meta)?;
    diag(json!({"level": "info", "event": "wrote", "csv": csv, "sidecar": side}));
    Ok(())
}

fn warn_params(m: &ModelParams) {
    for w in m.warnings() {
        diag(json!({"level": "warning", "message": w}));
    }
}

fn cmd_density(command: &Command, a: &DensityArgs) -> Result<(), Failure> {
    let sp = match a.b {
        Some(b) => SpectralParams::new(b, a.b1.unwrap_or(0.0), a.kappa, a.x1).map_err(usage)?,
        None => {
            let m = ModelArgs { p: a.p.unwrap_or(3), q: a.q.unwrap_or(3), sigma_z: a.sigma_z.unwrap_or(1.0), kappa: a.kappa }
                .params()?;
            warn_params(&m);
            SpectralParams::from_model(&m, a.x1).map_err(usage)?
        }
    };
    let cfg = a.grid.config();
    let grid = density_grid_with(&sp, &cfg)?;
    let csv = output_path(&a.run, "density.csv");
    let shape = grid.shape(a.edge_tol);
    let mut result = json!({
        "params": sp,
        "support": grid.support,
        "mass": grid.mass,
        "trapezoid_mass": grid.trapezoid_mass(),
        "shape": shape,
        "grid_points": grid.z_values.len(),
        "panels": grid.pieces.iter().map(|p| p.panels.len()).sum::<usize>(),
    });
    if let Some((n, samples)) = a.empirical {
        let seed = SeedRecord::new(a.run.seed, 0);
        let spectra = rmt::sample_spectra(&sp, n, samples, seed)?;
        if let Some(path) = &a.dump_spectra {
            let header = rmt::SpectraHeader { n: n as u64, kappa: sp.kappa, b: sp.b, b1: sp.b1, x1: sp.x1, seed: a.run.seed };
            rmt::write_spectra(path, &header, &spectra)?;
        }
        let pooled: Vec<f64> = spectra.concat();
        let (lo, hi) = (grid.support[0].0, grid.support[grid.support.len() - 1].1);
        let pad = 0.05 * (hi - lo);
        let at = linspace((lo - pad, hi + pad), 400)?;
        let kde = rmt::kernel_density(&pooled, &at)?;
        let sup = at.iter().zip(&kde).map(|(z, k)| (k - grid.rho_at(*z)).abs()).fold(0.0f64, f64::max);
        let hist_path = output::companion_path(&csv, "empirical");
        histogram(&pooled, a.bins.max(1)).write(&hist_path)?;
        result["empirical"] = json!({
            "n": n,
            "samples": samples,
            "seed": a.run.seed,
            "bandwidth": rmt::reference_bandwidth(&pooled),
            "sup_distance": sup,
            "histogram": hist_path,
        });
    }
    finish(command, &csv, &output::density_table(&grid), result, None)
}

fn histogram(values: &[f64], bins: usize) -> Table {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = values.len() as f64;
    let mut t = Table::new(&["z_lo", "z_hi", "count", "density"]);
    for (i, c) in counts.iter().enumerate() {
        let a = lo + width * i as f64;
        let b = if i + 1 == bins { hi.max(a + width) } else { lo + width * (i + 1) as f64 };
        t.push(vec![format_float(a), format_float(b), c.to_string(), format_float(*c as f64 / (total * width))]);
    }
    t
}

fn cmd_validate_mc(command: &Command, a: &ValidateMcArgs) -> Result<(), Failure> {
    let m = a.model.params()?;
    warn_params(&m);
    if a.n_samples == 0 {
        return Err(usage(Error::Domain("n-samples must be >= 1".into())));
    }
    let c = crate::params::derive_constants(&m)?;
    let reach = std::f64::consts::SQRT_2 * (c.b + c.b1);
    let xs = linspace(a.x_range.unwrap_or((-1.5 * reach, 1.5 * reach)), a.x_points)?;
    let x1s = linspace(a.x1_range, a.x1_points)?;
    let cache = make_cache(&a.run, a.grid.config())?;
    let mut t = Table::new(&["x", "x1", "coulomb", "mc", "mc_stderr", "abs_diff"]);
    let mut worst = 0.0f64;
    for (j, &x1) in x1s.iter().enumerate() {
        let sp = SpectralParams::from_model(&m, x1)?;
        let grid = cache.get(&sp)?;
        let mc = rmt::mc_log_abs_det_many(&grid.params, &xs, a.n, a.n_samples, SeedRecord::new(a.run.seed, j as u64))?;
        for (&x, e) in xs.iter().zip(mc) {
            let coulomb = grid.log_potential(x);
            let diff = (coulomb - e.value).abs();
            worst = worst.max(diff);
            t.push(vec![
                format_float(x),
                format_float(grid.params.x1),
                format_float(coulomb),
                format_float(e.value),
                format_float(e.std_error),
                format_float(diff),
            ]);
        }
    }
    let result = json!({"max_abs_diff": worst, "n": a.n, "n_samples": a.n_samples, "points": xs.len() * x1s.len()});
    finish(command, &output_path(&a.run, "validate-mc.csv"), &t, result, Some(&cache))
}

fn cmd_validate_cov(command: &Command, a: &ValidateCovArgs) -> Result<(), Failure> {
    let m = a.model.params()?;
    warn_params(&m);
    let cfg = ProbeConfig { tangent_dirs: a.tangent_dirs, fd_step: a.fd_step, ..ProbeConfig::default() };
    let r = rmt::covariance_probe(&m, a.n, a.n_samples, SeedRecord::new(a.run.seed, 0), &cfg)?;
    let mut t = Table::new(&["quantity", "estimate", "std_error", "expected", "z_score"]);
    for (name, c) in [("var_d", r.var_d), ("var_g", r.var_g), ("cov_grad_g", r.cov_grad_g), ("cov_hess_g", r.cov_hess_g)] {
        t.push(vec![
            name.to_string(),
            format_float(c.estimate),
            format_float(c.std_error),
            format_float(c.expected),
            format_float(c.z_score()),
        ]);
    }
    let result = json!({"fd_max_rel_diff": r.fd_max_rel_diff, "n": r.n, "n_samples": r.n_samples});
    finish(command, &output_path(&a.run, "validate-cov.csv"), &t, result, None)
}

fn landscape(run: &RunArgs, model: &ModelArgs, grid: &GridArgs) -> Result<(Landscape, Arc<DensityCache>), Failure> {
    let m = model.params()?;
    warn_params(&m);
    let cache = make_cache(run, grid.config())?;
    Ok((Landscape::new(m, Arc::clone(&cache))?, cache))
}

fn cmd_theta(command: &Command, a: &ThetaArgs) -> Result<(), Failure> {
    let (l, cache) = landscape(&a.run, &a.model, &a.grid)?;
    let cfg = a.search.config()?;
    let s = theta_surface(&l, &[a.ud], &[a.ug], &cfg).map_err(usage)?;
    let result = json!({"K": l.constants().k, "theta": s.theta[0][0], "constants": l.constants()});
    finish(command, &output_path(&a.run, "theta.csv"), &output::surface_table(&s), result, Some(&cache))
}

fn cmd_surface(command: &Command, a: &SurfaceArgs, (kd, kg): (u32, u32)) -> Result<(), Failure> {
    let (l, cache) = landscape(&a.run, &a.model, &a.grid)?;
    let l = l.with_index(kd, kg);
    let cfg = a.search.config()?;
    let (ud, ug) = a.losses.axes()?;
    let s = theta_surface(&l, &ud, &ug, &cfg).map_err(usage)?;
    let failed = s.errors.iter().flatten().filter(|e| e.is_some()).count();
    let result = json!({
        "K": l.constants().k,
        "k_d": kd,
        "k_g": kg,
        "monotonicity_defect": s.monotonicity_defect(),
        "failed_cells": failed,
    });
    let name = if (kd, kg) == (0, 0) { "theta-surface.csv" } else { "theta-index.csv" };
    finish(command, &output_path(&a.run, name), &output::surface_table(&s), result, Some(&cache))
}

fn cmd_banded(command: &Command, a: &BandedArgs) -> Result<(), Failure> {
    let s = &a.surface;
    let (l, cache) = landscape(&s.run, &s.model, &s.grid)?;
    let cfg = s.search.config()?;
    let (ud, ug) = s.losses.axes()?;
    let maps = max_index_map(&l, &ud, &ug, a.k_max, &cfg).map_err(usage)?;
    let failed = maps.errors.iter().flatten().filter(|e| e.is_some()).count();
    let result = json!({"k_max": a.k_max, "failed_cells": failed});
    finish(command, &output_path(&s.run, "banded.csv"), &output::index_table(&maps), result, Some(&cache))
}

fn cmd_sweep(command: &Command, a: &SweepArgs) -> Result<(), Failure> {
    let base = a.model.params()?;
    let values = match (&a.values, a.log_range) {
        (Some(v), _) if !v.is_empty() => v.clone(),
        (_, Some(r)) => logspace(r, a.points)?,
        _ => return Err(Failure::Usage("give --values or --log-range".into())),
    };
    if !(a.tol > 0.0 && a.cap.is_finite()) {
        return Err(usage(Error::Domain("tol must be positive and cap finite".into())));
    }
    let cfg = a.search.config()?;
    let cache = make_cache(&a.run, a.grid.config())?;
    let vc = VarthetaConfig { cap: a.cap, tol: a.tol, ..VarthetaConfig::default() };
    let rows = sweep(&base, a.param, &values, &cache, &vc, &cfg);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let result = json!({"param": param_name(a.param), "points": rows.len(), "failed_points": failed, "cap": a.cap});
    let table = output::sweep_table(param_name(a.param), &rows);
    finish(command, &output_path(&a.run, "sweep.csv"), &table, result, Some(&cache))
}
