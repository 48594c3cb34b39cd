//! Command-line surface. `main` only forwards to [`run`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};

use branchfit_core::inference::{run_pipeline, Dataset, Outcome, PipelineConfig};
use branchfit_core::sigma::{GridBudgets, SigmaGrid};
use branchfit_core::sim::SimConfig;
use branchfit_core::GammaLifetime;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::error::{AppError, ExitCode, Result};
use crate::report::{DatasetSummary, GridSummary, Report, SCHEMA};
use crate::{dataset, gridfile, parallel, report, selftest};

#[derive(Parser, Debug)]
#[command(name = "branchfit", version, about = "Simulate Bellman-Harris populations and infer Gamma lifetime parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate an ensemble and write a dataset file.
    Simulate(SimulateArgs),
    /// Build a sigma grid and write it to disk.
    SigmaTable(SigmaArgs),
    /// Run the inference pipeline on a dataset.
    Infer(InferArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid step Δ (default ln 2 / (8α)).
    #[arg(long)]
    pub delta_step: Option<f64>,
    /// Last grid index I (default: long enough to pass the cap).
    #[arg(long)]
    pub n_grid: Option<usize>,
    #[arg(long)]
    pub pop_cap: Option<usize>,
    #[arg(long)]
    pub n_data: Option<usize>,
    #[arg(long)]
    pub initial_count: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SigmaArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mesh: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// δ = delta_factor · ln 2 / α.
    #[arg(long)]
    pub delta_factor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mc_per_node: Option<usize>,
    #[arg(long)]
    pub mc_zeta: Option<usize>,
    #[arg(long)]
    pub age_nodes: Option<usize>,
    #[arg(long)]
    pub x_horizon: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    /// Output directory for the report and plot exports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub window_start_count: Option<f64>,
    #[arg(long)]
    pub regime_threshold: Option<f64>,
    /// Override the dataset's count mode (absolute | proportional).
    #[arg(long)]
    pub count_mode: Option<String>,
    /// Divide residuals by √N_t in the Gaussian target (default).
    #[arg(long, conflicts_with = "unnormalized_target")]
    pub normalized: bool,
    /// Use the raw residual variance as the Gaussian target.
    #[arg(long)]
    pub unnormalized_target: bool,
    #[arg(long)]
    pub k_max: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct SelftestArgs {
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
}

fn config_file(path: &Option<PathBuf>, known: &[&str]) -> Result<ConfigFile> {
    let c = match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    c.check_keys(known)?;
    Ok(c)
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| AppError::Input(format!("missing required option --{name}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub k: f64,
    pub theta: f64,
    pub seed: u64,
    pub delta_step: f64,
    pub n_grid: usize,
    pub pop_cap: Option<usize>,
    pub n_data: usize,
    pub initial_count: usize,
    pub out: PathBuf,
}

impl SimulateConfig {
    pub fn resolve(a: &SimulateArgs) -> Result<Self> {
        let f = config_file(
            &a.config,
            &["k", "theta", "seed", "delta_step", "n_grid", "pop_cap", "n_data", "initial_count", "threads", "out"],
        )?;
        let k = required(f.pick(a.k, "k")?, "k")?;
        let theta = required(f.pick(a.theta, "theta")?, "theta")?;
        let law = GammaLifetime::new(k, theta)?;
        let alpha = law.malthusian_alpha();
        let delta_step = f.pick(a.delta_step, "delta_step")?.unwrap_or(LN_2 / (8.0 * alpha));
        let pop_cap = f.pick(a.pop_cap, "pop_cap")?;
        let n_grid = match f.pick(a.n_grid, "n_grid")? {
            Some(n) => n,
            None => {
                let doublings = (pop_cap.unwrap_or(8000) as f64).log2() + 4.0;
                (doublings * LN_2 / alpha / delta_step).ceil() as usize
            }
        };
        Ok(SimulateConfig {
            k,
            theta,
            seed: f.pick(a.seed, "seed")?.unwrap_or(1),
            delta_step,
            n_grid,
            pop_cap,
            n_data: f.pick(a.n_data, "n_data")?.unwrap_or(1),
            initial_count: f.pick(a.initial_count, "initial_count")?.unwrap_or(1),
            out: required(f.pick(a.out.clone(), "out")?, "out")?,
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut c = SimConfig::new(self.seed, self.delta_step, self.n_grid);
        c.pop_cap = self.pop_cap;
        c.initial = vec![(self.initial_count, 0.0)];
        c
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = SimulateConfig::resolve(a)?;
    let law = GammaLifetime::new(cfg.k, cfg.theta)?;
    let threads = a.threads;
    let ens = parallel::simulate_ensemble(&cfg.sim_config(), &law, cfg.n_data, threads)?;
    let ds = Dataset::from_ensemble(&ens)?;
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "branchfit simulate".into());
    meta.insert("k".into(), format!("{:?}", cfg.k));
    meta.insert("theta".into(), format!("{:?}", cfg.theta));
    meta.insert("seed".into(), cfg.seed.to_string());
    meta.insert("n_grid".into(), cfg.n_grid.to_string());
    meta.insert("n_data".into(), cfg.n_data.to_string());
    meta.insert("initial_count".into(), cfg.initial_count.to_string());
    meta.insert("pop_cap".into(), cfg.pop_cap.map_or("none".into(), |c| c.to_string()));
    dataset::write(&ds, &meta, &cfg.out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaConfig {
    pub mesh: f64,
    pub alpha: f64,
    pub delta_factor: f64,
    pub seed: u64,
    pub budgets: GridBudgets,
    pub out: PathBuf,
}

impl SigmaConfig {
    pub fn resolve(a: &SigmaArgs) -> Result<Self> {
        let f = config_file(
            &a.config,
            &[
                "mesh", "alpha", "delta_factor", "seed", "mc_per_node", "mc_zeta", "age_nodes", "x_horizon", "threads",
                "out",
            ],
        )?;
        let d = GridBudgets::default();
        Ok(SigmaConfig {
            mesh: f.pick(a.mesh, "mesh")?.unwrap_or(0.05),
            alpha: f.pick(a.alpha, "alpha")?.unwrap_or(1.0),
            delta_factor: f.pick(a.delta_factor, "delta_factor")?.unwrap_or(1.0),
            seed: f.pick(a.seed, "seed")?.unwrap_or(1),
            budgets: GridBudgets {
                mc_per_node: f.pick(a.mc_per_node, "mc_per_node")?.unwrap_or(d.mc_per_node),
                mc_zeta: f.pick(a.mc_zeta, "mc_zeta")?.unwrap_or(d.mc_zeta),
                age_nodes: f.pick(a.age_nodes, "age_nodes")?.unwrap_or(d.age_nodes),
                x_horizon: f.pick(a.x_horizon, "x_horizon")?.unwrap_or(d.x_horizon),
            },
            out: required(f.pick(a.out.clone(), "out")?, "out")?,
        })
    }
}

pub fn cmd_sigma_table(a: &SigmaArgs) -> Result<SigmaGrid> {
    let c = SigmaConfig::resolve(a)?;
    let report = |d: usize, n: usize| eprintln!("node {d}/{n}");
    let progress: Option<parallel::Progress<'_>> = if a.quiet { None } else { Some(&report) };
    let grid = parallel::build_grid(c.mesh, c.alpha, c.delta_factor, c.budgets, c.seed, a.threads, progress)?;
    gridfile::save(&grid, &c.out)?;
    Ok(grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct InferConfig {
    pub dataset: PathBuf,
    pub grid_file: Option<PathBuf>,
    pub out: PathBuf,
    pub count_mode: Option<String>,
    pub pipeline: PipelineConfig,
}

impl InferConfig {
    pub fn resolve(a: &InferArgs) -> Result<Self> {
        let f = config_file(
            &a.config,
            &[
                "dataset", "grid_file", "out", "window_start_count", "regime_threshold", "count_mode", "normalized",
                "unnormalized_target", "k_max",
            ],
        )?;
        let d = PipelineConfig::default();
        let normalized = if a.unnormalized_target {
            false
        } else if a.normalized {
            true
        } else {
            !f.get::<bool>("unnormalized_target")?.unwrap_or(false) && f.get::<bool>("normalized")?.unwrap_or(true)
        };
        let count_mode = f.pick(a.count_mode.clone(), "count_mode")?;
        if let Some(m) = &count_mode {
            dataset::parse_mode(m).ok_or_else(|| AppError::Input(format!("unknown count mode {m:?}")))?;
        }
        Ok(InferConfig {
            dataset: required(f.pick(a.dataset.clone(), "dataset")?, "dataset")?,
            grid_file: f.pick(a.grid_file.clone(), "grid_file")?,
            out: required(f.pick(a.out.clone(), "out")?, "out")?,
            count_mode,
            pipeline: PipelineConfig {
                start_count: f.pick(a.window_start_count, "window_start_count")?.unwrap_or(d.start_count),
                regime_threshold: f.pick(a.regime_threshold, "regime_threshold")?.unwrap_or(d.regime_threshold),
                normalized_target: normalized,
                k_max: f.pick(a.k_max, "k_max")?.unwrap_or(d.k_max),
            },
        })
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

pub fn cmd_infer(a: &InferArgs) -> Result<Report> {
    let c = InferConfig::resolve(a)?;
    let (mut ds, _) = dataset::read(&c.dataset)?;
    if let Some(m) = c.count_mode.as_deref().and_then(dataset::parse_mode) {
        ds.count_mode = m;
        ds.validate()?;
    }
    let grid = c.grid_file.as_deref().map(gridfile::load).transpose()?;
    let pipeline = run_pipeline(&ds, grid.as_ref(), &c.pipeline)?;
    let report = Report {
        schema: SCHEMA,
        config: serde_json::to_value(&c).map_err(|e| AppError::Input(e.to_string()))?,
        dataset: DatasetSummary {
            path: path_string(&c.dataset),
            n_data: ds.n_data(),
            n_times: ds.n_times(),
            grid_step: ds.grid_step,
            t0: ds.t0,
            units: ds.units.clone(),
            count_mode: dataset::mode_name(ds.count_mode).into(),
        },
        grid: grid.as_ref().zip(c.grid_file.as_deref()).map(|(g, p)| GridSummary {
            path: path_string(p),
            mesh: g.mesh,
            alpha: g.alpha,
            delta_factor: g.delta_factor,
            seed: g.seed,
            nodes: g.k_values.len(),
        }),
        warnings: pipeline.warnings.clone(),
        pipeline,
    };
    report::write_all(&report, &ds, &c.out)?;
    match &report.pipeline.outcome {
        Outcome::Estimated(_) => Ok(report),
        Outcome::GridRequired => Err(branchfit_core::Error::GridRequired.into()),
        Outcome::ProportionalCounts => Err(branchfit_core::Error::ProportionalGaussian.into()),
    }
}

pub fn cmd_selftest(a: &SelftestArgs) -> bool {
    let checks = selftest::run(a.grid_file.as_deref());
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn summary(r: &Report) {
    let p = &r.pipeline;
    println!("alpha_hat = {}", p.alpha.alpha_hat);
    println!("delta1 = {}, delta2 = {}", p.delta1, p.delta2);
    println!("lambda_hat = {} (R² = {:.4})", p.lambda.lambda_hat, p.lambda.r2);
    println!("regime = {:?} (ratio {:.4}, threshold {})", p.regime.regime, p.regime.ratio, p.regime.threshold);
    if let Some(e) = p.estimate() {
        println!("k_hat = {}, theta_hat = {}", e.k_hat, e.theta_hat);
        println!("mu_hat = {}, cv_hat = {}", e.mu_hat, e.cv_hat);
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.cmd {
        Command::Simulate(a) => cmd_simulate(a).map(|_| ExitCode::Ok),
        Command::SigmaTable(a) => cmd_sigma_table(a).map(|_| ExitCode::Ok),
        Command::Infer(a) => cmd_infer(a).map(|r| {
            summary(&r);
            ExitCode::Ok
        }),
        Command::Selftest(a) => Ok(if cmd_selftest(a) { ExitCode::Ok } else { ExitCode::Numeric }),
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Input as i32 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}
