//! The `sde-drift` command line: simulate trajectories, estimate drifts,
//! compare orbits and sweep noise levels. Every run writes into one flat
//! output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::condexp::{CondExpParams, FitDiagnostics};
use crate::drift::{
    estimate_drift_scaled, estimate_drift_sparse, extract_snapshots_scaled, DriftEstimate, Stencil,
    TargetScaling,
};
use crate::error::Error;
use crate::eval::{
    compare_orbits, pointwise_errors, relative_l2_error, ErrorReport, OrbitComparison,
    PointwiseErrors,
};
use crate::field::VectorField;
use crate::systems::{
    simulate, SimulationOptions, SystemKind, SystemSpec, Trajectory, TrajectoryMetadata,
};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// One conditional expectation per coordinate.
    Dense,
    /// One shared unit applied through a cyclic stencil.
    Sparse,
}

/// Everything that defines a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemKind,
    pub params: BTreeMap<String, f64>,
    pub noise: Vec<f64>,
    pub n_samples: usize,
    pub dt: f64,
    pub seed: u64,
    pub burn_in: usize,
    pub substeps: usize,
    pub estimator: Estimator,
    pub stencil_width: Option<usize>,
    pub condexp: CondExpParams,
    pub scaling: TargetScaling,
    pub x0: Option<Vec<f64>>,
    pub horizon: f64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Experiment settings per system: `10^4` samples for the low-dimensional
    /// systems, `2 x 10^3` and the shared-unit estimator for Lorenz 96.
    pub fn defaults(system: SystemKind) -> Self {
        let sim = SimulationOptions::default();
        let (n_samples, estimator, stencil_width) = match system {
            SystemKind::Lorenz96 => (2000, Estimator::Sparse, Some(4)),
            _ => (10_000, Estimator::Dense, None),
        };
        RunConfig {
            system,
            params: BTreeMap::new(),
            noise: vec![0.1],
            n_samples,
            dt: sim.dt,
            seed: sim.seed,
            burn_in: sim.burn_in,
            substeps: sim.substeps,
            estimator,
            stencil_width,
            condexp: CondExpParams::default(),
            scaling: TargetScaling::Corrected,
            x0: None,
            horizon: 10.0,
            out: None,
        }
    }

    pub fn spec(&self, noise: f64) -> crate::Result<SystemSpec> {
        SystemSpec::from_params(self.system, &self.params, noise)
    }

    pub fn simulation(&self, seed: u64) -> SimulationOptions {
        SimulationOptions {
            n_samples: self.n_samples,
            dt: self.dt,
            seed,
            burn_in: self.burn_in,
            substeps: self.substeps,
        }
    }

    pub fn initial_state(&self, spec: &SystemSpec) -> crate::Result<Vec<f64>> {
        match &self.x0 {
            Some(x0) => {
                crate::points::check_dim(spec.dim(), x0.len())?;
                Ok(x0.clone())
            }
            None => Ok(spec.default_initial_state()),
        }
    }

    /// The stencil of the sparse estimator; `None` for the dense one.
    pub fn stencil(&self, d: usize) -> CliResult<Option<Stencil>> {
        match (self.estimator, self.stencil_width) {
            (Estimator::Dense, _) => Ok(None),
            (Estimator::Sparse, None) => usage("the sparse estimator needs --stencil-width"),
            (Estimator::Sparse, Some(w)) => Ok(Some(
                Stencil::cyclic_window(d, w).map_err(|e| CliError::Usage(e.to_string()))?,
            )),
        }
    }

    /// Applies one `key = value` setting; keys match the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
            value
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse `{value}` for {key}")))
        }
        fn list(key: &str, value: &str) -> CliResult<Vec<f64>> {
            value.split(',').map(|v| num(key, v.trim())).collect()
        }
        if let Some(name) = key.strip_prefix("param.") {
            self.params.insert(name.to_string(), num(key, value)?);
            return Ok(());
        }
        match key {
            "system" => {
                self.system = value
                    .parse()
                    .map_err(|e: Error| CliError::Usage(e.to_string()))?
            }
            "noise" => self.noise = list(key, value)?,
            "n" => self.n_samples = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "burn-in" => self.burn_in = num(key, value)?,
            "substeps" => self.substeps = num(key, value)?,
            "estimator" => {
                self.estimator = Estimator::from_str(value, true).map_err(CliError::Usage)?;
            }
            "stencil-width" => self.stencil_width = Some(num(key, value)?),
            "eta1" => self.condexp.eta1 = num(key, value)?,
            "eta2" => self.condexp.eta2 = num(key, value)?,
            "eta3" => self.condexp.eta3 = num(key, value)?,
            "delta" => self.condexp.delta = num(key, value)?,
            "centers" => self.condexp.centers = num(key, value)?,
            "target-scaling" => {
                self.scaling = match value {
                    "corrected" => TargetScaling::Corrected,
                    "literal" => TargetScaling::Literal,
                    _ => {
                        return usage(format!(
                            "target-scaling must be corrected or literal, got `{value}`"
                        ))
                    }
                }
            }
            "x0" => self.x0 = Some(list(key, value)?),
            "horizon" => self.horizon = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return usage(format!("unknown setting `{key}`")),
        }
        Ok(())
    }

    /// `key = value` lines that [`parse_config`] reads back.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "system = {}", self.system);
        for (k, v) in &self.params {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        let _ = writeln!(s, "noise = {}", join(&self.noise));
        let _ = writeln!(s, "n = {}", self.n_samples);
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "burn-in = {}", self.burn_in);
        let _ = writeln!(s, "substeps = {}", self.substeps);
        let est = match self.estimator {
            Estimator::Dense => "dense",
            Estimator::Sparse => "sparse",
        };
        let _ = writeln!(s, "estimator = {est}");
        if let Some(w) = self.stencil_width {
            let _ = writeln!(s, "stencil-width = {w}");
        }
        let c = &self.condexp;
        let _ = writeln!(s, "eta1 = {}\neta2 = {}\neta3 = {}", c.eta1, c.eta2, c.eta3);
        let _ = writeln!(s, "delta = {}\ncenters = {}", c.delta, c.centers);
        let scaling = match self.scaling {
            TargetScaling::Corrected => "corrected",
            TargetScaling::Literal => "literal",
        };
        let _ = writeln!(s, "target-scaling = {scaling}");
        if let Some(x0) = &self.x0 {
            let _ = writeln!(s, "x0 = {}", join(x0));
        }
        let _ = writeln!(s, "horizon = {}", self.horizon);
        s
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key = value", lineno + 1));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(
    name = "sde-drift",
    version,
    about = "Kernel estimation of SDE drift fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a trajectory and write trajectory.csv with its metadata.
    Simulate(RunArgs),
    /// Estimate the drift from a trajectory and evaluate it on a held-out one.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Trajectory CSV; simulated from the settings when omitted.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Integrate the true and an estimated field from the same state.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Model JSON written by `estimate`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Run `estimate` for every listed noise level (and every system unless
    /// one is given), with a summary table.
    Sweep(RunArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Plain-text `key = value` settings; flags override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub system: Option<String>,
    /// System parameter override, e.g. `--param rho=28`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Noise level(s), comma separated.
    #[arg(long)]
    pub noise: Option<String>,
    /// Number of recorded samples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    #[arg(long = "stencil-width")]
    pub stencil_width: Option<usize>,
    #[arg(long)]
    pub eta1: Option<f64>,
    #[arg(long)]
    pub eta2: Option<f64>,
    #[arg(long)]
    pub eta3: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of kernel centers M.
    #[arg(long)]
    pub centers: Option<usize>,
    /// `corrected` (divide by 6 dt) or `literal` (divide by dt).
    #[arg(long = "target-scaling")]
    pub target_scaling: Option<String>,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Orbit comparison length in time units.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn flag_settings(&self) -> Vec<(String, String)> {
        let mut s: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.push((k.to_string(), v));
            }
        };
        put("system", self.system.clone());
        put("noise", self.noise.clone());
        put("n", self.n.map(|v| v.to_string()));
        put("dt", self.dt.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("burn-in", self.burn_in.map(|v| v.to_string()));
        put("substeps", self.substeps.map(|v| v.to_string()));
        put(
            "estimator",
            self.estimator
                .map(|e| e.to_possible_value().unwrap().get_name().to_string()),
        );
        put("stencil-width", self.stencil_width.map(|v| v.to_string()));
        put("eta1", self.eta1.map(|v| v.to_string()));
        put("eta2", self.eta2.map(|v| v.to_string()));
        put("eta3", self.eta3.map(|v| v.to_string()));
        put("delta", self.delta.map(|v| v.to_string()));
        put("centers", self.centers.map(|v| v.to_string()));
        put("target-scaling", self.target_scaling.clone());
        put("x0", self.x0.clone());
        put("horizon", self.horizon.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        s
    }

    /// Settings in increasing priority: system defaults, config file, flags.
    /// `fallback_system` applies when neither names a system.
    pub fn resolve(&self, fallback_system: Option<SystemKind>) -> CliResult<RunConfig> {
        let mut settings = match &self.config {
            Some(path) => parse_config(&fs::read_to_string(path).map_err(Error::from)?)?,
            None => Vec::new(),
        };
        settings.extend(self.flag_settings());
        for p in &self.params {
            let Some((k, v)) = p.split_once('=') else {
                return usage(format!("--param expects NAME=VALUE, got `{p}`"));
            };
            settings.push((format!("param.{}", k.trim()), v.trim().to_string()));
        }
        let system = match settings.iter().rev().find(|(k, _)| k == "system") {
            Some((_, v)) => v
                .parse()
                .map_err(|e: Error| CliError::Usage(e.to_string()))?,
            None => match fallback_system {
                Some(s) => s,
                None => return usage("--system is required"),
            },
        };
        let mut cfg = RunConfig::defaults(system);
        for (k, v) in &settings {
            cfg.set(k, v)?;
        }
        if cfg.noise.is_empty() {
            return usage("at least one noise level is required");
        }
        Ok(cfg)
    }

    fn system_given(&self) -> CliResult<bool> {
        if self.system.is_some() {
            return Ok(true);
        }
        match &self.config {
            Some(path) => Ok(
                parse_config(&fs::read_to_string(path).map_err(Error::from)?)?
                    .iter()
                    .any(|(k, _)| k == "system"),
            ),
            None => Ok(false),
        }
    }
}

/// Summary of the orbit comparison stored in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    pub horizon: f64,
    pub dt: f64,
    pub final_distance: f64,
    pub max_distance: f64,
    pub extrapolated_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: SystemSpec,
    pub estimator: Estimator,
    pub n_train: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    pub error: ErrorReport,
    pub fit: Vec<FitDiagnostics>,
    pub orbit: OrbitSummary,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// All artifacts of one estimation run.
pub struct Experiment {
    pub spec: SystemSpec,
    pub train: Trajectory,
    pub train_meta: Option<TrajectoryMetadata>,
    pub test: Trajectory,
    pub test_meta: TrajectoryMetadata,
    pub model: DriftEstimate,
    pub report: RunReport,
    pub pointwise: PointwiseErrors,
    pub orbits: OrbitComparison,
}

/// Fits the configured estimator on a trajectory.
pub fn fit_model(cfg: &RunConfig, train: &Trajectory) -> CliResult<DriftEstimate> {
    let params = cfg.condexp.clone();
    Ok(match cfg.stencil(train.dim())? {
        None => DriftEstimate::Dense(estimate_drift_scaled(train, &params, cfg.scaling)?),
        Some(stencil) => {
            let snaps = extract_snapshots_scaled(train, &stencil, cfg.scaling)?;
            DriftEstimate::Sparse(estimate_drift_sparse(&snaps, &stencil, &params)?)
        }
    })
}

/// Simulates (or takes) a training path, fits, and evaluates on a held-out
/// path with seed `seed + 1`.
pub fn run_experiment(
    cfg: &RunConfig,
    noise: f64,
    train: Option<(Trajectory, Option<TrajectoryMetadata>)>,
) -> CliResult<Experiment> {
    let (spec, x0, opts, train, train_meta) = match train {
        Some((t, Some(meta))) => {
            let opts = meta.options();
            (meta.spec.clone(), meta.x0.clone(), opts, t, Some(meta))
        }
        Some((t, None)) => {
            let spec = cfg.spec(noise)?;
            crate::points::check_dim(spec.dim(), t.dim())?;
            let x0 = cfg.initial_state(&spec)?;
            (spec, x0, cfg.simulation(cfg.seed), t, None)
        }
        None => {
            let spec = cfg.spec(noise)?;
            let x0 = cfg.initial_state(&spec)?;
            let opts = cfg.simulation(cfg.seed);
            let t = simulate(&spec, &x0, &opts)?;
            let meta = TrajectoryMetadata::new(&spec, &x0, &opts);
            (spec, x0, opts, t, Some(meta))
        }
    };
    cfg.stencil(spec.dim())?;
    let test_opts = SimulationOptions {
        seed: opts.seed.wrapping_add(1),
        ..opts.clone()
    };
    let test = simulate(&spec, &x0, &test_opts)?;
    let test_meta = TrajectoryMetadata::new(&spec, &x0, &test_opts);

    let model = fit_model(cfg, &train)?;
    let error = relative_l2_error(&model, &spec, test.points())?;
    let pointwise = pointwise_errors(&model, &spec, test.points())?;
    let orbits = compare_orbits(&spec, &model, test.points().row(0), cfg.horizon, train.dt())?;
    let distance = orbits.divergence();
    let fit = match &model {
        DriftEstimate::Dense(m) => m.diagnostics.clone(),
        DriftEstimate::Sparse(m) => vec![m.diagnostics.clone()],
    };
    let report = RunReport {
        spec: spec.clone(),
        estimator: cfg.estimator,
        n_train: train.len(),
        train_seed: opts.seed,
        test_seed: test_opts.seed,
        error,
        fit,
        orbit: OrbitSummary {
            horizon: cfg.horizon,
            dt: train.dt(),
            final_distance: *distance.last().unwrap_or(&0.0),
            max_distance: distance.iter().copied().fold(0.0, f64::max),
            extrapolated_fraction: orbits.extrapolated_fraction(),
        },
    };
    Ok(Experiment {
        spec,
        train,
        train_meta,
        test,
        test_meta,
        model,
        report,
        pointwise,
        orbits,
    })
}

impl Experiment {
    /// Writes config.txt, trajectory.csv, test_trajectory.csv, model.json,
    /// report.json, pointwise.csv and orbits.csv into `dir`.
    pub fn write(&self, dir: &Path, cfg: &RunConfig) -> crate::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), cfg.to_text())?;
        self.train
            .write(&dir.join("trajectory.csv"), self.train_meta.as_ref())?;
        self.test
            .write(&dir.join("test_trajectory.csv"), Some(&self.test_meta))?;
        fs::write(dir.join("model.json"), serde_json::to_string(&self.model)?)?;
        fs::write(dir.join("report.json"), self.report.to_json())?;
        fs::write(dir.join("pointwise.csv"), self.pointwise.to_csv())?;
        fs::write(dir.join("orbits.csv"), self.orbits.to_csv())?;
        Ok(())
    }
}

pub fn load_model(path: &Path) -> crate::Result<DriftEstimate> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn single_noise(cfg: &RunConfig) -> CliResult<f64> {
    match cfg.noise.as_slice() {
        [n] => Ok(*n),
        _ => usage("this command takes a single --noise value; use `sweep` for several"),
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_simulate(args: &RunArgs) -> CliResult<()> {
    let cfg = args.resolve(None)?;
    let spec = cfg.spec(single_noise(&cfg)?)?;
    let x0 = cfg.initial_state(&spec)?;
    let opts = cfg.simulation(cfg.seed);
    let traj = simulate(&spec, &x0, &opts)?;
    let dir = out_dir(&cfg);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let path = dir.join("trajectory.csv");
    traj.write(&path, Some(&TrajectoryMetadata::new(&spec, &x0, &opts)))?;
    println!(
        "simulated {} samples of {} (noise {}) -> {}",
        traj.len(),
        spec.kind(),
        spec.noise,
        path.display()
    );
    Ok(())
}

fn cmd_estimate(args: &RunArgs, trajectory: Option<&Path>) -> CliResult<()> {
    let cfg = args.resolve(None)?;
    let noise = single_noise(&cfg)?;
    let train = trajectory.map(Trajectory::read).transpose()?;
    let exp = run_experiment(&cfg, noise, train)?;
    exp.write(&out_dir(&cfg), &cfg)?;
    println!(
        "{} noise {}: relative L2 error {:.4} on {} held-out points ({:.1}% extrapolated)",
        exp.spec.kind(),
        exp.spec.noise,
        exp.report.error.relative_l2,
        exp.report.error.n_test,
        100.0 * exp.report.error.extrapolated_fraction
    );
    Ok(())
}

fn cmd_compare(args: &RunArgs, model_path: &Path) -> CliResult<()> {
    let cfg = args.resolve(None)?;
    let spec = cfg.spec(single_noise(&cfg)?)?;
    let model = load_model(model_path)?;
    if model.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: model.dim(),
        }
        .into());
    }
    let x0 = cfg.initial_state(&spec)?;
    let orbits = compare_orbits(&spec, &model, &x0, cfg.horizon, cfg.dt)?;
    let dir = out_dir(&cfg);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    fs::write(dir.join("orbits.csv"), orbits.to_csv()).map_err(Error::from)?;
    let d = orbits.divergence();
    println!(
        "orbits over {} time units: final distance {:.4}, max distance {:.4}, {:.1}% extrapolated",
        cfg.horizon,
        d.last().unwrap_or(&0.0),
        d.iter().copied().fold(0.0, f64::max),
        100.0 * orbits.extrapolated_fraction()
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> CliResult<()> {
    let systems = if args.system_given()? {
        vec![args.resolve(None)?.system]
    } else {
        SystemKind::ALL.to_vec()
    };
    let root = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut summary =
        String::from("system,noise,estimator,relative_l2,extrapolated_fraction,status\n");
    let mut numerical_failure = false;
    for system in systems {
        let mut cfg = args.resolve(Some(system))?;
        if args.noise.is_none() && !cfg_file_sets(args, "noise")? {
            cfg.noise = vec![0.1, 0.2, 0.5];
        }
        for &noise in &cfg.noise {
            let dir = root.join(format!("{system}-{noise}"));
            let est = match cfg.estimator {
                Estimator::Dense => "dense",
                Estimator::Sparse => "sparse",
            };
            match run_experiment(&cfg, noise, None) {
                Ok(exp) => {
                    exp.write(
                        &dir,
                        &RunConfig {
                            noise: vec![noise],
                            out: Some(dir.clone()),
                            ..cfg.clone()
                        },
                    )?;
                    let e = &exp.report.error;
                    println!(
                        "{system} noise {noise}: relative L2 error {:.4}",
                        e.relative_l2
                    );
                    let _ = writeln!(
                        summary,
                        "{system},{noise},{est},{},{},ok",
                        e.relative_l2, e.extrapolated_fraction
                    );
                }
                Err(CliError::Run(e)) if e.is_numerical() => {
                    eprintln!("{system} noise {noise}: {e}");
                    numerical_failure = true;
                    let _ = writeln!(summary, "{system},{noise},{est},,,\"{e}\"");
                }
                Err(e) => return Err(e),
            }
        }
    }
    fs::create_dir_all(&root).map_err(Error::from)?;
    fs::write(root.join("sweep.csv"), summary).map_err(Error::from)?;
    if numerical_failure {
        return Err(Error::Solver("some sweep cells failed; see sweep.csv".into()).into());
    }
    Ok(())
}

fn cfg_file_sets(args: &RunArgs, key: &str) -> CliResult<bool> {
    match &args.config {
        Some(path) => Ok(
            parse_config(&fs::read_to_string(path).map_err(Error::from)?)?
                .iter()
                .any(|(k, _)| k == key),
        ),
        None => Ok(false),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate { run, trajectory } => cmd_estimate(run, trajectory.as_deref()),
        Command::Compare { run, model } => cmd_compare(run, model),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(system: &str) -> RunArgs {
        RunArgs {
            system: Some(system.into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_per_system() {
        let h = args("hopf").resolve(None).unwrap();
        assert_eq!(
            (h.n_samples, h.estimator, h.stencil_width),
            (10_000, Estimator::Dense, None)
        );
        let l = args("lorenz96").resolve(None).unwrap();
        assert_eq!(
            (l.n_samples, l.estimator, l.stencil_width),
            (2000, Estimator::Sparse, Some(4))
        );
        assert!(matches!(
            RunArgs::default().resolve(None),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "# experiment\nsystem = lorenz63\nnoise = 0.2\nn = 500\nparam.rho = 20\ndelta=0.5\n",
        )
        .unwrap();
        let a = RunArgs {
            config: Some(path),
            n: Some(800),
            params: vec!["beta=2".into()],
            ..Default::default()
        };
        let cfg = a.resolve(None).unwrap();
        assert_eq!(cfg.system, SystemKind::Lorenz63);
        assert_eq!(
            (cfg.n_samples, cfg.noise.clone(), cfg.condexp.delta),
            (800, vec![0.2], 0.5)
        );
        assert_eq!(cfg.params["rho"], 20.0);
        assert_eq!(cfg.params["beta"], 2.0);
    }

    #[test]
    fn config_text_round_trips() {
        let mut cfg = args("l96").resolve(None).unwrap();
        cfg.set("x0", "1,-2,3,4,5").unwrap();
        cfg.set("param.forcing", "6").unwrap();
        cfg.set("target-scaling", "literal").unwrap();
        let mut back = RunConfig::defaults(SystemKind::Hopf);
        for (k, v) in parse_config(&cfg.to_text()).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn usage_errors() {
        let mut cfg = args("hopf").resolve(None).unwrap();
        assert!(matches!(cfg.set("colour", "red"), Err(CliError::Usage(_))));
        assert!(matches!(cfg.set("n", "many"), Err(CliError::Usage(_))));
        assert!(parse_config("system hopf").is_err());
        cfg.estimator = Estimator::Sparse;
        assert!(matches!(cfg.stencil(2), Err(CliError::Usage(_))));
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(
            CliError::Run(Error::BlowUp { index: 3 }).exit_code(),
            EXIT_NUMERICAL
        );
    }
}
