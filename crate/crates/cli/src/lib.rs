//! Analysis pipeline behind the `coxkernel` command.
//!
//! Each subcommand maps to one function here so the same code paths are
//! testable without spawning a process.

pub mod io;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use coxkernel::acf::{estimate_acf_with_policy, log_lag_grid, AcfAnalysis, BandwidthPolicy};
use coxkernel::harness::{self, ExperimentConfig, ExperimentReport};
use coxkernel::rate::{
    default_grid_step, estimate_rate, mean_rate, pilot_bandwidth, select_bandwidth,
    BandwidthSelection, RateEstimate, DEFAULT_REGRESSION_POINTS, DEFAULT_RHO,
};
use coxkernel::simulate::{
    simulate_arrivals, simulate_log_gaussian_path, simulate_two_state_path, ConstantModel,
    LogGaussianModel, RatePath, TwoStateModel,
};
use coxkernel::varci::{ci_band, CiBand, RRange};
use coxkernel::{ArrivalData, Kernel, KernelName};
use log::{info, warn};
use serde::Serialize;

pub use io::{ingest, Ingested, InputFormat};

/// Failures, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    /// 1 usage, 2 data (including I/O), 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<coxkernel::Error> for CliError {
    fn from(e: coxkernel::Error) -> Self {
        use coxkernel::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidData(_) | E::EmptyData | E::HorizonMismatch { .. } => CliError::Data(msg),
            E::InvalidBandwidth(_)
            | E::BandwidthTooLarge { .. }
            | E::LagOutOfRange { .. }
            | E::InvalidParameter(_)
            | E::InvalidKernel(_) => CliError::Usage(msg),
            E::Simulation(_) | E::StaticRate { .. } => CliError::Numerical(msg),
        }
    }
}

/// Built-in kernel name or a tabulated kernel file.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Named(KernelName),
    File(PathBuf),
}

impl KernelChoice {
    pub fn load(&self) -> Result<Kernel, CliError> {
        match self {
            KernelChoice::Named(n) => Ok(Kernel::new(*n)),
            KernelChoice::File(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                Ok(Kernel::from_table_str(&text)?)
            }
        }
    }
}

/// Lags given explicitly or as `log:n` (n log-spaced lags from the small
/// bandwidth's grid step to `T/10`).
#[derive(Debug, Clone, PartialEq)]
pub enum LagSpec {
    Explicit(Vec<f64>),
    Log(usize),
}

impl Default for LagSpec {
    fn default() -> Self {
        LagSpec::Log(50)
    }
}

impl FromStr for LagSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if let Some(n) = s.strip_prefix("log:") {
            let n: usize = n
                .parse()
                .map_err(|_| CliError::Usage(format!("'{s}': expected log:<count>")))?;
            if n == 0 {
                return Err(CliError::Usage("log lag count must be positive".into()));
            }
            return Ok(LagSpec::Log(n));
        }
        let mut lags = s
            .split(',')
            .map(|p| {
                let v: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("lag '{p}' is not a number")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(CliError::Usage(format!("lag {v} must be nonnegative")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        lags.sort_by(f64::total_cmp);
        Ok(LagSpec::Explicit(lags))
    }
}

/// Parses `--r-max`: `first-zero`, `full`, or a separation in time units.
pub fn parse_r_range(s: &str) -> Result<RRange, CliError> {
    match s {
        "first-zero" | "auto" => Ok(RRange::FirstZero),
        "full" => Ok(RRange::Full),
        v => {
            let r: f64 = v.parse().map_err(|_| {
                CliError::Usage(format!(
                    "--r-max '{v}': expected first-zero, full or a number"
                ))
            })?;
            if !(r.is_finite() && r >= 0.0) {
                return Err(CliError::Usage(format!("--r-max {r} must be nonnegative")));
            }
            Ok(RRange::Fixed(r))
        }
    }
}

/// Everything an analysis of one timestamp file needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub horizon: Option<f64>,
    pub kernel: KernelChoice,
    pub rho: f64,
    pub alpha: f64,
    pub lags: LagSpec,
    pub grid_step: Option<f64>,
    pub out_dir: PathBuf,
    pub r_range: RRange,
}

impl AnalysisConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            format: InputFormat::Text,
            horizon: None,
            kernel: KernelChoice::Named(KernelName::Epanechnikov),
            rho: DEFAULT_RHO,
            alpha: 0.05,
            lags: LagSpec::default(),
            grid_step: None,
            out_dir: out_dir.into(),
            r_range: RRange::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(CliError::Usage(format!(
                "--rho {} must be positive",
                self.rho
            )));
        }
        if !(3.0..=10.0).contains(&self.rho) {
            warn!("rho {} is outside the recommended range [3, 10]", self.rho);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!(
                "--alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if let Some(g) = self.grid_step {
            if !(g.is_finite() && g > 0.0) {
                return Err(CliError::Usage(format!("--grid-step {g} must be positive")));
            }
        }
        Ok(())
    }

    fn load(&self) -> Result<(Ingested, Kernel), CliError> {
        self.validate()?;
        let kernel = self.kernel.load()?;
        let ingested = ingest(&self.input, self.format, self.horizon)?;
        for w in &ingested.warnings {
            warn!("{}: {w}", self.input.display());
        }
        Ok((ingested, kernel))
    }
}

/// How the rate bandwidth was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRequest {
    Fixed(f64),
    Auto,
}

/// `rate` subcommand: writes `rate.csv`. Returns the estimate.
pub fn run_rate(
    config: &AnalysisConfig,
    bandwidth: BandwidthRequest,
) -> Result<RateEstimate, CliError> {
    let (ingested, kernel) = config.load()?;
    let h = match bandwidth {
        BandwidthRequest::Fixed(h) => h,
        BandwidthRequest::Auto => select_bandwidth(
            &ingested.data,
            &kernel,
            config.rho,
            DEFAULT_REGRESSION_POINTS,
        )?
        .into_result()?,
    };
    let step = config.grid_step.unwrap_or_else(|| default_grid_step(h));
    let est = estimate_rate(&ingested.data, &kernel, h, step)?;
    io::write_rate_csv(&config.out_dir.join("rate.csv"), &est)?;
    Ok(est)
}

fn resolve_lags(
    spec: &LagSpec,
    data: &ArrivalData,
    policy: &BandwidthPolicy,
    grid_step: Option<f64>,
) -> Result<Vec<f64>, CliError> {
    match spec {
        LagSpec::Explicit(l) => Ok(l.clone()),
        LagSpec::Log(n) => {
            let lo = grid_step.unwrap_or_else(|| default_grid_step(policy.small));
            Ok(log_lag_grid(lo, data.horizon() / 10.0, *n)?)
        }
    }
}

/// Plug-in ACF with the static-rate fallback.
fn acf_analysis(
    config: &AnalysisConfig,
    data: &ArrivalData,
    kernel: &Kernel,
) -> Result<AcfAnalysis, CliError> {
    let selection = select_bandwidth(data, kernel, config.rho, DEFAULT_REGRESSION_POINTS)?;
    let policy = match &selection {
        BandwidthSelection::Optimal { h, cprime } => {
            BandwidthPolicy::from_optimal(*h, cprime.mu_hat, config.rho, kernel)
        }
        BandwidthSelection::Static { cprime } => {
            warn!(
                "no detectable rate fluctuation (slope {:.4e}, z {:.2}); using the pilot bandwidth for every lag",
                cprime.slope, cprime.z_score
            );
            BandwidthPolicy::fixed(cprime.h_pilot)
        }
    };
    let lags = resolve_lags(&config.lags, data, &policy, config.grid_step)?;
    let estimate = estimate_acf_with_policy(data, kernel, &lags, &policy, config.grid_step)?;
    Ok(AcfAnalysis {
        selection,
        estimate,
    })
}

/// `acf` subcommand: writes `acf.csv`, with the band when `with_ci`.
pub fn run_acf(
    config: &AnalysisConfig,
    with_ci: bool,
) -> Result<(AcfAnalysis, Option<CiBand>), CliError> {
    let (ingested, kernel) = config.load()?;
    let analysis = acf_analysis(config, &ingested.data, &kernel)?;
    let band = with_ci
        .then(|| ci_band(&analysis.estimate, config.alpha, config.r_range))
        .transpose()?;
    io::write_acf_csv(
        &config.out_dir.join("acf.csv"),
        &analysis.estimate,
        band.as_ref(),
    )?;
    Ok((analysis, band))
}

/// `ci` subcommand: writes `ci.csv`.
pub fn run_ci(config: &AnalysisConfig) -> Result<CiBand, CliError> {
    let (ingested, kernel) = config.load()?;
    let analysis = acf_analysis(config, &ingested.data, &kernel)?;
    let band = ci_band(&analysis.estimate, config.alpha, config.r_range)?;
    io::write_ci_csv(&config.out_dir.join("ci.csv"), &band)?;
    Ok(band)
}

/// Contents of `metadata.json`.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineMetadata {
    pub input: String,
    pub format: InputFormat,
    pub events: usize,
    pub horizon: f64,
    pub horizon_inferred: bool,
    pub resorted: bool,
    pub warnings: Vec<String>,
    pub kernel: String,
    pub rho: f64,
    pub alpha: f64,
    pub mu_hat: f64,
    pub static_rate: bool,
    pub h_opt: Option<f64>,
    pub h_pilot: f64,
    pub cprime0_slope: f64,
    pub fluctuation_z_score: f64,
    pub rate_bandwidth: f64,
    pub rate_grid_step: f64,
    pub acf_policy: BandwidthPolicy,
    pub acf_grid_steps: Vec<f64>,
    /// Largest `|requested - effective|` lag rounding.
    pub max_lag_rounding: f64,
    pub r_range: RRange,
    pub lags: usize,
}

/// Outputs of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub metadata: PipelineMetadata,
    pub rate: RateEstimate,
    pub acf: AcfAnalysis,
    pub band: CiBand,
}

/// Full analysis: `rate.csv`, `acf.csv` (with band), `metadata.json`.
pub fn run_pipeline(config: &AnalysisConfig) -> Result<PipelineOutput, CliError> {
    let (ingested, kernel) = config.load()?;
    let data = &ingested.data;
    info!("{} events on [0, {}]", data.len(), data.horizon());
    let acf = acf_analysis(config, data, &kernel)?;
    let band = ci_band(&acf.estimate, config.alpha, config.r_range)?;

    let cprime = acf.selection.cprime().clone();
    let rate_h = acf.selection.h_opt().unwrap_or(cprime.h_pilot);
    let rate_step = config
        .grid_step
        .unwrap_or_else(|| default_grid_step(rate_h));
    let rate = estimate_rate(data, &kernel, rate_h, rate_step)?;

    let out = &config.out_dir;
    io::write_rate_csv(&out.join("rate.csv"), &rate)?;
    io::write_acf_csv(&out.join("acf.csv"), &acf.estimate, Some(&band))?;

    let est = &acf.estimate;
    let metadata = PipelineMetadata {
        input: config.input.display().to_string(),
        format: config.format,
        events: data.len(),
        horizon: data.horizon(),
        horizon_inferred: config.horizon.is_none(),
        resorted: ingested.resorted,
        warnings: ingested.warnings.clone(),
        kernel: kernel.name().to_string(),
        rho: config.rho,
        alpha: config.alpha,
        mu_hat: mean_rate(data),
        static_rate: acf.is_static(),
        h_opt: acf.selection.h_opt(),
        h_pilot: pilot_bandwidth(data, config.rho)?,
        cprime0_slope: cprime.slope,
        fluctuation_z_score: cprime.z_score,
        rate_bandwidth: rate_h,
        rate_grid_step: rate_step,
        acf_policy: est.policy,
        acf_grid_steps: est.grids.iter().map(|g| g.step()).collect(),
        max_lag_rounding: est
            .lags
            .iter()
            .zip(&est.effective_lags)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        r_range: config.r_range,
        lags: est.len(),
    };
    io::write_json(&out.join("metadata.json"), &metadata)?;
    Ok(PipelineOutput {
        metadata,
        rate,
        acf,
        band,
    })
}

/// Model choice for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SimModel {
    TwoState(TwoStateModel),
    LogGaussian(LogGaussianModel),
    Constant(ConstantModel),
}

/// Settings of the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub model: SimModel,
    pub horizon: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: InputFormat,
    pub write_path: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationMetadata {
    #[serde(flatten)]
    pub model: SimModel,
    pub horizon: f64,
    pub seed: u64,
    pub path_seed: u64,
    pub arrival_seed: u64,
    pub events: usize,
    pub true_mean: f64,
    pub timestamps: String,
    pub format: InputFormat,
}

/// File name of simulated timestamps for `format`.
pub fn timestamps_file(format: InputFormat) -> &'static str {
    match format {
        InputFormat::Text => "arrivals.txt",
        InputFormat::Binary => "arrivals.bin",
    }
}

/// Simulates one realization and writes timestamps, `metadata.json`, and
/// optionally `path.csv`.
pub fn run_simulate(config: &SimulateConfig) -> Result<(ArrivalData, RatePath), CliError> {
    use coxkernel::rng::{derive_seed, stream};
    use coxkernel::simulate::RateModel;
    let path_seed = derive_seed(config.seed, 0, stream::RATE_PATH);
    let arrival_seed = derive_seed(config.seed, 0, stream::ARRIVALS);
    let (path, true_mean) = match &config.model {
        SimModel::TwoState(m) => (
            simulate_two_state_path(m, config.horizon, path_seed)?,
            m.true_mean(),
        ),
        SimModel::LogGaussian(m) => (
            simulate_log_gaussian_path(m, config.horizon, path_seed)?,
            m.true_mean(),
        ),
        SimModel::Constant(m) => (RatePath::constant(m.rate, config.horizon)?, m.true_mean()),
    };
    let data = simulate_arrivals(&path, arrival_seed)?;
    let out = &config.out_dir;
    let name = timestamps_file(config.format);
    io::write_timestamps(&out.join(name), data.times(), config.format)?;
    if config.write_path {
        io::write_path_csv(&out.join("path.csv"), &path)?;
    }
    io::write_json(
        &out.join("metadata.json"),
        &SimulationMetadata {
            model: config.model,
            horizon: config.horizon,
            seed: config.seed,
            path_seed,
            arrival_seed,
            events: data.len(),
            true_mean,
            timestamps: name.to_string(),
            format: config.format,
        },
    )?;
    Ok((data, path))
}

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Table1,
    Table2,
    Table3(CoverageModel),
    Histogram,
}

/// Model row of the coverage table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageModel {
    TwoState,
    LogGaussianShort,
    LogGaussianLong,
}

impl FromStr for CoverageModel {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "two-state" => Ok(CoverageModel::TwoState),
            "log-gaussian-short" | "h6" => Ok(CoverageModel::LogGaussianShort),
            "log-gaussian-long" | "h0.5" => Ok(CoverageModel::LogGaussianLong),
            other => Err(CliError::Usage(format!(
                "unknown coverage model '{other}' (two-state|log-gaussian-short|log-gaussian-long)"
            ))),
        }
    }
}

/// Overrides applied on top of an experiment preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOverrides {
    pub scale: Option<f64>,
    pub full: bool,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub kernel: Option<KernelName>,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub r_range: Option<RRange>,
    pub lags: Option<Vec<f64>>,
    /// Model for the bandwidth histogram: two-state (default) or constant.
    pub constant_model: bool,
}

/// Builds the configured preset.
pub fn experiment_config(
    kind: ExperimentKind,
    o: &ExperimentOverrides,
) -> Result<ExperimentConfig, CliError> {
    let mut c = match kind {
        ExperimentKind::Table1 => ExperimentConfig::table1(),
        ExperimentKind::Table2 => ExperimentConfig::table2(),
        ExperimentKind::Table3(CoverageModel::TwoState) => ExperimentConfig::table3_two_state(),
        ExperimentKind::Table3(CoverageModel::LogGaussianShort) => {
            ExperimentConfig::table3_log_gaussian_short()
        }
        ExperimentKind::Table3(CoverageModel::LogGaussianLong) => {
            ExperimentConfig::table3_log_gaussian_long()
        }
        ExperimentKind::Histogram => {
            let mut c = if o.constant_model {
                ExperimentConfig::constant()
            } else {
                ExperimentConfig::table1()
            };
            c.kernels = vec![KernelName::Epanechnikov];
            c
        }
    };
    if o.full {
        c = c.full();
    } else if let Some(s) = o.scale {
        c = c.with_scale(s)?;
    }
    if let Some(n) = o.replications {
        c = c.with_replications(n);
    }
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(k) = o.kernel {
        c.kernels = vec![k];
    }
    if let Some(r) = o.rho {
        c.rho = r;
    }
    if let Some(a) = o.alpha {
        c.alpha = a;
    }
    if let Some(r) = o.r_range {
        c.r_range = r;
    }
    if let Some(l) = &o.lags {
        c.lags = l.clone();
    }
    c.validate()?;
    Ok(c)
}

/// `experiment` subcommand: runs the preset and writes CSV tables and a JSON summary.
pub fn run_experiment(
    kind: ExperimentKind,
    o: &ExperimentOverrides,
    out_dir: &Path,
) -> Result<ExperimentReport, CliError> {
    let config = experiment_config(kind, o)?;
    info!(
        "running {:?} with {} replications (scale {})",
        kind, config.replications, config.scale
    );
    let report = match kind {
        ExperimentKind::Table1 => harness::run_table1(&config)?,
        ExperimentKind::Table2 => harness::run_table2(&config)?,
        ExperimentKind::Table3(_) => harness::run_coverage(&config)?,
        ExperimentKind::Histogram => harness::run_hopt_histogram(&config)?,
    };
    harness::write_report(&report, out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    Ok(report)
}
