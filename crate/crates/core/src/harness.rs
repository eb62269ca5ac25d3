//! Monte Carlo experiments against models with known ground truth.
//!
//! Each replication draws a rate path and arrivals from seeds derived from
//! the master seed (see [`crate::rng`]), runs the estimators, and returns a
//! per-replication record. Replications run in parallel; records are
//! collected in replication order and reduced sequentially, so a report
//! depends only on the configuration.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acf::{estimate_acf_with_policy, BandwidthPolicy};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelName};
use crate::rate::{
    analytic_optimal_bandwidth, default_grid_step, empirical_mise, estimate_rate, mean_rate,
    select_bandwidth, ArrivalData, BandwidthSelection, DEFAULT_REGRESSION_POINTS, DEFAULT_RHO,
};
use crate::rng::{derive_seed, stream};
use crate::simulate::{
    log_gaussian_path_with, simulate_arrivals, simulate_two_state_path, ConstantModel,
    LogGaussianModel, RateModel, RatePath, StationaryGaussianSampler, TwoStateModel,
};
use crate::varci::{ci_band, RRange};

/// Lags of the coverage table.
pub const COVERAGE_LAGS: [f64; 10] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Fraction of the reference replication counts run by default.
pub const DESK_SCALE: f64 = 0.2;

/// Rate model of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    TwoState(TwoStateModel),
    LogGaussian(LogGaussianModel),
    Constant(ConstantModel),
}

impl ModelSpec {
    fn truth(&self) -> &dyn RateModel {
        match self {
            ModelSpec::TwoState(m) => m,
            ModelSpec::LogGaussian(m) => m,
            ModelSpec::Constant(m) => m,
        }
    }

    pub fn true_mean(&self) -> f64 {
        self.truth().true_mean()
    }

    pub fn true_acf(&self, t: f64) -> f64 {
        self.truth().true_acf(t)
    }

    pub fn true_acf_slope_at_zero(&self) -> f64 {
        self.truth().true_acf_slope_at_zero()
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::TwoState(_) => "two_state",
            ModelSpec::LogGaussian(_) => "log_gaussian",
            ModelSpec::Constant(_) => "constant",
        }
    }
}

/// Draws paths for one model and horizon, reusing expensive setup.
pub struct PathSimulator {
    model: ModelSpec,
    horizon: f64,
    sampler: Option<StationaryGaussianSampler>,
}

impl PathSimulator {
    pub fn new(model: ModelSpec, horizon: f64) -> Result<Self> {
        let sampler = match &model {
            ModelSpec::LogGaussian(m) => Some(m.sampler(horizon)?),
            _ => None,
        };
        Ok(Self {
            model,
            horizon,
            sampler,
        })
    }

    pub fn path(&self, seed: u64) -> Result<RatePath> {
        match (&self.model, &self.sampler) {
            (ModelSpec::TwoState(m), _) => simulate_two_state_path(m, self.horizon, seed),
            (ModelSpec::LogGaussian(m), Some(s)) => {
                log_gaussian_path_with(m, s, self.horizon, seed)
            }
            (ModelSpec::Constant(m), _) => RatePath::constant(m.rate, self.horizon),
            (ModelSpec::LogGaussian(_), None) => unreachable!("sampler built in new"),
        }
    }

    /// Path and arrivals of replication `rep` under `master`.
    pub fn replicate(&self, master: u64, rep: u64) -> Result<(RatePath, ArrivalData)> {
        let path = self.path(derive_seed(master, rep, stream::RATE_PATH))?;
        let data = simulate_arrivals(&path, derive_seed(master, rep, stream::ARRIVALS))?;
        Ok((path, data))
    }
}

/// Settings of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub kernels: Vec<KernelName>,
    /// Replications at full scale.
    pub reference_replications: usize,
    /// Replications actually run.
    pub replications: usize,
    pub scale: f64,
    pub horizon: f64,
    pub rho: f64,
    pub lags: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub r_range: RRange,
}

impl ExperimentConfig {
    fn preset(
        model: ModelSpec,
        horizon: f64,
        reference_replications: usize,
        lags: Vec<f64>,
    ) -> Self {
        let mut c = Self {
            model,
            kernels: KernelName::ALL.to_vec(),
            reference_replications,
            replications: 0,
            scale: DESK_SCALE,
            horizon,
            rho: DEFAULT_RHO,
            lags,
            alpha: 0.05,
            seed: 20_100_601,
            r_range: RRange::default(),
        };
        c.replications = scaled(reference_replications, DESK_SCALE);
        c
    }

    /// Two-state rate estimation: `k1=2, k2=5, λ_A=1000, λ_B=400`, `T=500`.
    pub fn table1() -> Self {
        Self::preset(
            ModelSpec::TwoState(TwoStateModel::reference()),
            500.0,
            100,
            Vec::new(),
        )
    }

    /// Log-Gaussian rate estimation: `H=6, a=1, M=1000`, `T=1500`.
    pub fn table2() -> Self {
        let m = LogGaussianModel::new(1000.0, 1.0, 6.0).expect("valid preset");
        Self::preset(ModelSpec::LogGaussian(m), 1500.0, 100, Vec::new())
    }

    /// Coverage for the two-state model.
    pub fn table3_two_state() -> Self {
        let mut c = Self::preset(
            ModelSpec::TwoState(TwoStateModel::reference()),
            500.0,
            1000,
            COVERAGE_LAGS.to_vec(),
        );
        c.kernels = vec![KernelName::Epanechnikov];
        c
    }

    /// Coverage for the short-range log-Gaussian model, `H=6, a=1`.
    pub fn table3_log_gaussian_short() -> Self {
        let m = LogGaussianModel::new(1000.0, 1.0, 6.0).expect("valid preset");
        let mut c = Self::preset(
            ModelSpec::LogGaussian(m),
            1500.0,
            1000,
            COVERAGE_LAGS.to_vec(),
        );
        c.kernels = vec![KernelName::Epanechnikov];
        c
    }

    /// Coverage for the long-range log-Gaussian model, `H=0.5, a=20`.
    pub fn table3_log_gaussian_long() -> Self {
        let m = LogGaussianModel::new(1000.0, 20.0, 0.5).expect("valid preset");
        let mut c = Self::preset(
            ModelSpec::LogGaussian(m),
            1500.0,
            1000,
            COVERAGE_LAGS.to_vec(),
        );
        c.kernels = vec![KernelName::Epanechnikov];
        c
    }

    /// Constant rate 500 on `T=500`.
    pub fn constant() -> Self {
        let mut c = Self::preset(
            ModelSpec::Constant(ConstantModel { rate: 500.0 }),
            500.0,
            100,
            Vec::new(),
        );
        c.kernels = vec![KernelName::Epanechnikov];
        c
    }

    /// Runs `round(reference × scale)` replications, at least one.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scale {scale} must lie in (0, 1]"
            )));
        }
        self.scale = scale;
        self.replications = scaled(self.reference_replications, scale);
        Ok(self)
    }

    pub fn full(self) -> Self {
        self.with_scale(1.0).expect("1 is a valid scale")
    }

    pub fn with_replications(mut self, n: usize) -> Self {
        self.replications = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replication count must be at least 1".into(),
            ));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scale {} must lie in (0, 1]",
                self.scale
            )));
        }
        if self.kernels.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one kernel is required".into(),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be positive",
                self.horizon
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rho {} must be positive",
                self.rho
            )));
        }
        Ok(())
    }
}

fn scaled(reference: usize, scale: f64) -> usize {
    ((reference as f64 * scale).round() as usize).max(1)
}

/// Mean and sample standard deviation; `sd` is absent below two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(Self { n, mean, sd })
    }

    /// Standard error of the mean.
    pub fn se(&self) -> Option<f64> {
        self.sd.map(|s| s / (self.n as f64).sqrt())
    }
}

/// One kernel's row of a rate-estimation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub kernel: KernelName,
    /// `h_opt` from the true `μ` and `C'(0+)`.
    pub h_opt: f64,
    pub h_hat: Option<Summary>,
    pub static_replications: usize,
    pub mise_h_opt: Option<Summary>,
    pub mise_h_hat: Option<Summary>,
    pub mise_half_h_opt: Option<Summary>,
    pub mise_double_h_opt: Option<Summary>,
}

/// Coverage of the confidence band at one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub lag: f64,
    pub mean_effective_lag: f64,
    pub true_acf: f64,
    pub coverage: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)`.
    pub coverage_se: f64,
    pub replications: usize,
    pub corrected: Option<Summary>,
    pub ci_half_width: Option<Summary>,
}

/// Plug-in bandwidths per replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub kernel: KernelName,
    /// Reference `h_opt`; absent for models without rate fluctuation.
    pub h_opt: Option<f64>,
    /// `None` where the replication was judged static.
    pub estimates: Vec<Option<f64>>,
    pub static_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub master_seed: u64,
    pub replications: usize,
    /// `(path seed, arrival seed)` per replication.
    pub replication_seeds: Vec<(u64, u64)>,
    pub skeleton_step: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub kernels: Vec<KernelRow>,
    pub coverage: Vec<CoverageRow>,
    pub histogram: Option<HistogramData>,
    pub metadata: RunMetadata,
}

fn metadata(config: &ExperimentConfig, started: Instant) -> RunMetadata {
    RunMetadata {
        master_seed: config.seed,
        replications: config.replications,
        replication_seeds: (0..config.replications as u64)
            .map(|r| {
                (
                    derive_seed(config.seed, r, stream::RATE_PATH),
                    derive_seed(config.seed, r, stream::ARRIVALS),
                )
            })
            .collect(),
        skeleton_step: match config.model {
            ModelSpec::LogGaussian(m) => Some(m.eps),
            _ => None,
        },
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

/// Per-kernel results of one replication.
struct RateRecord {
    h_hat: Option<f64>,
    mise_h_opt: f64,
    mise_h_hat: Option<f64>,
    mise_half: f64,
    mise_double: f64,
}

fn mise_at(
    data: &ArrivalData,
    path: &RatePath,
    kernel: &Kernel,
    h: f64,
    mu_hat: f64,
) -> Result<f64> {
    let est = estimate_rate(data, kernel, h, default_grid_step(h))?;
    empirical_mise(&est, path, mu_hat)
}

fn true_h_opt(config: &ExperimentConfig, kernel: &Kernel) -> Result<f64> {
    analytic_optimal_bandwidth(
        config.model.true_mean(),
        config.model.true_acf_slope_at_zero(),
        kernel,
    )
}

fn run_rate_table(config: &ExperimentConfig, name: &str) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let sim = PathSimulator::new(config.model, config.horizon)?;
    let kernels: Vec<Kernel> = config.kernels.iter().map(|&k| Kernel::new(k)).collect();
    let h_opts = kernels
        .iter()
        .map(|k| true_h_opt(config, k))
        .collect::<Result<Vec<_>>>()?;

    let records: Vec<Vec<RateRecord>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let (path, data) = sim.replicate(config.seed, rep)?;
            let mu_hat = mean_rate(&data);
            kernels
                .iter()
                .zip(&h_opts)
                .map(|(k, &h_opt)| {
                    let sel = select_bandwidth(&data, k, config.rho, DEFAULT_REGRESSION_POINTS)?;
                    let h_hat = sel.h_opt();
                    Ok(RateRecord {
                        h_hat,
                        mise_h_opt: mise_at(&data, &path, k, h_opt, mu_hat)?,
                        mise_h_hat: h_hat
                            .map(|h| mise_at(&data, &path, k, h, mu_hat))
                            .transpose()?,
                        mise_half: mise_at(&data, &path, k, 0.5 * h_opt, mu_hat)?,
                        mise_double: mise_at(&data, &path, k, 2.0 * h_opt, mu_hat)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = config
        .kernels
        .iter()
        .enumerate()
        .map(|(i, &kernel)| {
            let col = |f: &dyn Fn(&RateRecord) -> Option<f64>| -> Vec<f64> {
                records.iter().filter_map(|r| f(&r[i])).collect()
            };
            let h_hat = col(&|r| r.h_hat);
            KernelRow {
                kernel,
                h_opt: h_opts[i],
                static_replications: records.len() - h_hat.len(),
                h_hat: Summary::of(&h_hat),
                mise_h_opt: Summary::of(&col(&|r| Some(r.mise_h_opt))),
                mise_h_hat: Summary::of(&col(&|r| r.mise_h_hat)),
                mise_half_h_opt: Summary::of(&col(&|r| Some(r.mise_half))),
                mise_double_h_opt: Summary::of(&col(&|r| Some(r.mise_double))),
            }
        })
        .collect();

    Ok(ExperimentReport {
        experiment: name.to_string(),
        config: config.clone(),
        kernels: rows,
        coverage: Vec::new(),
        histogram: None,
        metadata: metadata(config, started),
    })
}

/// Rate-estimation table for the two-state model: `h_opt`, `ĥ_opt`, and MISE
/// at `h_opt`, `ĥ_opt`, `h_opt/2`, `2h_opt` per kernel.
pub fn run_table1(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if !matches!(config.model, ModelSpec::TwoState(_)) {
        return Err(Error::InvalidParameter(
            "table 1 needs a two-state model".into(),
        ));
    }
    run_rate_table(config, "table1")
}

/// Rate-estimation table for the log-Gaussian model.
pub fn run_table2(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if !matches!(config.model, ModelSpec::LogGaussian(_)) {
        return Err(Error::InvalidParameter(
            "table 2 needs a log-Gaussian model".into(),
        ));
    }
    run_rate_table(config, "table2")
}

/// One replication's confidence band, evaluated against the truth.
struct CoverageRecord {
    covered: Vec<bool>,
    effective_lags: Vec<f64>,
    corrected: Vec<f64>,
    half_width: Vec<f64>,
}

/// Runs the full estimate-plus-band pipeline on one dataset. Static data
/// falls back to the pilot bandwidth for every lag.
fn coverage_replication(
    data: &ArrivalData,
    config: &ExperimentConfig,
    kernel: &Kernel,
) -> Result<CoverageRecord> {
    let sel = select_bandwidth(data, kernel, config.rho, DEFAULT_REGRESSION_POINTS)?;
    let policy = match &sel {
        BandwidthSelection::Optimal { h, cprime } => {
            BandwidthPolicy::from_optimal(*h, cprime.mu_hat, config.rho, kernel)
        }
        BandwidthSelection::Static { cprime } => BandwidthPolicy::fixed(cprime.h_pilot),
    };
    let acf = estimate_acf_with_policy(data, kernel, &config.lags, &policy, None)?;
    let band = ci_band(&acf, config.alpha, config.r_range)?;
    let covered = (0..band.len())
        .map(|i| band.covers(i, config.model.true_acf(band.effective_lags[i])))
        .collect();
    Ok(CoverageRecord {
        covered,
        effective_lags: band.effective_lags.clone(),
        corrected: band.corrected.clone(),
        half_width: band
            .upper
            .iter()
            .zip(&band.corrected)
            .map(|(u, c)| u - c)
            .collect(),
    })
}

/// Fraction of replications whose band covers the true ACF, per lag.
pub fn run_coverage(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.lags.is_empty() {
        return Err(Error::InvalidParameter(
            "coverage needs at least one lag".into(),
        ));
    }
    let started = Instant::now();
    let sim = PathSimulator::new(config.model, config.horizon)?;
    let kernel = Kernel::new(config.kernels[0]);
    let records: Vec<CoverageRecord> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let (_, data) = sim.replicate(config.seed, rep)?;
            coverage_replication(&data, config, &kernel)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = records.len();
    let coverage = config
        .lags
        .iter()
        .enumerate()
        .map(|(i, &lag)| {
            let hits = records.iter().filter(|r| r.covered[i]).count();
            let p = hits as f64 / n as f64;
            let eff: Vec<f64> = records.iter().map(|r| r.effective_lags[i]).collect();
            let mean_eff = eff.iter().sum::<f64>() / n as f64;
            CoverageRow {
                lag,
                mean_effective_lag: mean_eff,
                true_acf: config.model.true_acf(lag),
                coverage: p,
                coverage_se: (p * (1.0 - p) / n as f64).sqrt(),
                replications: n,
                corrected: Summary::of(&records.iter().map(|r| r.corrected[i]).collect::<Vec<_>>()),
                ci_half_width: Summary::of(
                    &records.iter().map(|r| r.half_width[i]).collect::<Vec<_>>(),
                ),
            }
        })
        .collect();

    Ok(ExperimentReport {
        experiment: "coverage".into(),
        config: config.clone(),
        kernels: Vec::new(),
        coverage,
        histogram: None,
        metadata: metadata(config, started),
    })
}

/// Plug-in bandwidth of every replication for the first configured kernel.
pub fn run_hopt_histogram(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let sim = PathSimulator::new(config.model, config.horizon)?;
    let kernel_name = config.kernels[0];
    let kernel = Kernel::new(kernel_name);
    let estimates: Vec<Option<f64>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let (_, data) = sim.replicate(config.seed, rep)?;
            if data.is_empty() {
                return Ok(None);
            }
            Ok(select_bandwidth(&data, &kernel, config.rho, DEFAULT_REGRESSION_POINTS)?.h_opt())
        })
        .collect::<Result<Vec<_>>>()?;
    let h_opt = true_h_opt(config, &kernel).ok();
    let static_replications = estimates.iter().filter(|e| e.is_none()).count();
    Ok(ExperimentReport {
        experiment: "hopt_histogram".into(),
        config: config.clone(),
        kernels: Vec::new(),
        coverage: Vec::new(),
        histogram: Some(HistogramData {
            kernel: kernel_name,
            h_opt,
            estimates,
            static_replications,
        }),
        metadata: metadata(config, started),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes the kernel rows as CSV.
pub fn write_kernel_csv<W: Write>(report: &ExperimentReport, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "kernel,h_opt,h_hat_mean,h_hat_sd,static_replications,\
         mise_h_opt_mean,mise_h_opt_sd,mise_h_hat_mean,mise_h_hat_sd,\
         mise_half_mean,mise_half_sd,mise_double_mean,mise_double_sd"
    )?;
    for r in &report.kernels {
        let m = |s: &Option<Summary>| fmt_opt(s.map(|s| s.mean));
        let d = |s: &Option<Summary>| fmt_opt(s.and_then(|s| s.sd));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kernel,
            r.h_opt,
            m(&r.h_hat),
            d(&r.h_hat),
            r.static_replications,
            m(&r.mise_h_opt),
            d(&r.mise_h_opt),
            m(&r.mise_h_hat),
            d(&r.mise_h_hat),
            m(&r.mise_half_h_opt),
            d(&r.mise_half_h_opt),
            m(&r.mise_double_h_opt),
            d(&r.mise_double_h_opt)
        )?;
    }
    Ok(())
}

/// Writes the coverage rows as CSV.
pub fn write_coverage_csv<W: Write>(report: &ExperimentReport, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "lag,mean_effective_lag,true_acf,coverage,coverage_se,replications,corrected_mean,corrected_sd,half_width_mean"
    )?;
    for r in &report.coverage {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.lag,
            r.mean_effective_lag,
            r.true_acf,
            r.coverage,
            r.coverage_se,
            r.replications,
            fmt_opt(r.corrected.map(|s| s.mean)),
            fmt_opt(r.corrected.and_then(|s| s.sd)),
            fmt_opt(r.ci_half_width.map(|s| s.mean)),
        )?;
    }
    Ok(())
}

/// Writes per-replication plug-in bandwidths as CSV; static replications have an empty value.
pub fn write_histogram_csv<W: Write>(report: &ExperimentReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "replication,h_hat,h_opt")?;
    if let Some(h) = &report.histogram {
        for (i, e) in h.estimates.iter().enumerate() {
            writeln!(out, "{i},{},{}", fmt_opt(*e), fmt_opt(h.h_opt))?;
        }
    }
    Ok(())
}

/// Writes the report's CSV tables and a JSON summary into `dir`.
/// Returns the paths written.
pub fn write_report(
    report: &ExperimentReport,
    dir: &Path,
) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let stem = &report.experiment;
    if !report.kernels.is_empty() {
        let p = dir.join(format!("{stem}_kernels.csv"));
        write_kernel_csv(report, std::io::BufWriter::new(std::fs::File::create(&p)?))?;
        written.push(p);
    }
    if !report.coverage.is_empty() {
        let p = dir.join(format!("{stem}_coverage.csv"));
        write_coverage_csv(report, std::io::BufWriter::new(std::fs::File::create(&p)?))?;
        written.push(p);
    }
    if report.histogram.is_some() {
        let p = dir.join(format!("{stem}_hopt.csv"));
        write_histogram_csv(report, std::io::BufWriter::new(std::fs::File::create(&p)?))?;
        written.push(p);
    }
    let p = dir.join(format!("{stem}_summary.json"));
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(&p, json)?;
    written.push(p);
    Ok(written)
}
