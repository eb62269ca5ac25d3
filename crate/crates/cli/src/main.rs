use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coxkernel::simulate::{ConstantModel, LogGaussianModel, TwoStateModel};
use coxkernel::KernelName;
use coxkernel_cli::{
    parse_r_range, run_acf, run_ci, run_experiment, run_pipeline, run_rate, run_simulate,
    AnalysisConfig, BandwidthRequest, CliError, CoverageModel, ExperimentKind, ExperimentOverrides,
    InputFormat, KernelChoice, LagSpec, SimModel, SimulateConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "coxkernel",
    version,
    about = "Kernel inference for Cox process arrival data"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Kernel: uniform, epanechnikov, triangular, quartic.
    #[arg(long, global = true, default_value = "epanechnikov")]
    kernel: String,
    /// Tabulated kernel file (two columns: u, f(u)); overrides --kernel.
    #[arg(long, global = true)]
    kernel_file: Option<PathBuf>,
    /// Expected events per pilot bandwidth.
    #[arg(long, global = true, default_value_t = 5.0)]
    rho: f64,
    /// Confidence bands are 1 - alpha.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Master seed for simulation and experiments.
    #[arg(long, global = true, default_value_t = 20_100_601)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Separation range of the variance sum: first-zero, full, or a time.
    #[arg(long, global = true, default_value = "first-zero")]
    r_max: String,
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Args, Debug)]
struct Input {
    /// Timestamp file.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Observation horizon; defaults to the last timestamp.
    #[arg(long)]
    horizon: Option<f64>,
    /// Rate grid step; defaults to a tenth of each bandwidth.
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => InputFormat::Text,
            FormatArg::Binary => InputFormat::Binary,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelArg {
    TwoState,
    LogGaussian,
    Constant,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a Cox process realization.
    Simulate {
        #[arg(long, value_enum, default_value = "two-state")]
        model: ModelArg,
        #[arg(long, default_value_t = 500.0)]
        horizon: f64,
        #[arg(long, default_value_t = 2.0)]
        k1: f64,
        #[arg(long, default_value_t = 5.0)]
        k2: f64,
        #[arg(long, default_value_t = 1000.0)]
        lam_a: f64,
        #[arg(long, default_value_t = 400.0)]
        lam_b: f64,
        /// Log-Gaussian rate scale M.
        #[arg(long, default_value_t = 1000.0)]
        scale: f64,
        /// Log-Gaussian inverse time scale a.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Log-Gaussian decay exponent H.
        #[arg(long, default_value_t = 6.0)]
        decay: f64,
        /// Log-Gaussian skeleton step; defaults to where the skeleton ACF drops to 0.99.
        #[arg(long)]
        eps: Option<f64>,
        /// Constant rate.
        #[arg(long, default_value_t = 500.0)]
        rate: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        /// Also write the rate path as path.csv.
        #[arg(long)]
        path_csv: bool,
    },
    /// Estimate the arrival rate.
    Rate {
        #[command(flatten)]
        input: Input,
        /// Bandwidth.
        #[arg(long, conflicts_with = "auto_h")]
        h: Option<f64>,
        /// Use the plug-in optimal bandwidth.
        #[arg(long)]
        auto_h: bool,
    },
    /// Estimate the autocovariance of the rate.
    Acf {
        #[command(flatten)]
        input: Input,
        /// Lags: comma-separated list or log:<count>.
        #[arg(long, default_value = "log:50")]
        lags: String,
        /// Attach a 1 - ALPHA confidence band.
        #[arg(long)]
        ci: Option<f64>,
    },
    /// Autocovariance with pointwise confidence intervals.
    Ci {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "log:50")]
        lags: String,
    },
    /// Rate, autocovariance and confidence band with metadata.
    Pipeline {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "log:50")]
        lags: String,
    },
    /// Monte Carlo experiments.
    Experiment {
        /// Experiment table: 1 (two-state rate), 2 (log-Gaussian rate) or 3 (coverage).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), required_unless_present = "hist_hopt")]
        table: Option<u8>,
        /// Model row for table 3: two-state, log-gaussian-short, log-gaussian-long.
        #[arg(long, default_value = "two-state")]
        model: String,
        /// Plug-in bandwidth of every replication instead of a table.
        #[arg(long, conflicts_with = "table")]
        hist_hopt: bool,
        /// Histogram on constant-rate data.
        #[arg(long, requires = "hist_hopt")]
        constant: bool,
        /// Fraction of the reference replication count, in (0, 1].
        #[arg(long)]
        scale: Option<f64>,
        /// Reference replication counts.
        #[arg(long, conflicts_with = "scale")]
        full: bool,
        #[arg(long)]
        replications: Option<usize>,
        /// Lags for table 3 (comma-separated).
        #[arg(long)]
        lags: Option<String>,
        /// Use only this kernel instead of the preset set.
        #[arg(long)]
        only_kernel: Option<String>,
    },
}

fn kernel_choice(g: &Global) -> Result<KernelChoice, CliError> {
    match &g.kernel_file {
        Some(p) => Ok(KernelChoice::File(p.clone())),
        None => Ok(KernelChoice::Named(
            g.kernel.parse().map_err(CliError::from)?,
        )),
    }
}

fn analysis(g: &Global, input: &Input, lags: &str) -> Result<AnalysisConfig, CliError> {
    let mut c = AnalysisConfig::new(&input.input, &g.out);
    c.format = input.format.into();
    c.horizon = input.horizon;
    c.kernel = kernel_choice(g)?;
    c.rho = g.rho;
    c.alpha = g.alpha;
    c.lags = lags.parse::<LagSpec>()?;
    c.grid_step = input.grid_step;
    c.r_range = parse_r_range(&g.r_max)?;
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate {
            model,
            horizon,
            k1,
            k2,
            lam_a,
            lam_b,
            scale,
            a,
            decay,
            eps,
            rate,
            format,
            path_csv,
        } => {
            let model = match model {
                ModelArg::TwoState => SimModel::TwoState(TwoStateModel::new(k1, k2, lam_a, lam_b)?),
                ModelArg::LogGaussian => {
                    let m = LogGaussianModel::new(scale, a, decay)?;
                    SimModel::LogGaussian(match eps {
                        Some(e) => m.with_eps(e)?,
                        None => m,
                    })
                }
                ModelArg::Constant => {
                    if !(rate.is_finite() && rate >= 0.0) {
                        return Err(CliError::Usage(format!(
                            "--rate {rate} must be nonnegative"
                        )));
                    }
                    SimModel::Constant(ConstantModel { rate })
                }
            };
            let (data, _) = run_simulate(&SimulateConfig {
                model,
                horizon,
                seed: g.seed,
                out_dir: g.out.clone(),
                format: format.into(),
                write_path: path_csv,
            })?;
            println!(
                "simulated {} events on [0, {horizon}] into {}",
                data.len(),
                g.out.display()
            );
        }
        Command::Rate { input, h, auto_h } => {
            let c = analysis(g, &input, "log:1")?;
            let req = match (h, auto_h) {
                (Some(h), _) => BandwidthRequest::Fixed(h),
                (None, true) => BandwidthRequest::Auto,
                (None, false) => return Err(CliError::Usage("give --h or --auto-h".into())),
            };
            let est = run_rate(&c, req)?;
            println!(
                "bandwidth {} with {} grid points",
                est.bandwidth(),
                est.len()
            );
        }
        Command::Acf { input, lags, ci } => {
            let mut c = analysis(g, &input, &lags)?;
            if let Some(a) = ci {
                c.alpha = a;
            }
            let (a, _) = run_acf(&c, ci.is_some())?;
            report_selection(&a);
        }
        Command::Ci { input, lags } => {
            let c = analysis(g, &input, &lags)?;
            let band = run_ci(&c)?;
            println!(
                "{} lags written to {}",
                band.len(),
                c.out_dir.join("ci.csv").display()
            );
        }
        Command::Pipeline { input, lags } => {
            let c = analysis(g, &input, &lags)?;
            let out = run_pipeline(&c)?;
            report_selection(&out.acf);
            println!("outputs in {}", c.out_dir.display());
        }
        Command::Experiment {
            table,
            model,
            hist_hopt,
            constant,
            scale,
            full,
            replications,
            lags,
            only_kernel,
        } => {
            let kind = match (table, hist_hopt) {
                (_, true) => ExperimentKind::Histogram,
                (Some(1), _) => ExperimentKind::Table1,
                (Some(2), _) => ExperimentKind::Table2,
                (Some(3), _) => ExperimentKind::Table3(model.parse::<CoverageModel>()?),
                _ => return Err(CliError::Usage("give --table or --hist-hopt".into())),
            };
            let lags = match lags {
                Some(l) => match l.parse::<LagSpec>()? {
                    LagSpec::Explicit(v) => Some(v),
                    LagSpec::Log(_) => {
                        return Err(CliError::Usage("experiment lags must be explicit".into()))
                    }
                },
                None => None,
            };
            let kernel = only_kernel
                .map(|k| k.parse::<KernelName>())
                .transpose()
                .map_err(CliError::from)?;
            let o = ExperimentOverrides {
                scale,
                full,
                replications,
                seed: Some(g.seed),
                kernel,
                rho: Some(g.rho),
                alpha: Some(g.alpha),
                r_range: Some(parse_r_range(&g.r_max)?),
                lags,
                constant_model: constant,
            };
            let report = run_experiment(kind, &o, &g.out)?;
            println!(
                "{} finished: {} replications in {:.1} s, results in {}",
                report.experiment,
                report.metadata.replications,
                report.metadata.wall_time_secs,
                g.out.display()
            );
        }
    }
    Ok(())
}

fn report_selection(a: &coxkernel::acf::AcfAnalysis) {
    match a.selection.h_opt() {
        Some(h) => println!("plug-in bandwidth {h}"),
        None => println!("static rate: no detectable fluctuation; pilot bandwidth used"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.global.log)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
