//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p coxkernel-cli --test acceptance -- 1 4 8`.

use std::time::Instant;

use coxkernel::acf::{estimate_acf_with_policy, log_lag_grid, BandwidthPolicy};
use coxkernel::harness::{run_coverage, run_table1, ExperimentConfig};
use coxkernel::rate::{analytic_optimal_bandwidth, estimate_rate, mean_rate, DEFAULT_RHO};
use coxkernel::simulate::{simulate_arrivals, simulate_two_state_path, RatePath, TwoStateModel};
use coxkernel::varci::{variance_estimate, variance_estimate_direct, RRange};
use coxkernel::{ArrivalData, Kernel, KernelName};
use coxkernel_cli::{io, run_pipeline, AnalysisConfig, InputFormat, LagSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const SEED: u64 = 20_100_601;

/// `(kernel, h_opt, MISE at ĥ_opt)`, both in units of 1e-2.
const TABLE1: [(KernelName, f64, f64); 4] = [
    (KernelName::Uniform, 4.93, 2.43),
    (KernelName::Epanechnikov, 6.40, 2.24),
    (KernelName::Triangular, 7.33, 2.17),
    (KernelName::Quartic, 7.74, 2.21),
];

const COVERAGE_CHECK_LAGS: [f64; 3] = [0.05, 0.2, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion1() -> Outcome {
    let m = TwoStateModel::reference();
    let cprime = -7.0 * (m.lam_a - m.lam_b).powi(2) * m.k1 * m.k2 / (m.k1 + m.k2).powi(2);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, expected, _) in TABLE1 {
        let h = analytic_optimal_bandwidth(828.57, cprime, &Kernel::new(name)).unwrap() * 100.0;
        let e = rel(h, expected);
        pass &= e <= 0.01;
        parts.push(format!("{name} {h:.3} (ref {expected}, {:.2}%)", 100.0 * e));
    }
    Outcome::new(pass, parts.join("; "))
}

/// Criteria 2 and 3 share one two-state rate-table run.
fn criteria2_3() -> (Outcome, Outcome) {
    let config = ExperimentConfig::table1();
    let report = match run_table1(&config) {
        Ok(r) => r,
        Err(e) => {
            return (
                Outcome::new(false, e.to_string()),
                Outcome::new(false, e.to_string()),
            )
        }
    };
    let (mut pass2, mut pass3) = (true, true);
    let (mut p2, mut p3) = (Vec::new(), Vec::new());
    for row in &report.kernels {
        let (_, _, mise_ref) = TABLE1.iter().find(|r| r.0 == row.kernel).copied().unwrap();
        let h_mean = row.h_hat.map(|s| s.mean).unwrap_or(f64::NAN);
        let e = rel(h_mean, row.h_opt);
        pass2 &= e <= 0.15 && row.static_replications == 0;
        p2.push(format!(
            "{} mean h {:.4} vs {:.4} ({:.1}%, {} static)",
            row.kernel,
            h_mean,
            row.h_opt,
            100.0 * e,
            row.static_replications
        ));
        let mean =
            |s: Option<coxkernel::harness::Summary>| s.map(|s| 100.0 * s.mean).unwrap_or(f64::NAN);
        let (hat, half, double) = (
            mean(row.mise_h_hat),
            mean(row.mise_half_h_opt),
            mean(row.mise_double_h_opt),
        );
        let e = rel(hat, mise_ref);
        pass3 &= e <= 0.15 && hat < half && hat < double;
        p3.push(format!(
            "{} MISE {hat:.3} (ref {mise_ref}, {:.1}%), h/2 {half:.3}, 2h {double:.3}",
            row.kernel,
            100.0 * e
        ));
    }
    let n = report.metadata.replications;
    (
        Outcome::new(pass2, format!("{n} reps: {}", p2.join("; "))),
        Outcome::new(pass3, format!("{n} reps, x1e-2: {}", p3.join("; "))),
    )
}

fn criterion4() -> Outcome {
    let model = TwoStateModel::reference();
    let path =
        simulate_two_state_path(&model, 500.0, coxkernel::rng::derive_seed(SEED, 0, 0)).unwrap();
    let data = simulate_arrivals(&path, coxkernel::rng::derive_seed(SEED, 0, 1)).unwrap();
    let lags: Vec<f64> = (0..41).map(|i| 0.1 + 0.01 * i as f64).collect();
    let analysis = match coxkernel::acf::analyze_acf(
        &data,
        &Kernel::epanechnikov(),
        Some(&lags),
        DEFAULT_RHO,
        None,
    ) {
        Ok(a) => a,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let est = &analysis.estimate;
    let pts: Vec<(f64, f64)> = est
        .effective_lags
        .iter()
        .zip(&est.corrected)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&t, &c)| (t, c.ln()))
        .collect();
    if pts.len() < 2 {
        return Outcome::new(false, "fewer than two positive ACF values");
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let target = -(model.k1 + model.k2);
    let e = rel(slope, target);
    Outcome::new(
        e <= 0.15 && pts.len() == lags.len(),
        format!(
            "slope {slope:.3} vs {target} ({:.1}%), {} of {} lags positive",
            100.0 * e,
            pts.len(),
            lags.len()
        ),
    )
}

fn coverage_at(config: &ExperimentConfig) -> Result<Vec<(f64, f64)>, String> {
    let report = run_coverage(config).map_err(|e| e.to_string())?;
    Ok(report
        .coverage
        .iter()
        .map(|r| (r.lag, r.coverage))
        .collect())
}

fn criterion5() -> Outcome {
    let mut c = ExperimentConfig::table3_two_state();
    c.lags = COVERAGE_CHECK_LAGS.to_vec();
    match coverage_at(&c) {
        Ok(cov) => {
            let pass = cov.iter().all(|&(_, p)| (0.90..=0.99).contains(&p));
            Outcome::new(
                pass,
                format!("{} reps, (lag, coverage) {cov:?}", c.replications),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn criterion6() -> Outcome {
    let mut c = ExperimentConfig::table3_log_gaussian_long();
    c.lags = COVERAGE_CHECK_LAGS.to_vec();
    match coverage_at(&c) {
        Ok(cov) => {
            let pass = cov.iter().all(|&(_, p)| p < 0.80);
            Outcome::new(
                pass,
                format!("{} reps, (lag, coverage) {cov:?}", c.replications),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn write_arrivals(dir: &std::path::Path, data: &ArrivalData) -> std::path::PathBuf {
    let p = dir.join("arrivals.txt");
    io::write_timestamps(&p, data.times(), InputFormat::Text).unwrap();
    p
}

fn criterion7() -> Outcome {
    let path = RatePath::constant(500.0, 500.0).unwrap();
    let data = simulate_arrivals(&path, coxkernel::rng::derive_seed(SEED, 0, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut c = AnalysisConfig::new(write_arrivals(dir.path(), &data), dir.path().join("out"));
    c.horizon = Some(500.0);
    c.lags = LagSpec::Explicit(log_lag_grid(0.1, 10.0, 50).unwrap());
    match run_pipeline(&c) {
        Ok(out) => {
            let mu2 = out.metadata.mu_hat.powi(2);
            let worst = out
                .acf
                .estimate
                .corrected
                .iter()
                .map(|v| v.abs() / mu2)
                .fold(0.0, f64::max);
            Outcome::new(
                out.metadata.static_rate || worst < 0.01,
                format!(
                    "static {} (z {:.2}), max |C|/mu^2 on [0.1, 10] {worst:.2e}",
                    out.metadata.static_rate, out.metadata.fluctuation_z_score
                ),
            )
        }
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn criterion8() -> Outcome {
    let worst = std::cell::Cell::new(0.0f64);
    let res = runner(32).run(&(0u64..10_000, 0.0f64..2.0), |(seed, t)| {
        // T = 6.5, h = 0.05, step 0.005: just over 1000 interior grid points.
        let path = simulate_two_state_path(&TwoStateModel::reference(), 6.5, seed).unwrap();
        let d = simulate_arrivals(&path, seed + 1).unwrap();
        let est = estimate_rate(&d, &Kernel::epanechnikov(), 0.05, 0.005).unwrap();
        prop_assert!(est.interior_values().len() >= 1000);
        let mu = mean_rate(&d);
        for range in [RRange::Full, RRange::FirstZero, RRange::Fixed(0.3)] {
            let fast = variance_estimate(&est, mu, t, range).unwrap();
            let direct = variance_estimate_direct(&est, mu, t, range).unwrap();
            let e = (fast - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
            worst.set(worst.get().max(e));
            prop_assert!(e <= 1e-6, "{:?} at t={}: {} vs {}", range, t, fast, direct);
        }
        Ok(())
    });
    match res {
        Ok(()) => Outcome::new(
            true,
            format!(
                "32 cases x 3 ranges, worst relative gap {:.1e}",
                worst.get()
            ),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn criterion9() -> Outcome {
    // Mean rate 828.57 over T = 2414 gives about 2e6 events.
    let horizon = 2414.0;
    let path = simulate_two_state_path(&TwoStateModel::reference(), horizon, 9).unwrap();
    let data = simulate_arrivals(&path, 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = write_arrivals(dir.path(), &data);
    let mut c = AnalysisConfig::new(input, dir.path().join("out"));
    c.horizon = Some(horizon);
    c.lags = LagSpec::Log(50);
    let start = Instant::now();
    let res = run_pipeline(&c);
    let secs = start.elapsed().as_secs_f64();
    match res {
        Ok(out) => Outcome::new(
            secs <= 300.0 && out.band.len() == 50,
            format!(
                "{} events, {} lags with bands in {secs:.1} s",
                out.metadata.events,
                out.band.len()
            ),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            failure_persistence: None,
            ..Config::with_cases(cases)
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn kernel_invariants() -> Result<(), String> {
    runner(64)
        .run(
            &(
                prop::sample::select(KernelName::ALL.to_vec()),
                0.0f64..1.0,
                1e-3f64..10.0,
                0.0f64..4.0,
            ),
            |(name, u, h, extra)| {
                let k = Kernel::new(name);
                prop_assert!((k.mass() - 1.0).abs() < 1e-12);
                prop_assert_eq!(k.density(u), k.density(-u));
                prop_assert!(k.gamma_f() < 0.0);
                let t = 2.0 * k.support() * h * (1.0 + extra);
                let v = k.abs_moment_integral(t, h).unwrap();
                prop_assert!((v - t).abs() <= 1e-12 * t);
                Ok(())
            },
        )
        .map_err(|e| format!("kernel: {e}"))
}

fn arb_events() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (5.0f64..50.0).prop_flat_map(|t| (prop::collection::vec(0.0..t, 1..300), Just(t)))
}

fn equivariance() -> Result<(), String> {
    runner(32)
        .run(
            &(arb_events(), -100.0f64..100.0, 0.01f64..100.0, 0.1f64..1.0),
            |((mut times, t), shift, c, h)| {
                times.sort_by(f64::total_cmp);
                let k = Kernel::epanechnikov();
                let base = estimate_rate(
                    &ArrivalData::new(times.clone(), t).unwrap(),
                    &k,
                    h,
                    h / 10.0,
                )
                .unwrap();
                let scale = base.values().iter().cloned().fold(1.0 / h, f64::max);
                let shifted: Vec<f64> = times.iter().map(|s| s + shift).collect();
                let moved = estimate_rate(
                    &ArrivalData::with_window(shifted, shift, t).unwrap(),
                    &k,
                    h,
                    h / 10.0,
                )
                .unwrap();
                let stretched_times: Vec<f64> = times.iter().map(|s| s * c).collect();
                let stretched = estimate_rate(
                    &ArrivalData::new(stretched_times, t * c).unwrap(),
                    &k,
                    h * c,
                    h * c / 10.0,
                )
                .unwrap();
                prop_assert_eq!(base.len(), moved.len());
                prop_assert_eq!(base.len(), stretched.len());
                for j in 0..base.len() {
                    prop_assert!((moved.values()[j] - base.values()[j]).abs() <= 1e-7 * scale);
                    prop_assert!(
                        (stretched.values()[j] * c - base.values()[j]).abs() <= 1e-7 * scale
                    );
                }
                Ok(())
            },
        )
        .map_err(|e| format!("equivariance: {e}"))
}

fn correction_region() -> Result<(), String> {
    let path = RatePath::new(vec![0.0, 5.0, 9.0], vec![300.0, 100.0, 200.0], 20.0).unwrap();
    runner(16)
        .run(
            &(
                0u64..1000,
                prop::collection::vec(0.0f64..2.0, 1..20),
                prop::sample::select(KernelName::ALL.to_vec()),
            ),
            |(seed, mut lags, name)| {
                lags.sort_by(f64::total_cmp);
                let d = simulate_arrivals(&path, seed).unwrap();
                let k = Kernel::new(name);
                let policy = BandwidthPolicy {
                    small: 0.02,
                    large: 0.1,
                    threshold: 0.2,
                };
                let acf = estimate_acf_with_policy(&d, &k, &lags, &policy, None).unwrap();
                for i in 0..acf.len() {
                    if acf.effective_lags[i] >= 2.0 * k.support() * acf.h_used[i] {
                        prop_assert_eq!(acf.corrected[i], acf.raw[i]);
                    } else {
                        prop_assert!(acf.corrected[i] <= acf.raw[i]);
                    }
                }
                Ok(())
            },
        )
        .map_err(|e| format!("correction region: {e}"))
}

/// Poisson counts (chi-square) and uniform placement (Kolmogorov-Smirnov) on a constant segment.
fn simulator_fit() -> Result<(), String> {
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
    let path = RatePath::constant(4.0, 5.0).map_err(|e| e.to_string())?;
    let reps = 5000u64;
    let (lo, hi) = (12usize, 28usize);
    let mut observed = vec![0.0; hi - lo + 1];
    let mut pooled = Vec::new();
    for rep in 0..reps {
        let d = simulate_arrivals(&path, coxkernel::rng::derive_seed(SEED, rep, 1))
            .map_err(|e| e.to_string())?;
        observed[d.len().clamp(lo, hi) - lo] += 1.0;
        if rep < 200 {
            pooled.extend(d.times().iter().map(|s| s / 5.0));
        }
    }
    let pmf = Poisson::new(20.0).unwrap();
    let mut probs: Vec<f64> = ((lo + 1)..hi).map(|k| pmf.pmf(k as u64)).collect();
    probs.insert(0, (0..=lo as u64).map(|k| pmf.pmf(k)).sum());
    probs.push(1.0 - probs.iter().sum::<f64>());
    let stat: f64 = observed
        .iter()
        .zip(&probs)
        .map(|(o, p)| (o - p * reps as f64).powi(2) / (p * reps as f64))
        .sum();
    let p = 1.0 - ChiSquared::new((probs.len() - 1) as f64).unwrap().cdf(stat);
    if p <= 1e-3 {
        return Err(format!("count chi-square {stat:.1}, p = {p:.2e}"));
    }
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len() as f64;
    let ks = pooled
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs()))
        .fold(0.0, f64::max);
    // Asymptotic 0.1% critical value.
    if ks * n.sqrt() > 1.949 {
        return Err(format!("uniform placement KS {ks:.4} on {n} points"));
    }
    Ok(())
}

fn criterion10() -> Outcome {
    let suites: [(&str, fn() -> Result<(), String>); 4] = [
        ("kernel", kernel_invariants),
        ("equivariance", equivariance),
        ("correction", correction_region),
        ("simulator", simulator_fit),
    ];
    let mut failures = Vec::new();
    for (name, f) in suites {
        if let Err(e) = f() {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        Outcome::new(
            true,
            "kernel mass/symmetry/gamma/abs-moment, shift/scale equivariance, correction region, simulator fit",
        )
    } else {
        Outcome::new(false, failures.join("; "))
    }
}

fn report(n: u32, o: Outcome, secs: f64, results: &mut Vec<(u32, Outcome)>) {
    println!(
        "criterion {n}: {} ({secs:.1} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    results.push((n, o));
}

fn main() {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);

    let mut results = Vec::new();
    let single: [(u32, fn() -> Outcome); 8] = [
        (1, criterion1),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
        (10, criterion10),
    ];
    for (n, f) in single {
        if n == 4 && (want(2) || want(3)) {
            let start = Instant::now();
            let (o2, o3) = criteria2_3();
            let secs = start.elapsed().as_secs_f64();
            for (m, o) in [(2, o2), (3, o3)] {
                if want(m) {
                    report(m, o, secs, &mut results);
                }
            }
        }
        if want(n) {
            let start = Instant::now();
            let o = f();
            report(n, o, start.elapsed().as_secs_f64(), &mut results);
        }
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
