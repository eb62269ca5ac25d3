//! Autocovariance of the rate process.
//!
//! The raw estimate at lag `t` is the mean of `(λ̂(s) - μ̂)(λ̂(s + t) - μ̂)` over
//! `s ∈ [bh, T - bh - t]`, evaluated on the rate grid with `t` rounded to a
//! whole number of grid steps. For `t < 2bh` the two rate estimates share
//! events, which adds `(μ/h) g(t/h)` to its expectation; the corrected estimate
//! subtracts that term.
//!
//! Lags below `2bĥ` use bandwidth `min(ρ/μ̂, ĥ)`, the rest use `ĥ`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_bandwidth, Error, Result};
use crate::kernels::Kernel;
use crate::rate::{
    default_grid_step, estimate_rate, mean_rate, select_bandwidth, ArrivalData, BandwidthSelection,
    RateEstimate, DEFAULT_REGRESSION_POINTS,
};

/// `λ̂ - μ̂` on the interior grid points.
pub(crate) fn centered_interior(est: &RateEstimate, mu_hat: f64) -> Vec<f64> {
    est.interior_values().iter().map(|v| v - mu_hat).collect()
}

/// `(1/(N - m)) Σ_{k < N - m} x_k x_{k+m}`; requires `m < N`.
pub(crate) fn lagged_mean_product(x: &[f64], m: usize) -> f64 {
    let n = x.len() - m;
    x[..n].iter().zip(&x[m..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

/// Grid offset `round(t / step)` for lag `t`, checked against the interior length.
pub fn lag_index(est: &RateEstimate, t: f64) -> Result<usize> {
    let (lo, hi) = est.interior_range();
    let n = hi - lo + 1;
    let limit = est.horizon() - 2.0 * est.kernel().support() * est.bandwidth();
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::LagOutOfRange { lag: t, limit });
    }
    let m = (t / est.step()).round();
    if m >= n as f64 || t >= limit {
        return Err(Error::LagOutOfRange { lag: t, limit });
    }
    Ok(m as usize)
}

/// Raw ACF at the grid lag nearest `t`. Returns `(effective lag, estimate)`.
pub fn raw_acf_on_grid(est: &RateEstimate, mu_hat: f64, t: f64) -> Result<(f64, f64)> {
    let m = lag_index(est, t)?;
    let x = centered_interior(est, mu_hat);
    Ok((m as f64 * est.step(), lagged_mean_product(&x, m)))
}

/// Raw ACF at lag `t` from scratch: builds the rate grid, then averages the lagged product.
pub fn estimate_acf_raw(
    data: &ArrivalData,
    kernel: &Kernel,
    h: f64,
    t: f64,
    grid_step: f64,
) -> Result<f64> {
    let est = estimate_rate(data, kernel, h, grid_step)?;
    Ok(raw_acf_on_grid(&est, mean_rate(data), t)?.1)
}

/// Removes the Poisson self-overlap `(μ̂/h) g(t/h)`; identity for `t >= 2bh`.
pub fn bias_correct(raw: f64, mu_hat: f64, kernel: &Kernel, h: f64, t: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let x = t.abs() / h;
    if x >= 2.0 * kernel.support() {
        return Ok(raw);
    }
    Ok(raw - mu_hat / h * kernel.autoconvolution(x))
}

/// Per-lag bandwidth: `small` for `t < threshold`, `large` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPolicy {
    pub small: f64,
    pub large: f64,
    pub threshold: f64,
}

impl BandwidthPolicy {
    /// Two-regime policy around `h_opt`: `min(ρ/μ̂, h_opt)` below `2b h_opt`.
    pub fn from_optimal(h_opt: f64, mu_hat: f64, rho: f64, kernel: &Kernel) -> Self {
        Self {
            small: (rho / mu_hat).min(h_opt),
            large: h_opt,
            threshold: 2.0 * kernel.support() * h_opt,
        }
    }

    /// One bandwidth for every lag.
    pub fn fixed(h: f64) -> Self {
        Self {
            small: h,
            large: h,
            threshold: 0.0,
        }
    }

    pub fn bandwidth_for(&self, t: f64) -> f64 {
        if t < self.threshold {
            self.small
        } else {
            self.large
        }
    }
}

/// Plug-in policy for `data`; static data is an error.
pub fn bandwidth_policy(data: &ArrivalData, kernel: &Kernel, rho: f64) -> Result<BandwidthPolicy> {
    let h_opt = select_bandwidth(data, kernel, rho, DEFAULT_REGRESSION_POINTS)?.into_result()?;
    Ok(BandwidthPolicy::from_optimal(
        h_opt,
        mean_rate(data),
        rho,
        kernel,
    ))
}

/// ACF estimates over a lag grid together with the rate grids they came from.
#[derive(Debug, Clone)]
pub struct AcfEstimate {
    /// Requested lags.
    pub lags: Vec<f64>,
    /// Lags rounded to the rate grid actually used.
    pub effective_lags: Vec<f64>,
    pub raw: Vec<f64>,
    pub corrected: Vec<f64>,
    pub h_used: Vec<f64>,
    pub mu_hat: f64,
    pub kernel: Kernel,
    pub policy: BandwidthPolicy,
    /// Distinct rate grids, one per bandwidth.
    pub grids: Vec<Arc<RateEstimate>>,
    /// Index into `grids` per lag.
    pub grid_of_lag: Vec<usize>,
    /// Grid offset per lag.
    pub lag_steps: Vec<usize>,
}

impl AcfEstimate {
    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn grid_for_lag(&self, i: usize) -> &RateEstimate {
        &self.grids[self.grid_of_lag[i]]
    }
}

/// ACF curve with the plug-in bandwidth policy.
pub fn estimate_acf_curve(
    data: &ArrivalData,
    kernel: &Kernel,
    lags: &[f64],
    rho: f64,
) -> Result<AcfEstimate> {
    let policy = bandwidth_policy(data, kernel, rho)?;
    estimate_acf_with_policy(data, kernel, lags, &policy, None)
}

/// ACF curve with a single bandwidth, the fallback for static data.
pub fn estimate_acf_fixed(
    data: &ArrivalData,
    kernel: &Kernel,
    lags: &[f64],
    h: f64,
) -> Result<AcfEstimate> {
    estimate_acf_with_policy(data, kernel, lags, &BandwidthPolicy::fixed(h), None)
}

/// ACF curve under an explicit policy. `grid_step` defaults to `h/10` per bandwidth.
pub fn estimate_acf_with_policy(
    data: &ArrivalData,
    kernel: &Kernel,
    lags: &[f64],
    policy: &BandwidthPolicy,
    grid_step: Option<f64>,
) -> Result<AcfEstimate> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if lags.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParameter("lags must be ascending".into()));
    }
    let mu_hat = mean_rate(data);
    let h_used: Vec<f64> = lags.iter().map(|&t| policy.bandwidth_for(t)).collect();

    let mut bandwidths: Vec<f64> = Vec::new();
    for &h in &h_used {
        if !bandwidths.contains(&h) {
            bandwidths.push(h);
        }
    }
    let grids = bandwidths
        .iter()
        .map(|&h| {
            let step = grid_step.unwrap_or_else(|| default_grid_step(h));
            estimate_rate(data, kernel, h, step).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    let centered: Vec<Vec<f64>> = grids.iter().map(|g| centered_interior(g, mu_hat)).collect();

    let grid_of_lag: Vec<usize> = h_used
        .iter()
        .map(|h| {
            bandwidths
                .iter()
                .position(|b| b == h)
                .expect("bandwidth registered")
        })
        .collect();
    let lag_steps = lags
        .iter()
        .zip(&grid_of_lag)
        .map(|(&t, &g)| lag_index(&grids[g], t))
        .collect::<Result<Vec<_>>>()?;

    let raw: Vec<f64> = (0..lags.len())
        .into_par_iter()
        .map(|i| lagged_mean_product(&centered[grid_of_lag[i]], lag_steps[i]))
        .collect();
    let effective_lags: Vec<f64> = (0..lags.len())
        .map(|i| lag_steps[i] as f64 * grids[grid_of_lag[i]].step())
        .collect();
    let corrected = (0..lags.len())
        .map(|i| bias_correct(raw[i], mu_hat, kernel, h_used[i], effective_lags[i]))
        .collect::<Result<Vec<_>>>()?;

    Ok(AcfEstimate {
        lags: lags.to_vec(),
        effective_lags,
        raw,
        corrected,
        h_used,
        mu_hat,
        kernel: kernel.clone(),
        policy: *policy,
        grids,
        grid_of_lag,
        lag_steps,
    })
}

/// `n` log-spaced lags from `lo` to `hi` inclusive.
pub fn log_lag_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "log lag grid needs 0 < lo <= hi and n >= 1, got lo={lo} hi={hi} n={n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
    out[n - 1] = hi;
    Ok(out)
}

/// Default lag grid for `data` under `policy`: 50 log-spaced lags from the
/// small-bandwidth grid step to `T/10`.
pub fn default_lag_grid(
    data: &ArrivalData,
    policy: &BandwidthPolicy,
    n: usize,
) -> Result<Vec<f64>> {
    log_lag_grid(default_grid_step(policy.small), data.horizon() / 10.0, n)
}

/// Either the plug-in curve, or the fixed-bandwidth fallback at the pilot bandwidth.
#[derive(Debug, Clone)]
pub struct AcfAnalysis {
    pub selection: BandwidthSelection,
    pub estimate: AcfEstimate,
}

impl AcfAnalysis {
    pub fn is_static(&self) -> bool {
        matches!(self.selection, BandwidthSelection::Static { .. })
    }
}

/// Plug-in ACF analysis that degrades to the pilot bandwidth on static data.
/// Lags default to [`default_lag_grid`] with 50 points.
pub fn analyze_acf(
    data: &ArrivalData,
    kernel: &Kernel,
    lags: Option<&[f64]>,
    rho: f64,
    grid_step: Option<f64>,
) -> Result<AcfAnalysis> {
    let selection = select_bandwidth(data, kernel, rho, DEFAULT_REGRESSION_POINTS)?;
    let policy = match &selection {
        BandwidthSelection::Optimal { h, cprime } => {
            BandwidthPolicy::from_optimal(*h, cprime.mu_hat, rho, kernel)
        }
        BandwidthSelection::Static { cprime } => BandwidthPolicy::fixed(cprime.h_pilot),
    };
    let default_lags;
    let lags = match lags {
        Some(l) => l,
        None => {
            default_lags = default_lag_grid(data, &policy, 50)?;
            &default_lags
        }
    };
    let estimate = estimate_acf_with_policy(data, kernel, lags, &policy, grid_step)?;
    Ok(AcfAnalysis {
        selection,
        estimate,
    })
}
