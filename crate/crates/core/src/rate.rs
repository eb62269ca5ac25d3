//! Arrival-rate estimation and bandwidth selection.
//!
//! `λ̂_h(t) = Σᵢ f((sᵢ - t)/h)/h` on the interior `[bh, T - bh]`, held constant
//! at its boundary values on `[0, bh)` and `(T - bh, T]`. The bandwidth that
//! minimizes the leading MISE terms is
//! `h_opt = sqrt(μ ∫f² / (C'(0+) γ_f))`, with `C'(0+)` estimated by regressing
//! the bias-corrected ACF at a pilot bandwidth on the kernel's absolute-moment
//! integral.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acf::{bias_correct, centered_interior, lagged_mean_product};
use crate::error::{check_bandwidth, Error, Result};
use crate::kernels::Kernel;
use crate::simulate::RatePath;

/// Default number of regression lags for the `C'(0+)` estimate.
pub const DEFAULT_REGRESSION_POINTS: usize = 10;

/// Default expected number of events inside a pilot bandwidth.
pub const DEFAULT_RHO: f64 = 5.0;

/// A fluctuation z-score below this marks the rate as static.
pub const STATIC_Z_THRESHOLD: f64 = 3.0;

/// Grid points per bandwidth used when no grid step is given.
pub const GRID_POINTS_PER_BANDWIDTH: f64 = 10.0;

const GRID_CHUNK: usize = 4096;

/// Sorted event times observed on the window `[start, start + T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalData {
    times: Vec<f64>,
    start: f64,
    duration: f64,
}

impl ArrivalData {
    /// Events on `[0, horizon]`; `times` must already be sorted.
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::with_window(times, 0.0, horizon)
    }

    /// Events on `[start, start + duration]`; `times` must already be sorted.
    pub fn with_window(times: Vec<f64>, start: f64, duration: f64) -> Result<Self> {
        if !(start.is_finite() && duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidData(format!(
                "observation window [{start}, {start} + {duration}] is not valid"
            )));
        }
        let end = start + duration;
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::InvalidData(format!("event {i} is not finite")));
            }
            if t < start || t > end {
                return Err(Error::InvalidData(format!(
                    "event {i} at {t} lies outside [{start}, {end}]"
                )));
            }
        }
        if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidData(format!(
                "events {i} and {} are out of order",
                i + 1
            )));
        }
        Ok(Self {
            times,
            start,
            duration,
        })
    }

    /// Sorts `times` first. The flag reports whether any reordering happened.
    pub fn from_unsorted(mut times: Vec<f64>, horizon: f64) -> Result<(Self, bool)> {
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidData(format!("event {i} is not finite")));
        }
        let was_sorted = times.windows(2).all(|w| w[0] <= w[1]);
        if !was_sorted {
            times.sort_by(f64::total_cmp);
        }
        Ok((Self::new(times, horizon)?, !was_sorted))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn into_times(self) -> Vec<f64> {
        self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    /// Window length `T`.
    pub fn horizon(&self) -> f64 {
        self.duration
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// Number of events in `[a, b]`.
    pub fn count_between(&self, a: f64, b: f64) -> usize {
        let lo = self.times.partition_point(|&s| s < a);
        let hi = self.times.partition_point(|&s| s <= b);
        hi.saturating_sub(lo)
    }
}

/// `λ̂_h` on the uniform grid `start + j * step`, `j = 0..len`.
#[derive(Debug, Clone)]
pub struct RateEstimate {
    start: f64,
    step: f64,
    duration: f64,
    bandwidth: f64,
    kernel: Kernel,
    values: Vec<f64>,
    interior_lo: usize,
    interior_hi: usize,
}

impl RateEstimate {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn horizon(&self) -> f64 {
        self.duration
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.start + self.step * j as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|j| self.time(j))
    }

    /// Grid indices `lo..=hi` lying in `[bh, T - bh]`.
    pub fn interior_range(&self) -> (usize, usize) {
        (self.interior_lo, self.interior_hi)
    }

    pub fn interior_values(&self) -> &[f64] {
        &self.values[self.interior_lo..=self.interior_hi]
    }
}

/// `μ̂ = K / T`.
pub fn mean_rate(data: &ArrivalData) -> f64 {
    data.len() as f64 / data.horizon()
}

/// Pilot bandwidth `ρ / μ̂ = ρ T / K`.
pub fn pilot_bandwidth(data: &ArrivalData, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho {rho} must be positive"
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(rho / mean_rate(data))
}

/// `h / 10`.
pub fn default_grid_step(h: f64) -> f64 {
    h / GRID_POINTS_PER_BANDWIDTH
}

/// Kernel rate estimate on a grid of spacing `grid_step`.
pub fn estimate_rate(
    data: &ArrivalData,
    kernel: &Kernel,
    h: f64,
    grid_step: f64,
) -> Result<RateEstimate> {
    check_bandwidth(h)?;
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step {grid_step} must be positive"
        )));
    }
    let t_len = data.horizon();
    let bh = kernel.support() * h;
    if 2.0 * bh >= t_len {
        return Err(Error::BandwidthTooLarge {
            h,
            support: kernel.support(),
            horizon: t_len,
        });
    }
    // Relative slack keeps grid points that rounding pushes just past bh or T - bh.
    let slack = 1e-9;
    let last = (t_len / grid_step * (1.0 + slack)).floor() as usize;
    let lo = ((bh / grid_step) * (1.0 - slack)).ceil() as usize;
    let hi = (((t_len - bh) / grid_step) * (1.0 + slack))
        .floor()
        .min(last as f64) as usize;
    if hi <= lo {
        return Err(Error::InvalidParameter(format!(
            "grid step {grid_step} leaves fewer than two points in [bh, T - bh]"
        )));
    }

    let start = data.start();
    let mut values = vec![0.0; last + 1];
    values[lo..=hi]
        .par_chunks_mut(GRID_CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let first = lo + c * GRID_CHUNK;
            fill_window_sums(data.times(), kernel, h, start, grid_step, first, chunk);
        });
    let left = kernel_sum_at(data.times(), kernel, h, start + bh);
    let right = kernel_sum_at(data.times(), kernel, h, start + t_len - bh);
    values[..lo].fill(left);
    values[hi + 1..].fill(right);

    Ok(RateEstimate {
        start,
        step: grid_step,
        duration: t_len,
        bandwidth: h,
        kernel: kernel.clone(),
        values,
        interior_lo: lo,
        interior_hi: hi,
    })
}

/// Sliding-window kernel sums at consecutive grid points.
fn fill_window_sums(
    times: &[f64],
    kernel: &Kernel,
    h: f64,
    start: f64,
    step: f64,
    first: usize,
    out: &mut [f64],
) {
    let bh = kernel.support() * h;
    let inv_h = 1.0 / h;
    let t0 = start + step * first as f64;
    let mut lo = times.partition_point(|&s| s < t0 - bh);
    let mut hi = lo;
    for (k, v) in out.iter_mut().enumerate() {
        let t = start + step * (first + k) as f64;
        while lo < times.len() && times[lo] < t - bh {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < times.len() && times[hi] <= t + bh {
            hi += 1;
        }
        let sum: f64 = times[lo..hi]
            .iter()
            .map(|&s| kernel.density((s - t) * inv_h))
            .sum();
        *v = sum * inv_h;
    }
}

fn kernel_sum_at(times: &[f64], kernel: &Kernel, h: f64, t: f64) -> f64 {
    let bh = kernel.support() * h;
    let lo = times.partition_point(|&s| s < t - bh);
    let hi = times.partition_point(|&s| s <= t + bh);
    times[lo..hi]
        .iter()
        .map(|&s| kernel.density((s - t) / h))
        .sum::<f64>()
        / h
}

/// `h_opt = sqrt(μ ∫f² / (C'(0+) γ_f))` from known `μ` and `C'(0+)`.
pub fn analytic_optimal_bandwidth(mu: f64, cprime0: f64, kernel: &Kernel) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mean rate {mu} must be positive"
        )));
    }
    if !(cprime0.is_finite() && cprime0 < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "C'(0+) = {cprime0} must be negative"
        )));
    }
    Ok((mu * kernel.squared_integral() / (cprime0 * kernel.gamma_f())).sqrt())
}

/// Outcome of the `C'(0+)` regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPrimeEstimate {
    /// OLS slope, the `C'(0+)` estimate.
    pub slope: f64,
    pub intercept: f64,
    /// Effective regression lags.
    pub lags: Vec<f64>,
    /// Regressors: absolute-moment integrals at `lags`.
    pub x: Vec<f64>,
    /// Responses: bias-corrected ACF at `lags`.
    pub y: Vec<f64>,
    pub h_pilot: f64,
    pub mu_hat: f64,
    /// Raw ACF at lag `2bh` divided by its standard deviation under a constant rate.
    pub z_score: f64,
}

impl CPrimeEstimate {
    /// Nonnegative slope, or no fluctuation distinguishable from Poisson noise.
    pub fn is_static(&self) -> bool {
        !(self.slope < 0.0) || !(self.z_score >= STATIC_Z_THRESHOLD)
    }
}

/// Regression estimate of `C'(0+)` at pilot bandwidth `h_pilot`.
///
/// Lags are `i · 2bh / n` for `i = 0..n`, rounded to the rate grid.
pub fn estimate_cprime0(
    data: &ArrivalData,
    kernel: &Kernel,
    h_pilot: f64,
    n_points: usize,
) -> Result<CPrimeEstimate> {
    if n_points < 3 {
        return Err(Error::InvalidParameter(format!(
            "regression needs at least 3 points, got {n_points}"
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mu_hat = mean_rate(data);
    let est = estimate_rate(data, kernel, h_pilot, default_grid_step(h_pilot))?;
    let x_centered = centered_interior(&est, mu_hat);
    let step = est.step();
    let reach = 2.0 * kernel.support() * h_pilot;

    let mut lags = Vec::with_capacity(n_points);
    let mut xs = Vec::with_capacity(n_points);
    let mut ys = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let m = (i as f64 * reach / n_points as f64 / step).round() as usize;
        if m >= x_centered.len() {
            return Err(Error::LagOutOfRange {
                lag: m as f64 * step,
                limit: x_centered.len() as f64 * step,
            });
        }
        let t = m as f64 * step;
        let raw = lagged_mean_product(&x_centered, m);
        lags.push(t);
        xs.push(kernel.abs_moment_integral(t, h_pilot)?);
        ys.push(bias_correct(raw, mu_hat, kernel, h_pilot, t)?);
    }
    let (slope, intercept) = ols(&xs, &ys);

    let m_z = (reach / step).round() as usize;
    let z_score = if m_z < x_centered.len() {
        let raw = lagged_mean_product(&x_centered, m_z);
        let span = (x_centered.len() - m_z) as f64 * step;
        let sd = mu_hat * (kernel.autoconvolution_squared_integral() / (h_pilot * span)).sqrt();
        if sd > 0.0 {
            raw / sd
        } else {
            0.0
        }
    } else {
        0.0
    };

    Ok(CPrimeEstimate {
        slope,
        intercept,
        lags,
        x: xs,
        y: ys,
        h_pilot,
        mu_hat,
        z_score,
    })
}

/// Least-squares `(slope, intercept)`; slope is 0 when `x` or `y` is constant.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Plug-in bandwidth choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthSelection {
    Optimal { h: f64, cprime: CPrimeEstimate },
    Static { cprime: CPrimeEstimate },
}

impl BandwidthSelection {
    pub fn cprime(&self) -> &CPrimeEstimate {
        match self {
            BandwidthSelection::Optimal { cprime, .. } | BandwidthSelection::Static { cprime } => {
                cprime
            }
        }
    }

    pub fn h_opt(&self) -> Option<f64> {
        match self {
            BandwidthSelection::Optimal { h, .. } => Some(*h),
            BandwidthSelection::Static { .. } => None,
        }
    }

    pub fn into_result(self) -> Result<f64> {
        match self {
            BandwidthSelection::Optimal { h, .. } => Ok(h),
            BandwidthSelection::Static { cprime } => Err(Error::StaticRate {
                slope: cprime.slope,
                z_score: cprime.z_score,
            }),
        }
    }
}

/// Plug-in `ĥ_opt`, or the static-rate outcome.
pub fn select_bandwidth(
    data: &ArrivalData,
    kernel: &Kernel,
    rho: f64,
    n_points: usize,
) -> Result<BandwidthSelection> {
    let h_pilot = pilot_bandwidth(data, rho)?;
    let cprime = estimate_cprime0(data, kernel, h_pilot, n_points)?;
    if cprime.is_static() {
        return Ok(BandwidthSelection::Static { cprime });
    }
    let h = analytic_optimal_bandwidth(cprime.mu_hat, cprime.slope, kernel)?;
    Ok(BandwidthSelection::Optimal { h, cprime })
}

/// Plug-in `ĥ_opt` with the default regression; static data is an error.
pub fn optimal_bandwidth(data: &ArrivalData, kernel: &Kernel, rho: f64) -> Result<f64> {
    select_bandwidth(data, kernel, rho, DEFAULT_REGRESSION_POINTS)?.into_result()
}

/// `(1/(T μ̂²)) ∫₀ᵀ (λ̂(t) - λ(t))² dt`, trapezoid rule on the estimate grid.
pub fn empirical_mise(estimate: &RateEstimate, truth: &RatePath, mu_hat: f64) -> Result<f64> {
    let t_len = estimate.horizon();
    if estimate.start() != 0.0 || (t_len - truth.horizon()).abs() > 1e-9 * t_len {
        return Err(Error::HorizonMismatch {
            estimate: estimate.start() + t_len,
            truth: truth.horizon(),
        });
    }
    if !(mu_hat.is_finite() && mu_hat > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mean rate {mu_hat} must be positive"
        )));
    }
    let n = estimate.len();
    let lam = truth.sample_grid(0.0, estimate.step(), n);
    let sq: Vec<f64> = estimate
        .values()
        .iter()
        .zip(&lam)
        .map(|(a, b)| (a - b).powi(2))
        .collect();
    let step = estimate.step();
    let mut integral = step * (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[n - 1]));
    // Sliver between the last grid point and T.
    integral += (t_len - estimate.time(n - 1)).max(0.0) * sq[n - 1];
    Ok(integral / (t_len * mu_hat * mu_hat))
}
