//! Variance approximation for the ACF estimate and pointwise confidence bands.
//!
//! With `a_k = x_k x_{k+m}` the lagged products of the centered rate grid
//! (`L` of them), the fourth-moment covariance at separation `r = qΔ` is
//! `ĉov_q = max{S_q / (L - q) - Ĉ², 0}` where `S_q = Σ_k a_k a_{k+q}`, and
//! `V̂ = (2/L²) Σ_q (L - q) ĉov_q`.
//!
//! `S_q` for every `q` is one zero-padded FFT autocorrelation. Two lags share
//! a transform by packing them as the real and imaginary parts of one signal.
//!
//! The clamp keeps every `ĉov_q` nonnegative, so noise in the tail of the
//! r-range only ever adds to `V̂`. By default the sum stops at the first `q`
//! whose unclamped value is nonpositive ([`RRange::FirstZero`]); the literal
//! full-range sum is [`RRange::Full`]. For processes whose rate oscillates
//! the true fourth-moment covariance itself changes sign and both choices
//! can be biased.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::acf::{centered_interior, lag_index, AcfEstimate};
use crate::error::{Error, Result};
use crate::rate::RateEstimate;

/// Extent of the separation integral in `V̂`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "r_max", rename_all = "snake_case")]
pub enum RRange {
    /// Up to the first separation where the unclamped covariance is `<= 0`.
    #[default]
    FirstZero,
    /// The whole available range `[0, T - t - 2bh]`.
    Full,
    /// Separations `r <= r_max`.
    Fixed(f64),
}

impl RRange {
    /// Largest `q` allowed by the range, before the first-zero rule.
    fn q_cap(self, len: usize, step: f64) -> usize {
        match self {
            RRange::Fixed(r) => ((r / step).floor().max(0.0) as usize).min(len - 1),
            RRange::FirstZero | RRange::Full => len - 1,
        }
    }

    fn stops_at_zero(self) -> bool {
        matches!(self, RRange::FirstZero)
    }
}

/// `a_k = x_k x_{k+m}` for the centered interior grid.
fn lagged_products(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len() - m;
    x[..n].iter().zip(&x[m..]).map(|(a, b)| a * b).collect()
}

/// `ĉov(t, r)` at a single separation, by direct summation.
pub fn empirical_cov4(est: &RateEstimate, mu_hat: f64, t: f64, r: f64) -> Result<f64> {
    let m = lag_index(est, t)?;
    let x = centered_interior(est, mu_hat);
    let a = lagged_products(&x, m);
    let limit = a.len() as f64 * est.step();
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::LagOutOfRange { lag: r, limit });
    }
    let q = (r / est.step()).round() as usize;
    if q >= a.len() {
        return Err(Error::LagOutOfRange { lag: r, limit });
    }
    let c_hat = a.iter().sum::<f64>() / a.len() as f64;
    let s_q: f64 = a[..a.len() - q]
        .iter()
        .zip(&a[q..])
        .map(|(u, v)| u * v)
        .sum();
    Ok((s_q / (a.len() - q) as f64 - c_hat * c_hat).max(0.0))
}

/// `V̂` from the sums `S_q` (`s[q]` for `q` in `0..s.len()`), given `L` and `Ĉ`.
fn combine(s: &[f64], len: usize, c_hat: f64, range: RRange, step: f64) -> f64 {
    let cap = range.q_cap(len, step).min(s.len() - 1);
    let c2 = c_hat * c_hat;
    let lf = len as f64;
    let mut total = 0.0;
    for (q, &sq) in s.iter().enumerate().take(cap + 1) {
        let w = (len - q) as f64;
        let cov = sq / w - c2;
        if cov <= 0.0 {
            if range.stops_at_zero() {
                break;
            }
            continue;
        }
        total += w * cov;
    }
    2.0 * total / (lf * lf)
}

/// Smallest `2^a 3^b >= n`.
fn fast_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < best {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// `S_q = Σ_k a_k a_{k+q}` for `q < a.len()`, and the same for `b`, from one
/// complex FFT pair.
fn autocorrelation_sums_pair(
    a: &[f64],
    b: &[f64],
    planner: &mut FftPlanner<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let n = fast_len(2 * a.len().max(b.len()).max(1) - 1);
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, z) in buf.iter_mut().enumerate() {
        let re = a.get(k).copied().unwrap_or(0.0);
        let im = b.get(k).copied().unwrap_or(0.0);
        *z = Complex64::new(re, im);
    }
    fwd.process(&mut buf);
    // With Z = FFT(a + ib): A_j = (Z_j + conj Z_{-j})/2, B_j = (Z_j - conj Z_{-j})/(2i).
    // |A_j|² + i|B_j|² transforms back to S_a + i S_b.
    // Both power spectra are even in j, so bins j and n - j get the same value.
    for j in 0..=n / 2 {
        let z = buf[j];
        let zc = buf[(n - j) % n].conj();
        let pa = (z + zc).norm_sqr() * 0.25;
        let pb = (z - zc).norm_sqr() * 0.25;
        buf[j] = Complex64::new(pa, pb);
        buf[(n - j) % n] = buf[j];
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    let sa = buf[..a.len()].iter().map(|z| z.re * scale).collect();
    let sb = buf[..b.len()].iter().map(|z| z.im * scale).collect();
    (sa, sb)
}

/// `V̂(t)` over `range`, FFT path.
pub fn variance_estimate(est: &RateEstimate, mu_hat: f64, t: f64, range: RRange) -> Result<f64> {
    let m = lag_index(est, t)?;
    let x = centered_interior(est, mu_hat);
    let mut planner = FftPlanner::new();
    Ok(variances_for_steps(&x, &[m], est.step(), range, &mut planner)[0])
}

/// `V̂(t)` over `range` by direct `O(L²)` summation.
pub fn variance_estimate_direct(
    est: &RateEstimate,
    mu_hat: f64,
    t: f64,
    range: RRange,
) -> Result<f64> {
    let m = lag_index(est, t)?;
    let x = centered_interior(est, mu_hat);
    let a = lagged_products(&x, m);
    let len = a.len();
    let c_hat = a.iter().sum::<f64>() / len as f64;
    let cap = range.q_cap(len, est.step());
    let mut s = Vec::with_capacity(cap + 1);
    for q in 0..=cap {
        let sq: f64 = a[..len - q].iter().zip(&a[q..]).map(|(u, v)| u * v).sum();
        s.push(sq);
        if range.stops_at_zero() && sq / (len - q) as f64 - c_hat * c_hat <= 0.0 {
            break;
        }
    }
    Ok(combine(&s, len, c_hat, range, est.step()))
}

/// `V̂` for several grid lags `ms` of one centered grid, two per transform.
fn variances_for_steps(
    x: &[f64],
    ms: &[usize],
    step: f64,
    range: RRange,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(ms.len());
    for pair in ms.chunks(2) {
        let a = lagged_products(x, pair[0]);
        let b = if pair.len() == 2 {
            lagged_products(x, pair[1])
        } else {
            Vec::new()
        };
        let (sa, sb) = autocorrelation_sums_pair(&a, &b, planner);
        for (prod, s) in [(&a, &sa), (&b, &sb)].into_iter().take(pair.len()) {
            let c_hat = prod.iter().sum::<f64>() / prod.len() as f64;
            out.push(combine(s, prod.len(), c_hat, range, step));
        }
    }
    out
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `C̃ ± Φ⁻¹(1 - α/2) √V̂`.
pub fn confidence_interval(corrected: f64, variance: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} must lie in (0, 1)"
        )));
    }
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variance {variance} must be nonnegative"
        )));
    }
    let half = normal_quantile(1.0 - alpha / 2.0) * variance.sqrt();
    Ok((corrected - half, corrected + half))
}

/// Pointwise confidence band over an ACF curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiBand {
    pub lags: Vec<f64>,
    pub effective_lags: Vec<f64>,
    pub corrected: Vec<f64>,
    pub variance: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    pub r_range: RRange,
}

impl CiBand {
    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn covers(&self, i: usize, value: f64) -> bool {
        self.lower[i] <= value && value <= self.upper[i]
    }
}

/// Variances of every lag of `acf`.
pub fn acf_variances(acf: &AcfEstimate, range: RRange) -> Vec<f64> {
    let mut variance = vec![0.0; acf.len()];
    let mut planner = FftPlanner::new();
    for (g, grid) in acf.grids.iter().enumerate() {
        let idx: Vec<usize> = (0..acf.len())
            .filter(|&i| acf.grid_of_lag[i] == g)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let x = centered_interior(grid, acf.mu_hat);
        let ms: Vec<usize> = idx.iter().map(|&i| acf.lag_steps[i]).collect();
        let v = variances_for_steps(&x, &ms, grid.step(), range, &mut planner);
        for (i, vi) in idx.into_iter().zip(v) {
            variance[i] = vi;
        }
    }
    variance
}

/// Confidence band for every lag of `acf`.
pub fn ci_band(acf: &AcfEstimate, alpha: f64, range: RRange) -> Result<CiBand> {
    if let RRange::Fixed(r) = range {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "r_max {r} must be nonnegative"
            )));
        }
    }
    let variance = acf_variances(acf, range);
    let mut lower = Vec::with_capacity(acf.len());
    let mut upper = Vec::with_capacity(acf.len());
    for (c, v) in acf.corrected.iter().zip(&variance) {
        let (lo, hi) = confidence_interval(*c, *v, alpha)?;
        lower.push(lo);
        upper.push(hi);
    }
    Ok(CiBand {
        lags: acf.lags.clone(),
        effective_lags: acf.effective_lags.clone(),
        corrected: acf.corrected.clone(),
        variance,
        lower,
        upper,
        alpha,
        r_range: range,
    })
}
