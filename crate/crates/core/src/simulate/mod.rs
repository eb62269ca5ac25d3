//! Exact simulation of Cox process realizations with known ground truth.
//!
//! A realization is built in two steps: a piecewise-constant rate path
//! ([`RatePath`]) and then the arrivals on top of it. Within a segment of
//! constant rate the arrivals are a homogeneous Poisson process, so they are
//! drawn exactly by sampling the count and placing the points uniformly.

mod gaussian;

pub use gaussian::{StationaryGaussianSampler, CHOLESKY_MAX_LEN};

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::ArrivalData;
use crate::rng::rng_from_seed;

/// Ground-truth moments of a stationary rate model.
pub trait RateModel {
    /// `E λ(0)`.
    fn true_mean(&self) -> f64;
    /// `C(t) = cov(λ(0), λ(t))`.
    fn true_acf(&self, t: f64) -> f64;
    /// Right derivative `C'(0+)`.
    fn true_acf_slope_at_zero(&self) -> f64;
}

/// Piecewise-constant realization of the rate `λ(t)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePath {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl RatePath {
    /// `breakpoints[i]` starts a segment with rate `values[i]` that runs to the
    /// next breakpoint (or to `horizon`).
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidData(format!(
                "horizon {horizon} must be positive"
            )));
        }
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidData(
                "rate path needs one value per breakpoint and at least one segment".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidData("first breakpoint must be 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidData(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if *breakpoints.last().unwrap() >= horizon {
            return Err(Error::InvalidData(
                "last breakpoint must precede the horizon".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidData(
                "rates must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
            horizon,
        })
    }

    pub fn constant(rate: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![rate], horizon)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `(start, end, rate)` for each segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let ends = self.breakpoints[1..]
            .iter()
            .copied()
            .chain(std::iter::once(self.horizon));
        self.breakpoints
            .iter()
            .zip(ends)
            .zip(&self.values)
            .map(|((&s, e), &v)| (s, e, v))
    }

    /// `λ(t)`; `t` is clamped to `[0, T]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1)]
    }

    /// `λ` sampled at `start + j * step` for `j = 0..n`, walking the segments once.
    pub fn sample_grid(&self, start: f64, step: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut seg = self
            .breakpoints
            .partition_point(|&b| b <= start)
            .saturating_sub(1);
        for j in 0..n {
            let t = start + step * j as f64;
            while seg + 1 < self.breakpoints.len() && self.breakpoints[seg + 1] <= t {
                seg += 1;
            }
            out.push(self.values[seg]);
        }
        out
    }

    /// `∫₀ᵀ λ(t) dt`.
    pub fn integral(&self) -> f64 {
        self.segments().map(|(s, e, v)| (e - s) * v).sum()
    }

    /// Fraction of `[0, T]` spent at rate `value`.
    pub fn occupancy(&self, value: f64) -> f64 {
        self.segments()
            .filter(|&(_, _, v)| v == value)
            .map(|(s, e, _)| e - s)
            .sum::<f64>()
            / self.horizon
    }
}

/// Two-state continuous-time Markov chain `A ⇄ B` driving the rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateModel {
    /// Transition rate A → B.
    pub k1: f64,
    /// Transition rate B → A.
    pub k2: f64,
    /// Arrival rate in state A.
    pub lam_a: f64,
    /// Arrival rate in state B.
    pub lam_b: f64,
}

impl TwoStateModel {
    pub fn new(k1: f64, k2: f64, lam_a: f64, lam_b: f64) -> Result<Self> {
        let m = Self {
            k1,
            k2,
            lam_a,
            lam_b,
        };
        m.validate()?;
        Ok(m)
    }

    /// `k1 = 2, k2 = 5, λ_A = 1000, λ_B = 400`, the photon-arrival configuration
    /// used throughout the reference experiments.
    pub fn reference() -> Self {
        Self {
            k1: 2.0,
            k2: 5.0,
            lam_a: 1000.0,
            lam_b: 400.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.k1, self.k2, self.lam_a, self.lam_b]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "two-state parameters must be positive, got {self:?}"
            )))
        }
    }

    /// Stationary probability of state A.
    pub fn stationary_prob_a(&self) -> f64 {
        self.k2 / (self.k1 + self.k2)
    }
}

impl RateModel for TwoStateModel {
    fn true_mean(&self) -> f64 {
        (self.k2 * self.lam_a + self.k1 * self.lam_b) / (self.k1 + self.k2)
    }

    fn true_acf(&self, t: f64) -> f64 {
        let k = self.k1 + self.k2;
        let d = self.lam_a - self.lam_b;
        d * d * self.k1 * self.k2 * (-k * t.abs()).exp() / (k * k)
    }

    fn true_acf_slope_at_zero(&self) -> f64 {
        -(self.k1 + self.k2) * self.true_acf(0.0)
    }
}

/// `λ(t) = M exp(W(t))` with `W` a stationary Gaussian skeleton of step `eps`
/// and autocovariance `γ(t) = (1 + a|t|)^(-H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGaussianModel {
    /// Rate scale `M`.
    pub scale: f64,
    /// Inverse time scale `a`.
    pub inv_time_scale: f64,
    /// Decay exponent `H`.
    pub decay: f64,
    /// Skeleton step `ε`.
    pub eps: f64,
}

impl LogGaussianModel {
    /// Model with the default skeleton step, the largest `ε` with `γ(ε) >= 0.99 γ(0)`.
    pub fn new(scale: f64, inv_time_scale: f64, decay: f64) -> Result<Self> {
        let m = Self {
            scale,
            inv_time_scale,
            decay,
            eps: Self::default_eps(inv_time_scale, decay),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn default_eps(inv_time_scale: f64, decay: f64) -> f64 {
        (0.99f64.powf(-1.0 / decay) - 1.0) / inv_time_scale
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.scale, self.inv_time_scale, self.decay, self.eps]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "log-Gaussian parameters must be positive, got {self:?}"
            )))
        }
    }

    /// Autocovariance of `W`.
    pub fn gamma(&self, t: f64) -> f64 {
        (1.0 + self.inv_time_scale * t.abs()).powf(-self.decay)
    }

    /// Number of skeleton points covering `[0, horizon]`.
    pub fn skeleton_len(&self, horizon: f64) -> usize {
        (horizon / self.eps).ceil().max(1.0) as usize
    }

    pub fn sampler(&self, horizon: f64) -> Result<StationaryGaussianSampler> {
        self.validate()?;
        let eps = self.eps;
        let model = *self;
        StationaryGaussianSampler::new(self.skeleton_len(horizon), move |k| {
            model.gamma(k as f64 * eps)
        })
    }
}

impl RateModel for LogGaussianModel {
    fn true_mean(&self) -> f64 {
        self.scale * (0.5 * self.gamma(0.0)).exp()
    }

    fn true_acf(&self, t: f64) -> f64 {
        let g0 = self.gamma(0.0);
        self.scale * self.scale * g0.exp() * (self.gamma(t).exp() - 1.0)
    }

    fn true_acf_slope_at_zero(&self) -> f64 {
        // d/dt e^{γ(t)} at 0+ is e^{γ(0)} γ'(0+), γ'(0+) = -aH.
        let g0 = self.gamma(0.0);
        -self.scale * self.scale * (2.0 * g0).exp() * self.inv_time_scale * self.decay
    }
}

/// Homogeneous Poisson process: `λ(t) ≡ rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub rate: f64,
}

impl RateModel for ConstantModel {
    fn true_mean(&self) -> f64 {
        self.rate
    }

    fn true_acf(&self, _t: f64) -> f64 {
        0.0
    }

    fn true_acf_slope_at_zero(&self) -> f64 {
        0.0
    }
}

/// One realization of the two-state chain, started from its stationary law.
pub fn simulate_two_state_path(model: &TwoStateModel, horizon: f64, seed: u64) -> Result<RatePath> {
    model.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be positive"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let leave_a = Exp::new(model.k1).expect("validated rate");
    let leave_b = Exp::new(model.k2).expect("validated rate");
    let mut in_a = rng.random::<f64>() < model.stationary_prob_a();
    let mut t = 0.0;
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    while t < horizon {
        breakpoints.push(t);
        values.push(if in_a { model.lam_a } else { model.lam_b });
        let hold: f64 = if in_a {
            leave_a.sample(&mut rng)
        } else {
            leave_b.sample(&mut rng)
        };
        t += hold;
        in_a = !in_a;
    }
    RatePath::new(breakpoints, values, horizon)
}

/// One realization of the log-Gaussian rate on its skeleton.
pub fn simulate_log_gaussian_path(
    model: &LogGaussianModel,
    horizon: f64,
    seed: u64,
) -> Result<RatePath> {
    let sampler = model.sampler(horizon)?;
    log_gaussian_path_with(model, &sampler, horizon, seed)
}

/// As [`simulate_log_gaussian_path`], reusing a prepared skeleton sampler.
pub fn log_gaussian_path_with(
    model: &LogGaussianModel,
    sampler: &StationaryGaussianSampler,
    horizon: f64,
    seed: u64,
) -> Result<RatePath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be positive"
        )));
    }
    let n = model.skeleton_len(horizon);
    if sampler.len() != n {
        return Err(Error::InvalidParameter(format!(
            "sampler covers {} skeleton points, horizon needs {n}",
            sampler.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let w = sampler.sample(&mut rng);
    let breakpoints = (0..n).map(|j| j as f64 * model.eps).collect();
    let values = w.iter().map(|x| model.scale * x.exp()).collect();
    RatePath::new(breakpoints, values, horizon)
}

/// Arrivals of the inhomogeneous Poisson process with rate `path`.
pub fn simulate_arrivals(path: &RatePath, seed: u64) -> Result<ArrivalData> {
    let mut rng = rng_from_seed(seed);
    let expected = path.integral();
    let mut times = Vec::with_capacity(expected as usize + 16);
    for (start, end, rate) in path.segments() {
        let mean = rate * (end - start);
        if mean <= 0.0 {
            continue;
        }
        let count: f64 = Poisson::new(mean)
            .map_err(|e| Error::Simulation(format!("Poisson mean {mean}: {e}")))?
            .sample(&mut rng);
        let first = times.len();
        for _ in 0..count as usize {
            let u: f64 = rng.random();
            // Guard against rounding up to the segment end.
            times.push((start + u * (end - start)).min(end.next_down_compat()));
        }
        times[first..].sort_unstable_by(f64::total_cmp);
    }
    ArrivalData::new(times, path.horizon())
}

trait NextDown {
    fn next_down_compat(self) -> f64;
}

impl NextDown for f64 {
    fn next_down_compat(self) -> f64 {
        if self > 0.0 {
            f64::from_bits(self.to_bits() - 1)
        } else {
            self
        }
    }
}
