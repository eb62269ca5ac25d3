//! Exact sampling of stationary Gaussian sequences.
//!
//! The covariance matrix of `n` consecutive values is embedded in a circulant
//! matrix of size `m >= 2(n - 1)` whose eigenvalues are the DFT of its first
//! row. When they are all nonnegative, one complex FFT of scaled white noise
//! gives an exact draw in O(m log m). Short sequences whose embedding fails
//! fall back to a Cholesky factor of the Toeplitz covariance.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Longest sequence for which the O(n³) Cholesky fallback is attempted.
pub const CHOLESKY_MAX_LEN: usize = 2048;

/// Relative tolerance below which negative embedding eigenvalues are treated as rounding.
const EIGEN_TOL: f64 = 1e-10;

/// Extra doublings of the embedding size tried before giving up on the circulant path.
const MAX_EXTRA_DOUBLINGS: u32 = 3;

enum Method {
    Scalar(f64),
    Circulant {
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky(DMatrix<f64>),
}

/// Sampler for `n` consecutive values of a zero-mean stationary Gaussian sequence.
pub struct StationaryGaussianSampler {
    n: usize,
    method: Method,
}

impl std::fmt::Debug for StationaryGaussianSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match &self.method {
            Method::Scalar(_) => "scalar".to_string(),
            Method::Circulant { scale, .. } => format!("circulant(m={})", scale.len()),
            Method::Cholesky(_) => "cholesky".to_string(),
        };
        f.debug_struct("StationaryGaussianSampler")
            .field("n", &self.n)
            .field("method", &method)
            .finish()
    }
}

impl StationaryGaussianSampler {
    /// `cov(k)` is the covariance at lag `k`; it is queried for lags beyond
    /// `n - 1` when the embedding is padded.
    pub fn new<F: Fn(usize) -> f64>(n: usize, cov: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "skeleton length must be positive".into(),
            ));
        }
        let c0 = cov(0);
        if !(c0.is_finite() && c0 >= 0.0) {
            return Err(Error::Simulation(format!(
                "variance {c0} is not a valid covariance"
            )));
        }
        if n == 1 {
            return Ok(Self {
                n,
                method: Method::Scalar(c0.sqrt()),
            });
        }

        let mut m = (2 * (n - 1)).next_power_of_two();
        let mut worst = 0.0;
        let mut planner = FftPlanner::<f64>::new();
        for _ in 0..=MAX_EXTRA_DOUBLINGS {
            let fft = planner.plan_fft_forward(m);
            let mut row: Vec<Complex64> = (0..m)
                .map(|j| Complex64::new(cov(j.min(m - j)), 0.0))
                .collect();
            fft.process(&mut row);
            let max = row.iter().map(|z| z.re).fold(f64::MIN, f64::max);
            let min = row.iter().map(|z| z.re).fold(f64::MAX, f64::min);
            if min >= -EIGEN_TOL * max.abs() {
                let mf = m as f64;
                let scale = row.iter().map(|z| (z.re.max(0.0) / mf).sqrt()).collect();
                return Ok(Self {
                    n,
                    method: Method::Circulant { scale, fft },
                });
            }
            worst = min / max;
            m *= 2;
        }

        if n <= CHOLESKY_MAX_LEN {
            let toeplitz = DMatrix::from_fn(n, n, |i, j| cov(i.abs_diff(j)));
            let chol = toeplitz.cholesky().ok_or_else(|| {
                Error::Simulation(
                    "covariance is not positive definite (circulant embedding and Cholesky both failed)"
                        .into(),
                )
            })?;
            return Ok(Self {
                n,
                method: Method::Cholesky(chol.l()),
            });
        }
        Err(Error::Simulation(format!(
            "circulant embedding of {n} points has negative eigenvalues \
             (min/max ratio {worst:.3e}) and the sequence is too long for the Cholesky fallback"
        )))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn uses_circulant_embedding(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.method {
            Method::Scalar(sd) => vec![sd * rng.sample::<f64, _>(StandardNormal)],
            Method::Circulant { scale, fft } => {
                let mut buf: Vec<Complex64> = scale
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf.truncate(self.n);
                buf.into_iter().map(|z| z.re).collect()
            }
            Method::Cholesky(lower) => {
                let z =
                    nalgebra::DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (lower * z).iter().copied().collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn sample_acf(
        reps: usize,
        n: usize,
        cov: impl Fn(usize) -> f64 + Copy,
        lags: usize,
    ) -> Vec<f64> {
        let sampler = StationaryGaussianSampler::new(n, cov).unwrap();
        let mut rng = rng_from_seed(11);
        let mut acc = vec![0.0; lags + 1];
        for _ in 0..reps {
            let w = sampler.sample(&mut rng);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += (0..n - k).map(|i| w[i] * w[i + k]).sum::<f64>() / (n - k) as f64;
            }
        }
        acc.iter().map(|a| a / reps as f64).collect()
    }

    #[test]
    fn power_law_skeleton_has_target_acf() {
        let eps = 0.05;
        let cov = move |k: usize| (1.0 + k as f64 * eps).powf(-6.0);
        let got = sample_acf(400, 512, cov, 10);
        for (k, g) in got.iter().enumerate() {
            // Monte Carlo error of the pooled sample ACF is well below 0.05 here.
            assert!((g - cov(k)).abs() < 0.05, "lag {k}: {g} vs {}", cov(k));
        }
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let cov = |k: usize| if k == 0 { 2.0 } else { 0.0 };
        let got = sample_acf(200, 256, cov, 3);
        assert!((got[0] - 2.0).abs() < 0.05);
        for g in &got[1..] {
            assert!(g.abs() < 0.05);
        }
    }

    #[test]
    fn cholesky_fallback_for_non_embeddable_covariance() {
        // Positive definite on three points, but no circulant extension is.
        let cov = |k: usize| match k {
            0 => 1.0,
            1 => 0.6,
            2 => 0.1,
            _ => 0.99,
        };
        let sampler = StationaryGaussianSampler::new(3, cov).unwrap();
        assert!(!sampler.uses_circulant_embedding());
        let mut rng = rng_from_seed(3);
        let reps = 20_000;
        let mut c = [0.0; 3];
        for _ in 0..reps {
            let w = sampler.sample(&mut rng);
            c[0] += w[0] * w[0];
            c[1] += w[0] * w[1];
            c[2] += w[0] * w[2];
        }
        for (k, ck) in c.iter().enumerate() {
            let got = ck / reps as f64;
            assert!((got - cov(k)).abs() < 0.05, "lag {k}: {got}");
        }
    }

    #[test]
    fn rejects_invalid_variance() {
        assert!(StationaryGaussianSampler::new(10, |_| f64::NAN).is_err());
        assert!(StationaryGaussianSampler::new(0, |_| 1.0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let sampler = StationaryGaussianSampler::new(100, |k| 0.9f64.powi(k as i32)).unwrap();
        let a = sampler.sample(&mut rng_from_seed(5));
        let b = sampler.sample(&mut rng_from_seed(5));
        assert_eq!(a, b);
    }
}
