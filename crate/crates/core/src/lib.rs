//! Nonparametric kernel inference for doubly stochastic Poisson (Cox) processes.
//!
//! Given event times from a Cox process, the crate estimates the arrival rate
//! `λ(t)` with a compactly supported kernel, picks the bandwidth by a plug-in
//! rule, estimates the autocovariance `C(t)` of the rate, and attaches
//! pointwise normal confidence intervals. A simulator for two-state Markov
//! and log-Gaussian rate models and a Monte Carlo harness exercise the whole
//! pipeline against known ground truth.
//!
//! ```
//! use coxkernel::{kernels::Kernel, rate, simulate};
//!
//! let model = simulate::TwoStateModel::reference();
//! let path = simulate::simulate_two_state_path(&model, 50.0, 1).unwrap();
//! let data = simulate::simulate_arrivals(&path, 2).unwrap();
//! let h = rate::optimal_bandwidth(&data, &Kernel::epanechnikov(), 5.0).unwrap();
//! let est = rate::estimate_rate(&data, &Kernel::epanechnikov(), h, h / 10.0).unwrap();
//! assert!(est.values().iter().all(|&v| v >= 0.0));
//! ```

pub mod acf;
pub mod error;
pub mod harness;
pub mod kernels;
mod quadrature;
pub mod rate;
pub mod rng;
pub mod simulate;
pub mod varci;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelName};
pub use quadrature::GaussLegendre;
pub use rate::{ArrivalData, RateEstimate};
