use thiserror::Error;

/// Errors raised by the estimators and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must be finite and positive")]
    InvalidBandwidth(f64),

    #[error("bandwidth {h} too large for horizon {horizon}: need 2*b*h < T (b = {support})")]
    BandwidthTooLarge { h: f64, support: f64, horizon: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("no arrivals in the observation window")]
    EmptyData,

    #[error("lag {lag} out of range: must be in [0, {limit})")]
    LagOutOfRange { lag: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("horizon mismatch: estimate covers [0, {estimate}], truth covers [0, {truth}]")]
    HorizonMismatch { estimate: f64, truth: f64 },

    /// The C'(0+) regression found no detectable fluctuation of the rate.
    #[error("no detectable rate fluctuation (C'(0+) slope {slope:.4e}, fluctuation z-score {z_score:.2})")]
    StaticRate { slope: f64, z_score: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}
