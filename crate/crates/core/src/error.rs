use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A function argument is out of range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Corruption rates with `eps10 + eps01 >= 1` carry no information about the label.
    #[error("corruption channel is not informative: eps10 + eps01 = {sum} >= 1")]
    UninformativeChannel { sum: f64 },

    /// Not enough (or not the right kind of) data to fit a model.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Newton iterations hit the cap before the gradient tolerance was met.
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        last_coef: Vec<f64>,
    },

    /// The normal equations are singular.
    #[error("singular design: {0}")]
    Singular(String),

    /// A caller-side contract was broken (cross-fit separation, oracle misuse).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A record is internally inconsistent.
    #[error("data integrity: {0}")]
    DataIntegrity(String),

    /// A value that the construction guarantees was violated anyway.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_channel(eps10: f64, eps01: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps10) || !(0.0..1.0).contains(&eps01) {
        return Err(Error::Config(alloc::format!(
            "corruption rates must lie in [0, 1), got ({eps10}, {eps01})"
        )));
    }
    let sum = eps10 + eps01;
    if sum >= 1.0 {
        return Err(Error::UninformativeChannel { sum });
    }
    Ok(())
}
