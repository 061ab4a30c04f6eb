use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A system or configuration parameter violates its range constraint.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    /// An argument is outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The time-splitting downlink queue would grow without bound.
    #[error(
        "time-splitting queue unstable: gen_prob = {p} must satisfy 0 < p < 1/(1+theta) = {bound}"
    )]
    Unstable { p: f64, bound: f64 },

    /// The optimizer exhausted its iteration budget.
    #[error("optimizer did not converge for w = {w} after {iterations} iterations")]
    NotConverged { w: f64, iterations: usize },
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
