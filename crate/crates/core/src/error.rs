use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {func}: {msg}")]
    Domain { func: &'static str, msg: String },

    #[error("quadrature did not converge after {subdivisions} subdivisions (estimate {estimate}, error {err_estimate})")]
    NonConvergence {
        subdivisions: usize,
        estimate: f64,
        err_estimate: f64,
    },

    #[error("negative capacity {nats} nats; quadrature is unreliable for these inputs")]
    NegativeCapacity { nats: f64 },

    #[error("capacity target {bits} bits per dimension overflows the noise solve")]
    CapacityOverflow { bits: f64 },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by backward; call reset before reuse")]
    StaleTape,

    #[error("incompatible noise mode: {0}")]
    Mode(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("idx: {0}")]
    Idx(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Divergence { epoch: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain {
        func,
        msg: msg.into(),
    }
}
