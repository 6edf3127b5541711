use thiserror::Error;

/// Errors raised by network construction, controllers, certifiers and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown topology preset `{0}`")]
    UnknownPreset(String),
    #[error("the arbitrary topology is defined for exactly 8 followers, got {0}")]
    ArbitraryRequiresEight(usize),
    #[error("unknown edge group `{0}`")]
    UnknownEdgeGroup(String),
    #[error("follower {0} has no incoming weight and cannot be normalized")]
    IsolatedFollower(usize),
    #[error("invalid edge {follower} <- {from}: {reason}")]
    InvalidEdge {
        follower: usize,
        from: usize,
        reason: &'static str,
    },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frequency grid is empty")]
    GridEmpty,
    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,
    #[error("numerical blowup at t = {time} (state component {index})")]
    NumericalBlowup { time: f64, index: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("operation requires the SPR controller")]
    WrongControllerKind,
}

pub type Result<T> = std::result::Result<T, Error>;
