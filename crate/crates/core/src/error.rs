use thiserror::Error;

/// Errors raised by the simulator's in-memory API.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),

    #[error("unknown label '{label}' in stage {stage}")]
    UnknownLabel { label: String, stage: usize },

    #[error("duplicate amplitude for label '{0}'")]
    DuplicateLabel(String),

    #[error("all amplitudes are zero")]
    ZeroState,

    #[error("state is not normalized (squared norm {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("space mismatch: expected stage {expected}, found stage {found}")]
    SpaceMismatch { expected: usize, found: usize },

    #[error("step not an isometry (column norm {norm})")]
    NotIsometry { column: String, norm: f64 },

    #[error("step not an isometry (columns '{first}' and '{second}' overlap by {overlap})")]
    NotOrthogonal {
        first: String,
        second: String,
        overlap: f64,
    },

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("filter steps have no flow matrix; use projection instead")]
    FilterStep,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid transfer matrix: {0}")]
    InvalidTransfer(String),

    #[error("ill-posed mask: in-label '{0}' has positive source weight but no allowed target")]
    IllPosedMask(String),

    #[error("transfer at step {step} ({from}->{to}) violates Born transport by {deviation:e}")]
    BornTransport {
        step: usize,
        from: usize,
        to: usize,
        deviation: f64,
    },

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("unknown scenario or variant '{0}'")]
    UnknownScenario(String),

    #[error("incompatible boundary states: {0}")]
    Incompatible(String),

    #[error("undefined weak value: pre/post overlap is {0:e}")]
    UndefinedWeakValue(f64),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
