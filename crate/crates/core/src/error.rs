use thiserror::Error;

/// Failure modes of the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation n={requested} exceeds the {available} modes representable on this grid")]
    TruncationTooLarge { requested: usize, available: usize },

    #[error("bad domain: {0}")]
    BadDomain(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("point outside the closed unit ball: |z| = {modulus:.6}")]
    OutsideBall { modulus: f64 },

    #[error("field is not unit length: max pointwise defect {defect:.3e}")]
    NotUnitLength { defect: f64 },

    #[error("sup-norm series covers t <= {have:.6} but t = {need:.6} was requested")]
    SeriesTooShort { have: f64, need: f64 },

    #[error("stage iteration diverged: residual {residual:.3e} after {iters} iterations")]
    NewtonDiverged { residual: f64, iters: usize },

    #[error("step rejected: max |u| = {max_modulus:.6} after the step; dt too large")]
    StepRejected { max_modulus: f64 },

    #[error("need at least {need} ledger rows, have {have}")]
    TooFewRows { have: usize, need: usize },

    #[error("no finite constant bounds the calibration run")]
    CalibrationFailed,

    #[error("flow mismatch: {0}")]
    FlowMismatch(String),

    #[error("state too far from the unit sphere: max |u| = {max_modulus:.6}")]
    NotNearSphere { max_modulus: f64 },

    #[error("operation requires dimension {need}, domain has dimension {have}")]
    WrongDimension { need: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
