use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("flux defect m - (e+p)v vanishes; eta is undefined")]
    DegenerateFlux,

    #[error("direction is not in the wave cone")]
    NotInCone,

    #[error("every kernel vector has a vanishing spatial part")]
    DegenerateKernel,

    #[error("(xi, c) is not a kernel vector of the direction (residual {residual:e})")]
    NotInKernel { residual: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("state is not in the interior of the hull (margin {margin:e})")]
    NotInHullInterior { margin: f64 },

    #[error("flux defect vanishes; use the classical segment construction")]
    ClassicalCaseRequired,

    #[error("root find failed (residual {residual:e})")]
    RootFindFailed { residual: f64 },

    #[error("dissipation density {value} at (x = {x:?}, t = {t}) is outside (-delta/T, 0]")]
    MuOutOfBand { value: f64, x: [f64; 2], t: f64 },

    #[error("quadrature is under-resolved: levels disagree by {relative:.3} (relative)")]
    ResolutionTooCoarse { relative: f64 },

    #[error("Fourier truncation cannot reach tail energy {delta} (best {best:e} at cutoff {cutoff})")]
    MollificationFailed { delta: f64, best: f64, cutoff: usize },

    #[error("no admissible amplitude in cell {cell:?}")]
    StalledIteration { cell: [usize; 3] },

    #[error("stage {stage}: inequalities not met up to j = {j_max}")]
    StageInequalityUnsatisfiable { stage: usize, j_max: u64 },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that mean a checked mathematical condition failed,
    /// as opposed to bad input or I/O.
    pub fn is_verification_failure(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::Io(_) | Error::Json(_))
    }
}
