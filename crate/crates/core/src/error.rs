use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParameters(Vec<String>),

    #[error("no root in bracket [{lo}, {hi}]")]
    NoRootInBracket { lo: f64, hi: f64 },

    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    #[error("orbit hit the critical point at step {step}")]
    CriticalHit { step: u64 },

    #[error("domination violated: fitted R1 = {r1} (C1 = {c1})")]
    DominationViolated { r1: f64, c1: f64 },

    #[error("class degenerate: {0}")]
    ClassDegenerate(String),

    #[error("interval chain degenerate: 0 in I_{n}")]
    ChainDegenerate { n: usize },

    #[error("distortion ratio {ratio} outside [1/e, e] (m = {m}, n = {n})")]
    DistortionViolated { ratio: f64, m: usize, n: usize },

    #[error("scaling broken: {0}")]
    ScalingBroken(String),

    #[error("expansion violated: ratio {ratio} below bound {bound}")]
    ExpansionViolated { ratio: f64, bound: f64 },

    #[error("curve not admissible: {0}")]
    CurveNotAdmissible(String),

    #[error("measurement bug: {0}")]
    MeasurementBug(String),

    #[error("resolution exhausted; largest reliable n = {reliable_n}")]
    ResolutionExhausted { reliable_n: usize },

    #[error("invalid element: {0}")]
    InvalidElement(String),

    #[error("growth violated: {0}")]
    GrowthViolated(String),

    #[error("no admissible segments found")]
    NoSegments,

    #[error("orthonormal frame collapsed at step {step}")]
    FrameCollapse { step: u64 },

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Precondition(_) => "PreconditionViolated",
            Error::InvalidParameters(_) => "InvalidParameters",
            Error::NoRootInBracket { .. } => "NoRootInBracket",
            Error::DegenerateParameter(_) => "DegenerateParameter",
            Error::CriticalHit { .. } => "CriticalHit",
            Error::DominationViolated { .. } => "DominationViolated",
            Error::ClassDegenerate(_) => "ClassDegenerate",
            Error::ChainDegenerate { .. } => "ChainDegenerate",
            Error::DistortionViolated { .. } => "DistortionViolated",
            Error::ScalingBroken(_) => "ScalingBroken",
            Error::ExpansionViolated { .. } => "ExpansionViolated",
            Error::CurveNotAdmissible(_) => "CurveNotAdmissible",
            Error::MeasurementBug(_) => "MeasurementBug",
            Error::ResolutionExhausted { .. } => "ResolutionExhausted",
            Error::InvalidElement(_) => "InvalidElement",
            Error::GrowthViolated(_) => "GrowthViolated",
            Error::NoSegments => "NoSegments",
            Error::FrameCollapse { .. } => "FrameCollapse",
            Error::Io(_) => "Io",
            Error::Format(_) => "Format",
        }
    }

    /// True for errors that signal a violated mathematical assertion rather
    /// than bad input or a runtime failure.
    pub fn is_assertion(&self) -> bool {
        matches!(
            self,
            Error::DominationViolated { .. }
                | Error::ClassDegenerate(_)
                | Error::DistortionViolated { .. }
                | Error::ScalingBroken(_)
                | Error::ExpansionViolated { .. }
                | Error::CurveNotAdmissible(_)
                | Error::GrowthViolated(_)
        )
    }
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg()))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
