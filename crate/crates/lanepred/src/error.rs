use thiserror::Error;

/// Errors produced across the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("trajectory has fewer than 2 samples")]
    EmptyTrajectory,
    #[error("trajectory timestamps are not strictly increasing")]
    NonMonotoneTime,
    #[error("requested span [{t_min}, {t_max}] is smaller than the track span")]
    SpanTooSmall { t_min: f64, t_max: f64 },
    #[error("filter coefficient {0} outside (0, 1]")]
    BadFilterCoefficient(f64),
    #[error("x = {x} outside marking validity range [{x_min}, {x_max}]")]
    MarkingRangeExceeded { x: f64, x_min: f64, x_max: f64 },
    #[error("track too short for spline smoothing ({len} samples, need {min})")]
    TrackTooShort { len: usize, min: usize },
    #[error("degenerate maneuver: lateral velocity never bracketed the threshold")]
    DegenerateManeuver,
    #[error("tracks are on different sample grids (dt {0} vs {1})")]
    GridMismatch(f64, f64),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("zero overlap between partial trajectory and prototype")]
    ZeroOverlap,
    #[error("no prototype produced a usable match")]
    NoMatch,
    #[error("class {0} absent from training data")]
    ClassAbsent(&'static str),
    #[error("feature covariance is singular even after ridge regularization")]
    DegenerateFeatures,
    #[error("boosting stalled: every round was rejected")]
    BoostingStalled,
    #[error("LK miss-rate calibration failed: best achieved {achieved:.3} for target {target:.3}")]
    CalibrationFailed { target: f64, achieved: f64 },
    #[error("class {0} has fewer than 2 maneuvers; cannot stratify")]
    StratificationError(&'static str),
    #[error("t = {0} outside spline domain")]
    DomainError(f64),
    #[error("polynomial degree {0} exceeds spline degree {1}")]
    DegreeError(usize, usize),
    #[error("knot insertion at {0} would exceed maximum multiplicity")]
    KnotMultiplicityError(f64),
    #[error("boundary-fit system is singular")]
    SolverError,
    #[error("invalid scene spec: {0}")]
    BadSpec(String),
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Config(String),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
