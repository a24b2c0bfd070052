use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("box lies outside the grid domain")]
    BoxOutsideDomain,

    #[error("box snaps to an empty cell range")]
    EmptyBox,

    #[error("no rectangle scale fits inside the domain")]
    EmptyFamily,

    #[error("no admissible scale at any grid point")]
    NoAdmissibleScale,

    #[error("validity mask is empty")]
    EmptyMask,

    #[error("grid functions are defined on different grids")]
    SpecMismatch,

    #[error("non-positive value {value} at cell {index} where a positive one is required")]
    NonPositive { index: usize, value: f64 },

    #[error("divisor {value} at cell {index} is below the floor {floor}")]
    QuotientBelowFloor { index: usize, value: f64, floor: f64 },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("lag {gamma} too large: the comparison needs gamma < {limit}")]
    LagTooLarge { gamma: f64, limit: f64 },

    #[error("index q = {0} < 2 is not accepted by the iteration operator")]
    IndexBelowTwo(f64),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("Rubio de Francia series diverged after {restarts} restarts (last B = {last_b})")]
    SeriesDiverged { restarts: usize, last_b: f64 },

    #[error("decay fit refused: only {points} level sets with positive measure")]
    FitRefused { points: usize },

    #[error("hypothesis failure: {0}")]
    Hypothesis(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage { stage, source: Box::new(source) }
    }
}
