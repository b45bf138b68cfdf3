use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain box of system `{system}`")]
    OutsideDomain { system: String, point: Vec<f64> },

    #[error("flow duration {duration} exceeds remaining exit time {remaining}")]
    ExitTimeExceeded { duration: f64, remaining: f64 },

    #[error("negative flow duration {0}")]
    NegativeDuration(f64),

    #[error("empty sample set")]
    EmptySamples,

    #[error("point {point:?} lies outside every partition cell")]
    PointOutsideCells { point: Vec<f64> },

    #[error("cell {cell} is never visited by the trajectory")]
    UnvisitedCell { cell: usize },

    #[error("point {point:?} is not in cell {cell}")]
    PointOutsideCell { cell: usize, point: Vec<f64> },

    #[error("matrix column {column} is not stochastic (sum {sum})")]
    NonStochasticColumn { column: usize, sum: f64 },

    #[error("matrix column {0} has no positive entry")]
    ZeroColumn(usize),

    #[error("symbol {symbol} out of range for {m} states")]
    SymbolOutOfRange { symbol: usize, m: usize },

    #[error("cannot partition {groups} groups over {blocks} blocks")]
    TooManyGroups { groups: usize, blocks: usize },

    #[error("probability vector invalid: {0}")]
    InvalidProbabilityVector(String),

    #[error("indeterminate switch at junction {junction}: |z| = {magnitude}, boundary margin {margin}")]
    IndeterminateSwitch {
        junction: usize,
        magnitude: f64,
        margin: f64,
    },

    #[error("no path starts with symbol {0}; conditional undefined")]
    UndefinedConditional(usize),

    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("time {t} outside [0, {max}]")]
    TimeOutOfRange { t: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV input: {0}")]
    Csv(String),
}
