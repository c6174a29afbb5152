//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate embedding: row {row} has zero norm")]
    DegenerateEmbedding { row: usize },

    #[error("probability out of range: {0} not in (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("over-trimmed: 2k = {twice_k} must be < n = {n}")]
    OverTrimmed { twice_k: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("client has no data")]
    EmptyClientData,

    #[error("no samples in {0}")]
    NoSamples(String),

    #[error("csv row {row}: {reason}")]
    CsvRow { row: usize, reason: String },

    #[error("infeasible floor: {clients} clients x {floor} min samples > {available} available")]
    InfeasibleFloor {
        clients: usize,
        floor: usize,
        available: usize,
    },

    #[error("LIE fraction degenerate: (n-m-s)/(n-m) = {fraction} not in (0, 1)")]
    LieFractionDegenerate { fraction: f64 },

    #[error("undefined perturbation direction: mean benign update has zero norm")]
    ZeroPerturbationDirection,

    #[error("filter removes everything: r = {remove} >= n = {n}")]
    FilterRemovesEverything { remove: usize, n: usize },

    #[error("Bulyan infeasible: n = {n} < 4f + 3 = {needed}")]
    BulyanInfeasible { n: usize, needed: usize },

    #[error("too few updates: need at least {needed}, got {got}")]
    TooFewUpdates { needed: usize, got: usize },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    Round {
        round: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the communication round it occurred in.
    pub fn at_round(self, round: u32) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}
