use std::fmt;

/// Pipeline stage named in diagnostics when an estimation half fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    FineGray,
    Censoring,
    Knots,
    Binomial,
    Quantile,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::FineGray => "fine-gray fit",
            Stage::Censoring => "censoring weights",
            Stage::Knots => "spline knots",
            Stage::Binomial => "weighted binomial fit",
            Stage::Quantile => "score quantiles",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("record {index}: negative observed time {y}")]
    NegativeTime { index: usize, y: f64 },
    #[error("record {index}: event code {event} outside 0..={k}")]
    BadEventCode { index: usize, event: i64, k: u32 },
    #[error("record {index}: expected {expected} covariates, found {found}")]
    RaggedCovariates { index: usize, expected: usize, found: usize },
    #[error("record {index}: non-finite value")]
    NonFinite { index: usize },
    #[error("no cause-1 events")]
    NoCause1Events,
    #[error("{found} cause-1 events, at least {required} required")]
    TooFewEvents { found: usize, required: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("too few records: {n} (need at least {min})")]
    TooFewRecords { n: usize, min: usize },
    #[error("all case weights are zero")]
    AllWeightsZero,
    #[error("weights must be finite and nonnegative")]
    InvalidWeights,
    #[error(
        "censoring survival is zero at a determinable record (y = {y}); tau = {tau} lies beyond \
         the censoring support, choose a smaller tau"
    )]
    ZeroGhatAtDeterminable { y: f64, tau: f64 },
    #[error("information matrix is singular (collinear covariates?)")]
    SingularInformation,
    #[error("fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
    #[error("fewer than {q} distinct scores; cannot place knots")]
    DegenerateScores { q: usize },
    #[error("weighted responses are all identical")]
    DegenerateResponses,
    #[error("likelihood unbounded (separation) after {iterations} iterations")]
    Separation { iterations: usize },
    #[error("all {attempted} cross-validation repetitions failed; last error: {last}")]
    AllRepetitionsFailed { attempted: usize, last: String },
    #[error("need at least {required} valid perturbation replicates, have {found}")]
    TooFewReplicates { found: usize, required: usize },
    #[error("{failed} of {total} perturbation replicates failed (limit 10%)")]
    ReplicateFailures { failed: usize, total: usize },
    #[error("{failed} of {total} simulation replicates failed (limit 5%)")]
    SimulationFailures { failed: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage { stage, source: Box::new(source) }
    }

    /// Innermost error, unwrapping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by malformed input rather than a failed fit.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::EmptyInput
                | Error::NegativeTime { .. }
                | Error::BadEventCode { .. }
                | Error::RaggedCovariates { .. }
                | Error::NonFinite { .. }
                | Error::NoCause1Events
                | Error::TooFewRecords { .. }
                | Error::ZeroGhatAtDeterminable { .. }
                | Error::InvalidConfig(_)
                | Error::Csv(_)
                | Error::Io(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
