use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced panel: {0}")]
    UnbalancedPanel(String),
    #[error("duplicate cell: unit {unit}, time {time}")]
    DuplicateCell { unit: String, time: String },
    #[error("non-finite value at row {0}")]
    NonFiniteValue(usize),
    #[error("too few periods: T = {t}, need at least {need}")]
    TooFewPeriods { t: usize, need: usize },
    #[error("too few units: n = {0}, need at least 2")]
    TooFewUnits(usize),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("singular design for units {0:?}")]
    SingularDesign(Vec<usize>),
    #[error("pooled gram matrix is singular")]
    SingularPooledGram,
    #[error("unit gram matrix is singular for unit {0}")]
    SingularUnitGram(usize),
    #[error("every unit has a zero determinant")]
    AllSingular,
    #[error("every unit is trimmed")]
    AllTrimmed,
    #[error("Chamberlain time effects require T > k")]
    RequiresTGreaterK,
    #[error("average Chamberlain projector is singular")]
    SingularMbar,
    #[error("time-effects system matrix is singular")]
    SingularTeSystem,
    #[error("Hausman variance matrix is singular (rank {rank} < {needed})")]
    SingularVdelta { rank: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Input errors map to exit code 2, numerical failures to 3.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyInput
                | Error::UnbalancedPanel(_)
                | Error::DuplicateCell { .. }
                | Error::NonFiniteValue(_)
                | Error::TooFewPeriods { .. }
                | Error::TooFewUnits(_)
                | Error::Malformed(_)
                | Error::InvalidConfig(_)
                | Error::RequiresTGreaterK
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
