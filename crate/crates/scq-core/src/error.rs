use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("self-query on element {0}")]
    SelfQuery(usize),
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("no recorded response for pair ({0}, {1})")]
    MissingResponse(usize, usize),
    #[error("rank {rank} below required {k}")]
    RankDeficient { rank: usize, k: usize },
    #[error("no factor in the admissible row set reproduces the gram matrix")]
    FactorizationFailed,
    #[error("search budget exhausted in {0}")]
    BudgetExhausted(&'static str),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("effective rank {rank} exceeds {k}")]
    RankTooHigh { rank: usize, k: usize },
    #[error("no basis of size {0} among the sampled rows")]
    NoBasis(usize),
    #[error("singular basis")]
    SingularBasis,
    #[error("recovered inner product {0} is not within tolerance of an integer")]
    NonIntegral(f64),
    #[error("found {found} classes among the sample, expected {k}")]
    RepresentativesMissing { found: usize, k: usize },
    #[error("element {0} matches no recovered cluster")]
    UnassignedElement(usize),
    #[error("count grouping not possible: {0}")]
    NotPossible(String),
    #[error("hypothesis means are not separated")]
    DegenerateSeparation,
    #[error("no edge clique cover with the requested number of cliques")]
    CoverNotFound,
    #[error("threshold is infinite (zero separation)")]
    InfiniteThreshold,
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Short stable tag used in result files.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid-params",
            Error::InvalidInput(_) => "invalid-input",
            Error::SelfQuery(_) => "self-query",
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::MissingResponse(..) => "incomplete-data",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::FactorizationFailed => "factorization-failed",
            Error::BudgetExhausted(_) => "budget-exhausted",
            Error::NotApplicable(_) => "not-applicable",
            Error::NotPsd(_) => "not-psd",
            Error::RankTooHigh { .. } => "rank-too-high",
            Error::NoBasis(_) => "no-basis",
            Error::SingularBasis => "singular-basis",
            Error::NonIntegral(_) => "non-integral",
            Error::RepresentativesMissing { .. } => "representatives-missing",
            Error::UnassignedElement(_) => "unassigned-element",
            Error::NotPossible(_) => "not-possible",
            Error::DegenerateSeparation => "degenerate-separation",
            Error::CoverNotFound => "cover-not-found",
            Error::InfiniteThreshold => "infinite-threshold",
            Error::Domain(_) => "domain",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
