use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("topology is disconnected: agent {from} cannot reach agent {to}")]
    Disconnected { from: usize, to: usize },

    #[error("invalid combination matrix: {0}")]
    InvalidCombination(String),

    #[error("invalid transition model: {0}")]
    InvalidTransition(String),

    #[error("invalid likelihood model: {0}")]
    InvalidLikelihood(String),

    #[error("observation {value} lies outside the likelihood support [{lo}, {hi}]")]
    OffSupport { value: f64, lo: f64, hi: f64 },

    #[error("hypothesis {hypothesis} out of range for {num_hypotheses} hypotheses")]
    HypothesisOutOfRange {
        hypothesis: usize,
        num_hypotheses: usize,
    },

    #[error("initial belief must be strictly positive at every hypothesis (entry {index} is {value})")]
    NonPositivePrior { index: usize, value: f64 },

    #[error("step-size must satisfy gamma > 0, got {0}")]
    InvalidGamma(f64),

    #[error("ASL step-size must satisfy 0 < delta < 1, got {0}")]
    InvalidAslStep(f64),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("KL divergence is infinite: q vanishes at hypothesis {0} where p is positive")]
    InfiniteDivergence(usize),

    #[error("transition model is not geometrically ergodic: dobrushin coefficient {0} >= 1")]
    NotErgodic(f64),

    #[error("epsilon {epsilon} is uninformative: implied probability {p} is not in (0, 1]")]
    UninformativeEpsilon { epsilon: f64, p: f64 },

    #[error("configuration errors:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("unknown topology fixture `{0}`")]
    UnknownFixture(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
