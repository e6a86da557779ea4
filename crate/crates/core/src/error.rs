//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unterminated block comment opened on line {line}")]
    UnterminatedComment { line: usize },

    #[error("unbalanced brace on line {line}")]
    UnbalancedBrace { line: usize },

    #[error("unknown detector id `{0}`")]
    UnknownDetector(String),

    #[error("unknown vulnerability class `{0}`")]
    UnknownClass(String),

    #[error("unknown severity `{0}`")]
    UnknownSeverity(String),

    #[error("label references unknown sample id `{0}`")]
    DanglingLabel(String),

    #[error("vote threshold must be >= 1, got {0}")]
    InvalidThreshold(usize),

    #[error("annotator label maps must cover the same contract ids")]
    KeyMismatch,

    #[error("kappa undefined: chance agreement is 1 but annotators disagree")]
    DegenerateKappa,

    #[error("fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),

    #[error("split fraction must be in (0, 1), got {0}")]
    InvalidSplitFraction(f64),

    #[error("requested {wanted} samples but only {available} available")]
    NotEnoughSamples { wanted: usize, available: usize },

    #[error("exemplar pool has {available} usable entries, need {wanted}")]
    ExemplarPoolTooSmall { wanted: usize, available: usize },

    #[error("exemplar pool contains the evaluation target `{0}`")]
    ExemplarLeak(String),

    #[error("sample `{0}` has no label record")]
    UnlabeledSample(String),

    #[error("unknown snippet id `{0}`")]
    UnknownSnippet(String),

    #[error("mutation class `{0}` is not an injectable class")]
    NotInjectable(String),

    #[error("no valid injection site in sample `{0}`")]
    NoInjectionSite(String),

    #[error("gold and prediction lists differ in length: {gold} vs {pred}")]
    LengthMismatch { gold: usize, pred: usize },

    #[error("no items to score")]
    EmptyInput,

    #[error("reference text is empty")]
    EmptyReference,

    #[error("label `{0}` is not in the class list")]
    LabelOutsideClasses(String),

    #[error("verdicts do not match mutants: {0}")]
    VerdictMismatch(String),

    #[error("input exceeds {limit} characters ({got}); pass truncate to allow clipping")]
    InputTooLarge { limit: usize, got: usize },

    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),

    #[error("transport failure after {retries} retries: {message}")]
    Transport { retries: u32, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("endpoint rejected request: {0}")]
    Endpoint(String),

    #[error("human-eval score {0} out of range (expected 0..=3)")]
    ScoreOutOfRange(i64),

    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn malformed(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::MalformedLine {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
