use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing field `{field}`{}", line_suffix(*.line))]
    MissingField { field: String, line: Option<usize> },

    #[error("field `{field}` is empty{}", line_suffix(*.line))]
    EmptyText { field: String, line: Option<usize> },

    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("duplicate sample id `{id}` (lines {lines:?})")]
    DuplicateId { id: String, lines: Vec<usize> },

    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("bad NER pattern for {category}: {message}")]
    BadPattern { category: String, message: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("no candidates for category `{0}`")]
    UnknownCategory(String),

    #[error("entity surface is empty")]
    EmptyEntity,

    #[error("entity `{surface}` not found in {field}")]
    EntityNotFound { surface: String, field: String },

    #[error("replacing `{original}` with `{counterfactual}` cannot remove the original entity")]
    DegenerateReplacement {
        original: String,
        counterfactual: String,
    },

    #[error("candidate group {0} is empty")]
    EmptyGroup(String),

    #[error("token position {position} exceeds summary length {len}")]
    PositionMismatch { position: usize, len: usize },

    #[error("generator failed on sample `{sample_id}`: {message}")]
    GeneratorFailure { sample_id: String, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("target fraction {target} unreachable: best achievable fraction is {best}")]
    Unreachable { target: f64, best: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("remote scorer: {0}")]
    Remote(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" on line {l}")).unwrap_or_default()
}
