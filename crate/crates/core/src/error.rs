use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field} = {value} is outside its allowed range")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("{field} must be positive")]
    NotPositive { field: &'static str },
    #[error("strategy {strategy} requires {requirement}")]
    Strategy {
        strategy: &'static str,
        requirement: &'static str,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("prompt position {0} holds a mask")]
    MaskInPrompt(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Failures surfaced by a probability oracle.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle transport failed: {0}")]
    Transport(String),
    #[error("malformed oracle response: {0}")]
    Malformed(String),
    #[error("token {token} is outside the oracle vocabulary of size {vocab_size}")]
    VocabMismatch { token: u32, vocab_size: usize },
    #[error("causality violation: {0}")]
    Causality(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{context}: distribution sums to {sum}, expected 1")]
    NotNormalized { context: String, sum: f64 },
    #[error("{context}: probability {prob} outside [0, 1]")]
    BadProbability { context: String, prob: f64 },
    #[error("rule {rule}: pattern length {len} does not match block length {block_len}")]
    PatternLength {
        rule: usize,
        len: usize,
        block_len: usize,
    },
    #[error("rule {rule}: output position {pos} lies outside the block")]
    OutputOutsideBlock { rule: usize, pos: usize },
    #[error("{context}: token {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfVocab {
        context: String,
        token: u32,
        vocab_size: usize,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("hypothesis violated: tau_lp ({tau_lp}) must exceed epsilon ({epsilon})")]
    Hypothesis { tau_lp: f64, epsilon: f64 },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("prompt lengths differ: {0} vs {1}")]
    PromptMismatch(usize, usize),
    #[error("paired results differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("task {id}: {reason}")]
    InvalidTask { id: usize, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario declares no prompt")]
    NoPrompt,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}
