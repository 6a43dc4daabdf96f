//! Block-diffusion decoding with post-commit editing and remasking.
//!
//! The engine decodes a prompt block by block against an [`Oracle`]. After
//! every mask fill, committed tokens are re-examined by the configured
//! [`Strategy`]: replaced outright (T2T), reset to mask (T2M) under one of
//! several detectors, or left alone.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod posterior;
pub mod state;
pub mod trajectory;

pub use config::StrategyConfig;
pub use engine::{generate, run_block, Generation, RunFailure, RunStats, RunSummary, Strategy};
pub use error::{
    AnalysisError, ConfigError, EngineError, HarnessError, OracleError, ScenarioError,
    ValidationError,
};
pub use oracle::{BlockQuery, Oracle, OracleMeta};
pub use posterior::{BlockPosterior, Candidate, PositionScores};
pub use state::{GenerationState, Slot, Token};
pub use trajectory::{DetectorKind, EditDecision, Phase, Trajectory, TrajectoryEvent};
