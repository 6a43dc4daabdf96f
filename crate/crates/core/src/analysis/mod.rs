//! Pure computations over posteriors, trajectories and run outcomes.

pub mod diff;
pub mod outcomes;
pub mod quality;
pub mod stuck;

pub use diff::{trajectory_diff, DiffEntry, PositionDiff, TrajectoryDiff};
pub use outcomes::{classify_outcomes, classify_paired, OutcomeSummary, PairedOutcome};
pub use quality::{
    context_quality, precision_sweep, ContextQuality, ContextQualityInput, PrecisionPoint,
};
pub use stuck::{stuck_set, verify_prop_stuck, PropReport, StuckCheck, StuckParams};
