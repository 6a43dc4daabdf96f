//! Scenario runner, synthetic task generator and the ablation sweep.

pub mod grid;
pub mod run;
pub mod sweep;
pub mod task;

pub use grid::{SweepConfig, SweepGrid};
pub use run::{
    check_probes, run_scenario, run_spec, write_run, ExpectationCheck, ProbeCheck, ScenarioReport,
};
pub use sweep::{sweep, write_csv, RowStats, SweepRow, CSV_HEADER};
pub use task::{gen_signal_task, SignalTaskParams, TaskInstance, TaskOracle, TaskSet};
