//! Library surface of the experiment runner, split out so the experiment
//! protocols are testable without spawning the binary.

pub mod plan;
pub mod report;
pub mod runner;
pub mod zoo_io;

pub use plan::ExperimentPlan;
pub use report::{fnv1a64, Cell, RepResult, TransferReport};
pub use runner::{
    assemble_report, evaluate_success, run_ensemble_holdout, run_grid, run_single_model_transfer,
    run_varied_target, select_target, sweep_losses, GridParams, GridSpec, ReportMeta, TargetMode,
    Zoo,
};
