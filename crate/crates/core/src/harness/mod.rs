//! Instance generation, reference solvers, experiment drivers, and the
//! self-check suite.

mod gen;
mod oracle;

pub mod experiment;
pub mod verify;

pub use experiment::{
    compare_arms, run_experiment, run_experiment_full, seed_conflict_store, AlignmentMode,
    ArmSpec, ComparisonRow, EditorKind, EditorSpec, MetricsRecord, ProjectorChoice,
};
pub use gen::{gen_instance, Instance, InstanceConfig};
pub use oracle::oracle_ols;
pub use verify::{run_verification, FaultInjection, InvariantReport};

use crate::editors::EditError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The requested run is malformed (bad config, invalid pairing).
    #[error("{0}")]
    Config(String),
    /// A step of a sequential run failed; `step` is 1-based.
    #[error("step {step}: {source}")]
    Step { step: usize, source: EditError },
    /// Failure outside the stepping loop.
    #[error(transparent)]
    Edit(#[from] EditError),
}
