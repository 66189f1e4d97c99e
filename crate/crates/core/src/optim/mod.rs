//! Full-parameter and low-rank projected optimizers.

mod adam;
mod equivalence;
mod galore;
mod relora;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use equivalence::{verify_galore_relora_equivalence, EquivalenceReport, InnerMode, QuadraticProblem};
pub use galore::{galore_step, memory_report, GaloreState, MemoryReport, ProjectionSide};
pub use relora::{relora_step, Reinit, RelorState};
