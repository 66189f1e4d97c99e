//! Desk-scale numerical laboratory for low-rank structure in gradient training:
//! deep linear dynamics, LoRA-family adapters, GaLore/ReLoRA, and
//! regularization equivalences, each with an independent oracle.

pub mod adapters;
pub mod check;
pub mod error;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod regeq;
pub mod runner;

pub use check::Check;
pub use error::{LabError, Result};
