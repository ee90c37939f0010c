//! Ramp metering on the cell transmission model.
//!
//! The crate covers the whole pipeline: the freeway model and its
//! fundamental diagram, a plant simulator with optional flow noise,
//! distributed metering controllers, the cumulative-count view of the
//! dynamics with its restrictiveness certificate, a min-TTS linear
//! program with a self-contained interior point solver, scenario files
//! and the reporting layer behind the `rampflow` binary.

pub mod controllers;
pub mod cumulative;
pub mod error;
pub mod lp;
pub mod model;
pub mod report;
pub mod scenarios;
pub mod simulator;

pub mod cli;

pub use error::{Error, Result};
pub use model::{CellParams, CellSpec, FreewayModel};
