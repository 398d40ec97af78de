//! Joint sensing and communication design for a base station assisted by a
//! fluid reconfigurable intelligent surface whose elements can move within a
//! square region.
//!
//! The solver alternates between the radar reference signal, the linear
//! estimator, the surface phases, the transmit precoder and the element
//! positions, minimizing a weighted sum of the sensing and communication
//! mean squared errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamformer_opt;
pub mod channel;
pub mod comm;
pub mod config;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod orchestrator;
pub mod phase_opt;
pub mod position_opt;
pub mod sensing;

pub use config::{parse_config, parse_config_str, ExperimentKind, ExperimentSpec, SystemConfig};
pub use error::{Error, Result};
pub use orchestrator::{monte_carlo, run_am, Scenario, SchemeKind, SolverState};
