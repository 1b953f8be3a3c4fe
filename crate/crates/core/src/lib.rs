//! Distribution network reconfiguration engine.
//!
//! The pipeline has three stages: enumerate radial switch configurations on
//! the reduced switch graph, run AC power flow for every (configuration,
//! timestep) cell, then rank sets of switches upgraded to remote control by
//! the losses and voltage violations they can avoid.

mod dsu;
mod error;

pub mod network;
pub mod objectives;
pub mod powerflow;
pub mod profile;
pub mod radial;
pub mod reduction;
pub mod replacement;
pub mod report;

pub use error::{Error, Result};
pub use network::{apply_configuration, load_case, Configuration, NetworkCase, OperationalNetwork};
pub use objectives::{Objective, ObjectiveGrid};
pub use powerflow::{run_grid, solve_ac, InjectionVector, PowerFlowSolution};
pub use profile::{load_profiles, ProfileSet};
pub use radial::{enumerate_radial, RadialSet};
pub use reduction::{reduce, ReducedGraph};
pub use replacement::{build_merit_tables, enumerate_cases, MeritReport};
