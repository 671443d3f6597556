//! Pseudo-transient solver for the regularized nonlinear Poisson-Boltzmann
//! equation on uniform Cartesian grids.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod driver;
pub mod error;
pub mod gfm;
pub mod grid;
pub mod molecule;
pub mod operator;
pub mod stepping;
pub mod surface;

pub use control::{ControllerConfig, ControllerKind};
pub use driver::{run, run_schedule, EnergyTrace, InitialKind, RunConfig, RunOutput, StepRecord, SurfaceKind};
pub use error::{Error, Result};
pub use grid::{build_grid, Field, Grid};
pub use molecule::{parse_atoms, Atom, AtomSet, PhysicalParams};
pub use stepping::{Problem, StepScheme};
pub use surface::InterfaceData;
