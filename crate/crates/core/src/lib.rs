//! Simulation and analysis of two passive rimless wheels joined by a
//! spring-damper coupler.
//!
//! * [`model`]: coupler geometry, flow equations, heel-strike map, scaling.
//! * [`integrator`]: fixed-step hybrid integration with impact localization.
//! * [`poincare`]: section sampling, least-squares return-map fits, phase.
//! * [`sweep`]: coupler-parameter grids, validity, best-cell selection.
//! * [`io`] and [`cli`]: file formats and the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;
pub mod poincare;
pub mod sweep;

pub use error::{Error, Result};
pub use integrator::{simulate, EventKind, EventRecord, IntegratorConfig, Trajectory};
pub use model::{HybridState, NondimParams, PhysicalParams, Wheel};
pub use poincare::{fit_linear_map, PoincareSample, ReturnMapFit};
pub use sweep::{run_cell, run_sweep, select_best, SweepCell, SweepGrid};
