//! Effective Hamiltonians of periodic switching Markov processes.
//!
//! A particle on a periodic landscape switches between chemical states, each
//! with its own potential (continuous model) or hop rates (discrete model).
//! Zooming out, its position satisfies a large-deviation principle whose
//! Hamiltonian `H(p)` is the principal eigenvalue of a cell problem on one
//! period. This crate
//!
//! * defines and validates such models ([`model`], [`presets`]),
//! * analyses the chemical jump chain ([`chain`]),
//! * assembles the cell problems as Metzler matrices and solves them with
//!   Collatz-Wielandt certified power iteration ([`eigen`]),
//! * derives velocity, Lagrangian, path rates and structural diagnostics
//!   ([`hamiltonian`]),
//! * simulates the underlying processes to check that trajectories concentrate
//!   on the predicted velocity ([`simulate`]),
//! * and wraps everything in a JSON/CSV batch front end ([`cli`]).

pub mod chain;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod hamiltonian;
pub mod model;
pub mod presets;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{ContinuousModel, DiscreteModel, Model, PeriodicScalarField, Regime, SwitchingRateMatrix};
