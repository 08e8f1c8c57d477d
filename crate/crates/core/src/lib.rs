//! Simulation and verification toolkit for one-dimensional zero-range
//! processes with bounded or sublinear, increasing jump rates.
//!
//! The crate is organised by subsystem:
//!
//! * [`model`]: rate functions, jump kernels and particle configurations.
//! * [`measures`]: grand-canonical, Palm, second-class and canonical
//!   invariant measures and exact samplers.
//! * [`sim`]: event-driven kinetic Monte Carlo for the bulk, tagged and
//!   second-class processes.
//! * [`spectral`]: canonical generators, Dirichlet forms and spectral gaps.
//! * [`hydro`]: finite-difference solver for the hydrodynamic equation.
//! * [`diffusion`]: Euler–Maruyama integration of the limit diffusions.
//! * [`verify`]: statistical comparison suites.
//! * [`experiment`]: configuration, replica farm and persisted outputs.
//! * [`io`]: text formats (NDJSON, CSV, command-line specs).

pub mod diffusion;
pub mod experiment;
pub mod hydro;
pub mod io;
pub mod measures;
pub mod model;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod verify;

pub use model::{Configuration, JumpKernel, RateFunction, Tag, TagKind};
