//! Multispecies stirring process on the discrete torus.
//!
//! Sites of `T_N = Z/NZ` carry one label each, `0` for a hole and `1..=n`
//! for the particle species. Neighbouring occupancies are exchanged at rate
//! one (symmetric dynamics) or at rate `exp(∇_N H_{αβ})` (weakly asymmetric
//! dynamics), observed on the diffusive time scale `N² t`.
//!
//! The crate is organised by subsystem:
//!
//! * [`process`]: configurations, product measures, bond rates, the thinning
//!   simulator and the event-log formats.
//! * [`empirical`]: empirical density fields, block averages, smoothing and the
//!   replacement statistic `V_{N,ε}`.
//! * [`hydro`]: mobility, free energy, currents and the finite-volume solver for
//!   the coupled hydrodynamic equations.
//! * [`girsanov`]: pathwise Radon–Nikodym weights, Dynkin martingales and the
//!   carré du champ.
//! * [`rate`]: the static and dynamic parts of the rate functional.
//! * [`ensembles`]: exact small-size canonical/grand-canonical computations,
//!   Dirichlet forms and Feynman–Kac eigenvalues.
//!
//! Numerical kernels that do not depend on randomness are generic over
//! [`Real`]; the aliases below fix the scalar to `f64` (or `f32`).

pub mod empirical;
pub mod ensembles;
pub mod error;
pub mod girsanov;
pub mod grid;
pub mod hydro;
pub mod linalg;
pub mod process;
pub mod rate;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use grid::{PotentialSet, ProfileGrid, SpaceTimeGrid};
pub use process::{Configuration, Event, EventLog, SimParams, SimulatedPath};
pub use scalar::Real;

/// Per-species space-time field in double precision.
pub type Field = grid::SpaceTimeGrid<f64>;
/// Density trajectory in double precision.
pub type Trajectory = hydro::DensityTrajectory<f64>;
/// Initial/reference profile in double precision.
pub type Profile = grid::ProfileGrid<f64>;
/// Potentials in double precision (the simulator works in `f64`).
pub type Potentials = grid::PotentialSet<f64>;

pub type Field32 = grid::SpaceTimeGrid<f32>;
pub type Trajectory32 = hydro::DensityTrajectory<f32>;
pub type Profile32 = grid::ProfileGrid<f32>;
pub type Potentials32 = grid::PotentialSet<f32>;
