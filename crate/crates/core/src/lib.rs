//! Hamilton-Jacobi reach-avoid games on grids and HJ-guided adversarial training.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: rectangular grids, sampled fields, interpolation and finite differences.
//! * [`dynamics`]: nominal models with closed-form Hamiltonians and optimal inputs, plus the
//!   12-D quadrotor used for simulation.
//! * [`hjsolver`]: Lax-Friedrichs fixed-point solver for the reach-avoid variational inequality.
//! * [`adversary`]: value-function buffers, HJ disturbances and the level curriculum.
//! * [`envs`]: the reach-avoid game and quadrotor stabilisation MDPs.
//! * [`rl`]: dense networks with exact gradients, PPO and the four trainers.
//! * [`eval`]: sweeps, critic heatmaps, BRT slices and quadrotor episode statistics.

pub mod adversary;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod eval;
pub mod grid;
pub mod hjsolver;
pub mod rl;

pub use error::{Error, Result};
pub use grid::{Axis, Grid, Probe, ScalarField};
