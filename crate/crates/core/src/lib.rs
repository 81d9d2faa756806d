//! Spatial birth-death wireless networks.
//!
//! Links (transmitter/receiver pairs) arrive as a space-time Poisson process
//! on a square torus, transmit their file at the Shannon rate obtained by
//! treating interference as noise, and leave once the file is delivered.
//!
//! The crate is organised bottom-up:
//!
//! - [`torus`]: geometry, path-loss models and the interference constant `a`.
//! - [`network_state`]: link configurations and the rate functionals
//!   (interference, Shannon rate, fading, independent-channel MIMO).
//! - [`simulator`]: exact event-driven simulation of the dynamics plus the
//!   experiment procedures (phase-transition probe, delay tails, delay
//!   correlation) and the queueing comparators.
//! - [`heuristics`]: the stability threshold and the steady-state density
//!   predictions (Poisson and second-order heuristics).
//! - [`spatial_stats`]: Palm estimators on configuration snapshots.
//! - [`chain`]: the tessellated upper-bound chain and its fluid ODE.
//! - [`io`]: CSV/JSON artifact formats shared with the CLI.

pub mod chain;
pub mod error;
pub mod heuristics;
pub mod io;
pub mod network_state;
pub mod numerics;
pub mod rng;
pub mod simulator;
pub mod spatial_stats;
pub mod torus;

pub use error::{Error, Result};
pub use network_state::{ChannelParams, Link, LinkConfiguration, LinkId};
pub use simulator::{FileDistribution, RunMetrics, SimulationConfig};
pub use torus::{IntegralA, PathLossModel, Point, TorusDomain};
