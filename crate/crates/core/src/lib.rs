//! Single-photon transport through square arrays of 50/50 beam-splitters
//! whose connecting paths may hold perfect backward reflectors.
//!
//! - [`lattice`]: modes, sites, reflector configurations, boundary rules and
//!   open clusters.
//! - [`engine`]: state-vector evolution with detector tallies.
//! - [`oracle`]: brute-force path sums and confinement checks.
//! - [`experiments`]: scenarios, seeded Monte Carlo sweeps and statistics.
//! - [`cli`]: the `beamsplit` command line.

pub mod cli;
pub mod engine;
pub mod experiments;
pub mod lattice;
pub mod oracle;

pub use engine::{Checkpoint, DetectorTally, Network, PhotonState};
pub use experiments::{ScenarioKind, ScenarioSpec, SweepResult, SweepSpec};
pub use lattice::{ArmStatus, BoundarySpec, Mode, ReflectorConfig, Side, SiteIndex};
