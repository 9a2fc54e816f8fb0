//! Reach-avoid planning for linear systems with Gaussian process and
//! measurement noise.
//!
//! The belief (Kalman filter) dynamics are abstracted into an interval MDP
//! over a grid partition of the state space. A robust policy on that MDP
//! yields a lower bound on the probability that the actual state reaches a
//! goal set within a finite horizon while avoiding critical sets, together
//! with a feedback controller realizing it.
//!
//! The pipeline is:
//!
//! 1. [`model`]: the system, its multi-step rediscretization and built-in benchmarks.
//! 2. [`kalman`]: the input-independent covariance schedule.
//! 3. [`geometry`]: partition, backward reachable sets, goal/critical augmentation.
//! 4. [`probability`]: Gaussian box masses and probability intervals.
//! 5. [`abstraction`]: the interval MDP (base, two-phase and adaptive variants).
//! 6. [`solver`]: robust value iteration.
//! 7. [`runtime`]: controller extraction and closed-loop simulation.

pub mod abstraction;
pub mod error;
pub mod geometry;
pub mod kalman;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod prism;
pub mod probability;
pub mod runtime;
pub mod solver;

pub use abstraction::{ActionId, BuildConfig, HorizonSpec, Imdp, Phase, StateId};
pub use error::{Error, Result};
pub use geometry::{AugmentedRegions, Cell, Hyperrect, Partition, Region};
pub use model::{Benchmark, BenchmarkSpec, Gaussian, LtiSystem, MultirateSystem};
pub use probability::{ProbConfig, ProbInterval, Successor};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
