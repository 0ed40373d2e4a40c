//! Server allocation for moldable jobs with concave speed-up.
//!
//! - [`speedup`]: speed-up functions and traffic regimes.
//! - [`alloc_opt`]: closed-form optimal allocation, an enumeration oracle,
//!   and capacity reservation across job classes.
//! - [`loss_sim`]: event-driven loss-system simulator for `greedy(p*)` and
//!   `greedy`.
//! - [`exact_ctmc`]: exact stationary analysis of small instances.
//! - [`fluid`]: fluid-limit integrator and its closed form.

pub mod alloc_opt;
pub mod exact_ctmc;
pub mod fluid;
pub mod loss_sim;
pub mod speedup;

pub use alloc_opt::{
    capacity_value, enumerate_lp_oracle, solve_hetero, solve_p, AllocError, HeteroSolution,
    OptimalAllocation, WorkloadClass,
};
pub use loss_sim::{
    replicate, run, ArrivalRate, Estimate, ReplicatedMetrics, Scheme, ServiceDist, SimConfig,
    SimError, SimMetrics,
};
pub use speedup::{SpeedupClass, SpeedupError, SpeedupFunction, TrafficRegime};
