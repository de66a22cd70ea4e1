//! Solver evolution driven by convergence trajectories.
//!
//! Solvers are scored by their whole incumbent trajectory (terminal
//! log-residual plus a trajectory-aware decay rate), evolved through layered
//! tolerance-gated acceptance, and archived per instance group so that a new
//! instance can be matched to a specialist by its profile.

pub mod evolution;
pub mod library;
pub mod mutation;
pub mod problems;
pub mod profiles;
pub mod seed;
pub mod solvers;
pub mod trajectory;

pub use evolution::{EvalRecord, RunConfig, ToleranceParams};
pub use library::SolverLibrary;
pub use problems::{Instance, Task};
pub use profiles::{GroupModel, InstanceProfile};
pub use solvers::{ClockMode, RunResult, SolverConfig};
pub use trajectory::{IncumbentTrace, MetricConfig, TracePoint};
