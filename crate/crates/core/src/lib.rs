//! Two-sided fair task assignment over a bipartite worker/task-type network.
//!
//! Workers own FIFO virtual queues; tasks of each type arrive as Poisson
//! processes and must be assigned to a qualified worker on arrival, rejection
//! is not allowed. A randomized assignment policy is a matrix of per-edge
//! fractions. This crate evaluates the closed-form M/G/1 queueing quantities
//! of such a policy, solves the two minimax fairness programs over it —
//! minimize the maximum worker workload (an LP) and minimize the maximum
//! relative task waiting time (non-convex, attacked by multistart local
//! search) — verifies the solvers against brute-force oracles, and replays
//! everything in a discrete-event simulator with four online policies.
//!
//! Modules map onto the pipeline:
//!
//! * [`model`] — the network instance, assignment policies, and every
//!   closed-form queueing quantity (workloads, Pollaczek–Khinchin waits).
//! * [`programs`] — objectives and feasibility of the two minimax programs,
//!   plus the workload-to-wait approximation bound.
//! * [`solvers`] — the LP solver for the workload program, multistart
//!   projected descent for the waiting-time program, subset/grid oracles,
//!   and the non-convexity witness search.
//! * [`policies`] — the four online assignment rules.
//! * [`simulator`] — seeded discrete-event simulation and metrics.
//! * [`harness`] — instance generation, experiment sweeps, CSV output.
//!
//! All numeric code is generic over the scalar type via [`Scalar`];
//! the `*64` aliases below fix the common double-precision instantiation.

pub mod harness;
pub mod model;
pub mod policies;
pub mod programs;
pub mod rng;
mod scalar;
pub mod simulator;
pub mod solvers;
#[cfg(test)]
pub(crate) mod testutil;

pub use scalar::Scalar;

/// Double-precision instance.
pub type Instance64 = model::Instance<f64>;
/// Double-precision assignment policy.
pub type PolicyMatrix64 = model::PolicyMatrix<f64>;
/// Double-precision derived queueing quantities.
pub type DerivedRates64 = model::DerivedRates<f64>;
/// Double-precision objective report.
pub type ObjectiveReport64 = programs::ObjectiveReport<f64>;
/// Double-precision solver result.
pub type SolveResult64 = solvers::SolveResult<f64>;
/// Double-precision simulation metrics.
pub type SimMetrics64 = simulator::SimMetrics<f64>;
