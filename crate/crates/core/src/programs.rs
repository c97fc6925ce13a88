//! Objectives and feasibility of the two minimax programs.
//!
//! Program PT minimizes the maximum expected relative waiting time over task
//! types; program PS minimizes the maximum workload over workers. Both share
//! one constraint set: per-type assignment fractions form a distribution,
//! fractions live in `[0, 1]`, and every workload stays at most 1. This
//! module evaluates the two objectives for a given policy and computes the
//! worst-case factor by which the PS optimum can miss the PT optimum.

use thiserror::Error;

use crate::model::{derived_rates, Instance, ModelError, PolicyMatrix};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("approximation bound undefined for kappa = {kappa}, eta_s* = {eta_s_star}")]
    BoundDomain { kappa: f64, eta_s_star: f64 },
}

/// Objective values of one policy under both programs.
///
/// `eta_t` is `+inf` exactly when some worker that actually receives load
/// (positive incident fraction) is unstable; infinity compares greater than
/// every finite value in the argmax logic, which lets search code rank
/// infeasible iterates. Ties break to the lowest index. The argmax fields
/// are `None` only for degenerate instances with no task types or workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport<F> {
    /// Maximum expected relative waiting time over task types (PT objective).
    pub eta_t: F,
    /// Maximum workload over workers (PS objective).
    pub eta_s: F,
    pub argmax_task: Option<usize>,
    pub argmax_worker: Option<usize>,
}

/// Evaluates both program objectives for `x`, which must satisfy the
/// per-type distribution and box constraints.
pub fn eval_objectives<F: Scalar>(
    inst: &Instance<F>,
    x: &PolicyMatrix<F>,
) -> Result<ObjectiveReport<F>, ProgramError> {
    let rates = derived_rates(inst, x)?;
    let mut eta_t = F::zero();
    let mut argmax_task = None;
    for (j, &wbar) in rates.wbar_j.iter().enumerate() {
        if argmax_task.is_none() || wbar > eta_t {
            eta_t = wbar;
            argmax_task = Some(j);
        }
    }
    let mut eta_s = F::zero();
    let mut argmax_worker = None;
    for (i, &rho) in rates.rho_i.iter().enumerate() {
        if argmax_worker.is_none() || rho > eta_s {
            eta_s = rho;
            argmax_worker = Some(i);
        }
    }
    Ok(ObjectiveReport {
        eta_t,
        eta_s,
        argmax_task,
        argmax_worker,
    })
}

/// Worst-case factor `kappa^3 * (1 + (1 - 1/kappa) * eta / (1 - eta))` by
/// which the PT value of the PS-optimal policy can exceed the PT optimum.
/// Collapses to 1 when `kappa = 1`; undefined at `eta_s_star >= 1`.
pub fn approx_bound<F: Scalar>(kappa: F, eta_s_star: F) -> Result<F, ProgramError> {
    if kappa < F::one() || eta_s_star < F::zero() || eta_s_star >= F::one() {
        return Err(ProgramError::BoundDomain {
            kappa: kappa.to_f64().unwrap_or(f64::NAN),
            eta_s_star: eta_s_star.to_f64().unwrap_or(f64::NAN),
        });
    }
    let stretch = (F::one() - kappa.recip()) * eta_s_star / (F::one() - eta_s_star);
    Ok(kappa * kappa * kappa * (F::one() + stretch))
}

/// Checks every shared constraint of the two programs within `eps`:
/// box bounds, per-type distributions, and workloads at most 1.
/// Returns the verdict together with one line per violation.
pub fn is_feasible<F: Scalar>(
    inst: &Instance<F>,
    x: &PolicyMatrix<F>,
    eps: F,
) -> (bool, Vec<String>) {
    let mut violations = x.distribution_violations(inst, eps);
    if x.values().len() == inst.n_edges() {
        for i in 0..inst.n_workers() {
            let mut load = F::zero();
            for &e in inst.worker_edges(i) {
                let edge = inst.edge(e);
                load += x.get(e) * inst.lambda(edge.task_type) / edge.mu;
            }
            if load > F::one() + eps {
                violations.push(format!(
                    "workload of worker `{}` is {load}, exceeds 1",
                    inst.workers()[i]
                ));
            }
        }
    }
    (violations.is_empty(), violations)
}
