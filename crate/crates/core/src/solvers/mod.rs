//! Solvers for the two minimax programs, plus independent oracles.
//!
//! The workload program reformulates as a linear program (auxiliary variable
//! bounded below by every workload) and is solved exactly by the in-crate
//! bounded-variable simplex. The waiting-time program is non-convex, so
//! [`solve_pt`] runs multistart projected local search warm-started from the
//! workload optimum and never claims more than a local certificate.

mod descent;
pub mod lp;
mod nonconvex;
mod oracles;

use thiserror::Error;

use crate::model::{validate_instance, Instance, ModelError, PolicyMatrix};
use crate::rng::{stream_rng, SOLVER_START};
use crate::Scalar;

pub use descent::STABILITY_MARGIN;
pub use nonconvex::{nonconvexity_witness, NonconvexityReport, WitnessPoint};
pub use oracles::{
    oracle_eta_s_subsets, oracle_eta_t_grid, GridOracle, SubsetOracle, MAX_GRID_FREE_DIMS,
    MAX_GRID_RESOLUTION, MAX_SUBSET_TYPES,
};

/// Random starts of the PT solver when the caller has no opinion; the warm
/// start from the workload LP always comes on top of these.
pub const DEFAULT_PT_STARTS: usize = 16;
/// Relative-improvement stopping tolerance of the PT solver.
pub const DEFAULT_PT_TOL: f64 = 1e-9;
/// Iteration budget per PT start.
pub const MAX_PT_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),
    #[error("oracle precondition violated: {0}")]
    Precondition(String),
    #[error("{0}")]
    TooLarge(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Certified global optimum (LP or oracle).
    Optimal,
    /// Best point found by local search; no global certificate.
    Local,
    /// No feasible (stable) assignment exists.
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Local => "local",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Outcome of one solver call.
#[derive(Debug, Clone)]
pub struct SolveResult<F> {
    pub status: SolveStatus,
    pub x: Option<PolicyMatrix<F>>,
    pub objective: Option<F>,
    pub iterations: usize,
    /// Local-search starts consumed; 0 for the LP path.
    pub starts_used: usize,
}

impl<F> SolveResult<F> {
    fn infeasible(iterations: usize) -> Self {
        SolveResult {
            status: SolveStatus::Infeasible,
            x: None,
            objective: None,
            iterations,
            starts_used: 0,
        }
    }
}

/// Minimizes the maximum workload exactly.
///
/// LP form: minimize `rho` subject to `rho >= rho_i` for every worker, one
/// distribution row per task type, and `x` in the unit box. The program is
/// declared infeasible when even the best assignment overloads some worker
/// (optimal `rho > 1`), in which case no stable policy exists at all.
pub fn solve_ps<F: Scalar>(inst: &Instance<F>) -> Result<SolveResult<F>, SolverError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(SolverError::InvalidInstance(violations));
    }

    let n_edges = inst.n_edges();
    let rho_var = n_edges;
    let mut rows = Vec::with_capacity(inst.n_types() + inst.n_workers());
    for j in 0..inst.n_types() {
        let coeffs: Vec<(usize, F)> = inst
            .type_edges(j)
            .iter()
            .map(|&e| (e, F::one()))
            .collect();
        rows.push((coeffs, lp::Relation::Eq, F::one()));
    }
    for i in 0..inst.n_workers() {
        if inst.worker_edges(i).is_empty() {
            continue;
        }
        let mut coeffs: Vec<(usize, F)> = inst
            .worker_edges(i)
            .iter()
            .map(|&e| {
                let edge = inst.edge(e);
                (e, inst.lambda(edge.task_type) / edge.mu)
            })
            .collect();
        coeffs.push((rho_var, -F::one()));
        rows.push((coeffs, lp::Relation::Le, F::zero()));
    }

    let mut objective = vec![F::zero(); n_edges + 1];
    objective[rho_var] = F::one();
    let mut bounds = vec![(F::zero(), F::one()); n_edges];
    bounds.push((F::zero(), F::infinity()));

    let program = lp::LinearProgram {
        n_vars: n_edges + 1,
        objective,
        rows,
        bounds,
    };
    match lp::solve(&program)? {
        lp::LpOutcome::Optimal {
            x,
            objective,
            iterations,
        } => {
            if objective > F::one() + F::of(1e-9) {
                return Ok(SolveResult::infeasible(iterations));
            }
            let fractions: Vec<F> = x[..n_edges]
                .iter()
                .map(|&v| v.max(F::zero()).min(F::one()))
                .collect();
            Ok(SolveResult {
                status: SolveStatus::Optimal,
                x: Some(PolicyMatrix::new(fractions)),
                objective: Some(objective),
                iterations,
                starts_used: 0,
            })
        }
        lp::LpOutcome::Infeasible => Ok(SolveResult::infeasible(0)),
        lp::LpOutcome::Unbounded => Err(SolverError::Numerical(
            "workload LP reported unbounded; the objective is bounded below by 0".into(),
        )),
    }
}

/// Approximately minimizes the maximum relative waiting time.
///
/// Multistart projected local search: subgradient steps on the active
/// maximum with backtracking, projection onto the product of per-type
/// simplices, and a compass polish over in-simplex directions (see
/// [`descent`]). The first start is the workload optimum (warm start);
/// `n_starts` further starts are uniform random points on the simplices,
/// one ChaCha stream per start derived from `(seed, start index)`. The
/// returned status is always `local` on success: the objective is provably
/// non-convex, so no global certificate is claimed. Strict stability
/// (workloads at most `1 - `[`STABILITY_MARGIN`]) is enforced throughout;
/// if even the workload optimum violates it the program is infeasible.
pub fn solve_pt<F: Scalar>(
    inst: &Instance<F>,
    n_starts: usize,
    tol: F,
    seed: u64,
) -> Result<SolveResult<F>, SolverError> {
    if n_starts < 1 {
        return Err(SolverError::Precondition(
            "solve_pt needs at least one random start".into(),
        ));
    }
    let warm = solve_ps(inst)?;
    let SolveStatus::Optimal = warm.status else {
        return Ok(SolveResult::infeasible(warm.iterations));
    };
    let eta_s_star = warm.objective.expect("optimal result carries objective");
    if eta_s_star > F::one() - F::of(STABILITY_MARGIN) {
        // Every policy loads some worker beyond the strict-stability margin:
        // the waiting-time objective is unbounded there.
        return Ok(SolveResult::infeasible(warm.iterations));
    }
    let warm_x = warm.x.expect("optimal result carries a policy");

    let mut iterations = 0usize;
    let mut best: Option<(F, Vec<F>)> = None;
    for start_idx in 0..=n_starts {
        let start = if start_idx == 0 {
            warm_x.values().to_vec()
        } else {
            random_policy(inst, seed, start_idx as u64)
        };
        let (x, value) = descent::descend(inst, start, tol, MAX_PT_ITERS, &mut iterations);
        match &best {
            Some((incumbent, _)) if value >= *incumbent => {}
            _ => best = Some((value, x)),
        }
    }

    let (objective, x) = best.expect("at least the warm start ran");
    Ok(SolveResult {
        status: SolveStatus::Local,
        x: Some(PolicyMatrix::new(x)),
        objective: Some(objective),
        iterations,
        starts_used: n_starts + 1,
    })
}

/// Uniform random point on the product of per-type simplices
/// (exponential spacings, normalized per type).
fn random_policy<F: Scalar>(inst: &Instance<F>, seed: u64, start_idx: u64) -> Vec<F> {
    let mut rng = stream_rng(seed, SOLVER_START + start_idx);
    let mut x = vec![F::zero(); inst.n_edges()];
    for j in 0..inst.n_types() {
        let ids = inst.type_edges(j);
        let draws: Vec<F> = ids
            .iter()
            .map(|_| F::sample_exp(&mut rng, F::one()))
            .collect();
        let total: F = draws.iter().copied().sum();
        for (&e, &d) in ids.iter().zip(&draws) {
            x[e] = d / total;
        }
    }
    x
}
