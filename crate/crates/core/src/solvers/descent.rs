//! Projected local descent for the waiting-time minimax program.
//!
//! The objective (maximum relative wait over task types) is non-convex, so
//! this is honest local search: subgradient steps on the active maximum,
//! projected back onto the product of per-type simplices, followed by a
//! deterministic compass polish that moves mass between edge pairs of one
//! type — the polish handles the kinks of the max where plain subgradient
//! steps stall. Points violating the strict stability margin get a finite
//! penalty proportional to the total overload, so descent started in the
//! unstable region walks itself back to feasibility.

use crate::model::{derived_rates_unchecked, Instance, PolicyMatrix};
use crate::Scalar;

/// Workloads must stay at or below `1 - STABILITY_MARGIN` inside the PT
/// solver; the objective is singular at workload 1.
pub const STABILITY_MARGIN: f64 = 1e-6;

const PENALTY_BASE: f64 = 1e9;
const MAX_BACKTRACKS: usize = 45;

/// Euclidean projection onto the probability simplex, sort-based.
pub(crate) fn project_simplex<F: Scalar>(v: &mut [F]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("simplex projection saw NaN"));
    let mut cumulative = F::zero();
    let mut tau = F::zero();
    for (idx, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - F::one()) / F::of((idx + 1) as f64);
        if u - candidate > F::zero() {
            tau = candidate;
        }
    }
    for entry in v.iter_mut() {
        *entry = (*entry - tau).max(F::zero());
    }
}

/// Projects every per-type block of `x` onto its simplex.
pub(crate) fn project_policy<F: Scalar>(inst: &Instance<F>, x: &mut [F]) {
    let mut block: Vec<F> = Vec::new();
    for j in 0..inst.n_types() {
        let ids = inst.type_edges(j);
        block.clear();
        block.extend(ids.iter().map(|&e| x[e]));
        project_simplex(&mut block);
        for (&e, &v) in ids.iter().zip(&block) {
            x[e] = v;
        }
    }
}

/// Descent surrogate: the true objective inside the stable region, a finite
/// overload penalty outside it so gradients still point somewhere useful.
pub(crate) fn surrogate<F: Scalar>(inst: &Instance<F>, x: &[F]) -> F {
    let margin = F::one() - F::of(STABILITY_MARGIN);
    let mut overload = F::zero();
    for i in 0..inst.n_workers() {
        let mut load = F::zero();
        for &e in inst.worker_edges(i) {
            let edge = inst.edge(e);
            load += x[e] * inst.lambda(edge.task_type) / edge.mu;
        }
        overload += (load - margin).max(F::zero());
    }
    if overload > F::zero() {
        return F::of(PENALTY_BASE) * (F::one() + overload);
    }
    let policy = PolicyMatrix::new(x.to_vec());
    let rates = derived_rates_unchecked(inst, &policy);
    rates
        .wbar_j
        .iter()
        .fold(F::zero(), |acc, &w| acc.max(w))
}

/// Subgradient of the surrogate: gradient of the total overload when
/// unstable, otherwise the gradient of the currently-maximal relative wait.
fn subgradient<F: Scalar>(inst: &Instance<F>, x: &[F]) -> Vec<F> {
    let margin = F::one() - F::of(STABILITY_MARGIN);
    let mut grad = vec![F::zero(); inst.n_edges()];

    let mut any_overload = false;
    for i in 0..inst.n_workers() {
        let mut load = F::zero();
        for &e in inst.worker_edges(i) {
            let edge = inst.edge(e);
            load += x[e] * inst.lambda(edge.task_type) / edge.mu;
        }
        if load > margin {
            any_overload = true;
            for &e in inst.worker_edges(i) {
                let edge = inst.edge(e);
                grad[e] += inst.lambda(edge.task_type) / edge.mu;
            }
        }
    }
    if any_overload {
        return grad;
    }

    let policy = PolicyMatrix::new(x.to_vec());
    let rates = derived_rates_unchecked(inst, &policy);
    let mut active = 0usize;
    for (j, &w) in rates.wbar_j.iter().enumerate() {
        if w > rates.wbar_j[active] {
            active = j;
        }
    }
    // wbar_active = sum_{i ~ j*} x[i][j*] mu[i][j*] w_i with w_i = N_i / D_i.
    for &e_star in inst.type_edges(active) {
        let i = inst.edge(e_star).worker;
        let mu_star = inst.edge(e_star).mu;
        let mut numerator = F::zero();
        let mut load = F::zero();
        for &e in inst.worker_edges(i) {
            let edge = inst.edge(e);
            let lam = inst.lambda(edge.task_type);
            numerator += x[e] * lam / (edge.mu * edge.mu);
            load += x[e] * lam / edge.mu;
        }
        let denom = F::one() - load;
        let w_i = numerator / denom;
        grad[e_star] += mu_star * w_i;
        for &e in inst.worker_edges(i) {
            let edge = inst.edge(e);
            let lam = inst.lambda(edge.task_type);
            let d_num = lam / (edge.mu * edge.mu);
            let d_load = lam / edge.mu;
            grad[e] += x[e_star] * mu_star * (d_num * denom + numerator * d_load)
                / (denom * denom);
        }
    }
    grad
}

/// One local-search run: projected subgradient descent with backtracking,
/// then compass polish. Returns the final point and surrogate value;
/// accepted moves count into `iterations`, capped at `max_iters` per start.
pub(crate) fn descend<F: Scalar>(
    inst: &Instance<F>,
    start: Vec<F>,
    tol: F,
    max_iters: usize,
    iterations: &mut usize,
) -> (Vec<F>, F) {
    let mut x = start;
    project_policy(inst, &mut x);
    let mut value = surrogate(inst, &x);
    let mut spent = 0usize;

    while spent < max_iters {
        let grad = subgradient(inst, &x);
        let scale = grad
            .iter()
            .fold(F::zero(), |acc, g| acc.max(g.abs()));
        if scale <= F::of(1e-15) {
            break;
        }
        let mut step = F::one();
        let mut improved = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut candidate = x.clone();
            for (c, g) in candidate.iter_mut().zip(&grad) {
                *c = *c - step * *g / scale;
            }
            project_policy(inst, &mut candidate);
            let candidate_value = surrogate(inst, &candidate);
            if candidate_value < value {
                improved = Some((candidate, candidate_value));
                break;
            }
            step = step * F::of(0.5);
        }
        let Some((next, next_value)) = improved else {
            break;
        };
        let gain = value - next_value;
        x = next;
        value = next_value;
        spent += 1;
        *iterations += 1;
        if gain < tol * value.abs().max(F::one()) {
            break;
        }
    }

    compass_polish(inst, &mut x, &mut value, tol, max_iters, &mut spent, iterations);
    (x, value)
}

/// Moves mass between edge pairs of one type at geometrically shrinking
/// step sizes; accepts strict improvements only.
fn compass_polish<F: Scalar>(
    inst: &Instance<F>,
    x: &mut Vec<F>,
    value: &mut F,
    tol: F,
    max_iters: usize,
    spent: &mut usize,
    iterations: &mut usize,
) {
    let mut step = F::of(0.25);
    let floor = tol.max(F::of(1e-12));
    while step > floor && *spent < max_iters {
        let mut improved = true;
        while improved && *spent < max_iters {
            improved = false;
            for j in 0..inst.n_types() {
                let ids = inst.type_edges(j);
                if ids.len() < 2 {
                    continue;
                }
                for &give in ids {
                    if x[give] <= F::zero() {
                        continue;
                    }
                    for &take in ids {
                        if take == give {
                            continue;
                        }
                        let delta = step.min(x[give]).min(F::one() - x[take]);
                        if delta <= F::zero() {
                            continue;
                        }
                        let mut candidate = x.clone();
                        candidate[give] = candidate[give] - delta;
                        candidate[take] = candidate[take] + delta;
                        let candidate_value = surrogate(inst, &candidate);
                        if candidate_value < *value {
                            *x = candidate;
                            *value = candidate_value;
                            *spent += 1;
                            *iterations += 1;
                            improved = true;
                        }
                    }
                }
            }
        }
        step = step * F::of(0.25);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_projection_known_points() {
        let mut v = vec![0.5f64, 0.5];
        project_simplex(&mut v);
        assert_eq!(v, vec![0.5, 0.5]);

        let mut v = vec![2.0f64, 0.0];
        project_simplex(&mut v);
        assert_relative_eq!(v[0], 1.0);
        assert_relative_eq!(v[1], 0.0);

        let mut v = vec![0.0f64, 0.0, 0.0];
        project_simplex(&mut v);
        for entry in v {
            assert_relative_eq!(entry, 1.0 / 3.0);
        }

        let mut v = vec![0.8f64, 0.6, -0.2];
        project_simplex(&mut v);
        let total: f64 = v.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert!(v.iter().all(|&e| e >= 0.0));
        // Projection preserves ordering.
        assert!(v[0] >= v[1] && v[1] >= v[2]);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut v = vec![0.3f64, -1.0, 2.5, 0.1];
        project_simplex(&mut v);
        let once = v.clone();
        project_simplex(&mut v);
        for (a, b) in once.iter().zip(&v) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn surrogate_penalizes_overload() {
        let inst = crate::testutil::inst(&["w"], &["t"], &[2.0], &[(0, 0, 1.0)]);
        let value = surrogate(&inst, &[1.0]);
        assert!(value >= PENALTY_BASE);
        assert!(value.is_finite());
    }
}
