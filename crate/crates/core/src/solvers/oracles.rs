//! Brute-force oracles, independent of the solvers they check.
//!
//! The subset oracle computes the optimal maximum workload on uniform-rate
//! instances by enumerating task subsets (max-flow/min-cut characterization:
//! the optimum equals `max_S lambda(S) / mu(neighbors(S))`). The grid oracle
//! exhaustively evaluates the waiting-time objective on a lattice over the
//! product of per-type simplices. Both exist to catch solver bugs, so
//! neither shares code with the solver paths beyond the rate formulas.

use crate::model::{validate_instance, Instance, PolicyMatrix};
use crate::Scalar;

use super::SolverError;

/// Subset enumeration cap: 2^22 subsets stays under ~10 s on a desktop.
pub const MAX_SUBSET_TYPES: usize = 22;

/// Result of the subset oracle: the optimal maximum workload and a witness
/// subset of task-type indices attaining it.
#[derive(Debug, Clone)]
pub struct SubsetOracle<F> {
    pub objective: F,
    pub witness: Vec<usize>,
}

/// Optimal maximum workload via subset enumeration.
///
/// Requires per-worker uniform service rates (`mu[i][j] = mu[i]`) and
/// uniform arrival rates; split task types beforehand to uniformize arrival
/// rates if needed. Enumerates every nonempty subset `S` of task types and
/// returns `max_S lambda * |S| / sum of mu over neighbors of S`.
pub fn oracle_eta_s_subsets<F: Scalar>(
    inst: &Instance<F>,
) -> Result<SubsetOracle<F>, SolverError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(SolverError::InvalidInstance(violations));
    }
    let n_types = inst.n_types();
    if n_types > MAX_SUBSET_TYPES {
        return Err(SolverError::TooLarge(format!(
            "subset oracle handles at most {MAX_SUBSET_TYPES} task types, got {n_types}"
        )));
    }
    if inst.n_workers() > 64 {
        return Err(SolverError::TooLarge(
            "subset oracle handles at most 64 workers".into(),
        ));
    }

    let lambda = inst.lambda(0);
    for j in 1..n_types {
        if !nearly_equal(inst.lambda(j), lambda) {
            return Err(SolverError::Precondition(
                "subset oracle needs uniform arrival rates; split task types first".into(),
            ));
        }
    }
    let mut worker_mu = vec![F::zero(); inst.n_workers()];
    for i in 0..inst.n_workers() {
        let ids = inst.worker_edges(i);
        if ids.is_empty() {
            continue;
        }
        let mu = inst.edge(ids[0]).mu;
        for &e in ids {
            if !nearly_equal(inst.edge(e).mu, mu) {
                return Err(SolverError::Precondition(format!(
                    "subset oracle needs per-worker uniform service rates; worker `{}` varies",
                    inst.workers()[i]
                )));
            }
        }
        worker_mu[i] = mu;
    }

    let type_masks: Vec<u64> = (0..n_types)
        .map(|j| {
            inst.type_edges(j)
                .iter()
                .fold(0u64, |mask, &e| mask | (1u64 << inst.edge(e).worker))
        })
        .collect();

    let mut best = F::zero();
    let mut witness = 0u64;
    for subset in 1u64..(1u64 << n_types) {
        let mut neighbors = 0u64;
        let mut bits = subset;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            neighbors |= type_masks[j];
            bits &= bits - 1;
        }
        let mut capacity = F::zero();
        let mut bits = neighbors;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            capacity += worker_mu[i];
            bits &= bits - 1;
        }
        let demand = lambda * F::of(subset.count_ones() as f64);
        let ratio = demand / capacity;
        if ratio > best {
            best = ratio;
            witness = subset;
        }
    }

    let witness = (0..n_types).filter(|j| witness & (1 << j) != 0).collect();
    Ok(SubsetOracle {
        objective: best,
        witness,
    })
}

fn nearly_equal<F: Scalar>(a: F, b: F) -> bool {
    (a - b).abs() <= F::of(1e-12) * a.abs().max(b.abs()).max(F::one())
}

/// Result of the grid oracle: the best lattice point, its objective, and a
/// conservative error allowance (twice the locally estimated Lipschitz
/// constant times the grid cell diameter) within which the true optimum of
/// a smooth stretch of the objective must lie.
#[derive(Debug, Clone)]
pub struct GridOracle<F> {
    pub objective: F,
    pub x: PolicyMatrix<F>,
    pub allowance: F,
    pub points_evaluated: usize,
}

/// Largest total number of free dimensions the grid oracle accepts.
pub const MAX_GRID_FREE_DIMS: usize = 4;
/// Largest grid resolution the oracle accepts.
pub const MAX_GRID_RESOLUTION: usize = 101;

/// Exhaustive evaluation of the waiting-time objective over the lattice of
/// per-type distributions with `resolution` levels per coordinate.
pub fn oracle_eta_t_grid<F: Scalar>(
    inst: &Instance<F>,
    resolution: usize,
) -> Result<GridOracle<F>, SolverError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(SolverError::InvalidInstance(violations));
    }
    if !(2..=MAX_GRID_RESOLUTION).contains(&resolution) {
        return Err(SolverError::TooLarge(format!(
            "grid resolution must be in 2..={MAX_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    let free_dims: usize = (0..inst.n_types())
        .map(|j| inst.type_edges(j).len().saturating_sub(1))
        .sum();
    if free_dims > MAX_GRID_FREE_DIMS {
        return Err(SolverError::TooLarge(format!(
            "grid oracle handles at most {MAX_GRID_FREE_DIMS} free dimensions, got {free_dims}"
        )));
    }

    let levels = resolution - 1;
    let cell = F::one() / F::of(levels as f64);

    // Per type: every lattice point of its simplex.
    let mut options: Vec<Vec<Vec<F>>> = Vec::with_capacity(inst.n_types());
    for j in 0..inst.n_types() {
        let degree = inst.type_edges(j).len();
        let mut points = Vec::new();
        let mut current = vec![0usize; degree];
        compositions(levels, degree, 0, &mut current, &mut points);
        let scaled: Vec<Vec<F>> = points
            .iter()
            .map(|c| c.iter().map(|&k| F::of(k as f64) * cell).collect())
            .collect();
        options.push(scaled);
    }

    let mut x = vec![F::zero(); inst.n_edges()];
    let mut indices = vec![0usize; inst.n_types()];
    for j in 0..inst.n_types() {
        scatter(inst, j, &options[j][0], &mut x);
    }

    let mut best_value = F::infinity();
    let mut best_x = x.clone();
    let mut points_evaluated = 0usize;
    loop {
        let value = eta_t_lean(inst, &x);
        points_evaluated += 1;
        if value < best_value {
            best_value = value;
            best_x.copy_from_slice(&x);
        }
        // Odometer over the per-type option lists.
        let mut j = 0;
        loop {
            if j == inst.n_types() {
                break;
            }
            indices[j] += 1;
            if indices[j] < options[j].len() {
                scatter(inst, j, &options[j][indices[j]], &mut x);
                break;
            }
            indices[j] = 0;
            scatter(inst, j, &options[j][0], &mut x);
            j += 1;
        }
        if j == inst.n_types() {
            break;
        }
    }

    if best_value.is_infinite() {
        return Err(SolverError::Numerical(
            "no stable point on the grid; instance is too loaded for this resolution".into(),
        ));
    }

    // Local Lipschitz estimate around the best point: probe one lattice step
    // along every in-simplex direction, ignoring steps that leave the stable
    // region (the bound only speaks for smooth stretches of the objective).
    let mut lipschitz = F::zero();
    let step_norm = cell * F::of(2.0).sqrt();
    for j in 0..inst.n_types() {
        let ids = inst.type_edges(j);
        if ids.len() < 2 {
            continue;
        }
        for &give in ids {
            for &take in ids {
                if give == take
                    || best_x[give] < cell
                    || best_x[take] + cell > F::one() + F::of(1e-12)
                {
                    continue;
                }
                let mut probe = best_x.clone();
                probe[give] = probe[give] - cell;
                probe[take] = probe[take] + cell;
                let value = eta_t_lean(inst, &probe);
                if value.is_finite() {
                    lipschitz = lipschitz.max((value - best_value).abs() / step_norm);
                }
            }
        }
    }
    let free_types = (0..inst.n_types())
        .filter(|&j| inst.type_edges(j).len() >= 2)
        .count();
    let diameter = cell * (F::of(2.0) * F::of(free_types as f64)).sqrt();
    let allowance = (F::of(2.0) * lipschitz * diameter).max(F::of(1e-9));

    Ok(GridOracle {
        objective: best_value,
        x: PolicyMatrix::new(best_x),
        allowance,
        points_evaluated,
    })
}

fn scatter<F: Scalar>(inst: &Instance<F>, j: usize, point: &[F], x: &mut [F]) {
    for (&e, &v) in inst.type_edges(j).iter().zip(point) {
        x[e] = v;
    }
}

/// All ways to write `total` as an ordered sum of `parts` nonnegative terms.
fn compositions(
    total: usize,
    parts: usize,
    at: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if at + 1 == parts {
        current[at] = total;
        out.push(current.clone());
        return;
    }
    for take in 0..=total {
        current[at] = take;
        compositions(total - take, parts, at + 1, current, out);
    }
}

/// Maximum relative wait without allocating the full rate report; `+inf`
/// when a loaded worker is unstable.
fn eta_t_lean<F: Scalar>(inst: &Instance<F>, x: &[F]) -> F {
    let stability = F::one() - F::of(crate::model::STABILITY_EPS);
    let mut w = vec![F::zero(); inst.n_workers()];
    for (i, entry) in w.iter_mut().enumerate() {
        let mut load = F::zero();
        let mut second = F::zero();
        for &e in inst.worker_edges(i) {
            let edge = inst.edge(e);
            let flow = x[e] * inst.lambda(edge.task_type);
            load += flow / edge.mu;
            second += flow / (edge.mu * edge.mu);
        }
        *entry = if load >= stability {
            F::infinity()
        } else {
            second / (F::one() - load)
        };
    }
    let mut worst = F::zero();
    for j in 0..inst.n_types() {
        let mut wbar = F::zero();
        for &e in inst.type_edges(j) {
            let edge = inst.edge(e);
            if x[e] > F::zero() {
                wbar += x[e] * edge.mu * w[edge.worker];
            }
        }
        worst = worst.max(wbar);
    }
    worst
}
