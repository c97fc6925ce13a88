//! Online assignment policies: given an arriving task and the live queue
//! state, pick a worker.
//!
//! Two randomized policies draw from precomputed assignment fractions (the
//! solution of one of the minimax programs): one unconditionally, one
//! preferring currently free workers with renormalized probabilities. Two
//! greedy baselines pick the neighbor with the shortest estimated waiting
//! time (GTW) or the lowest observed utilization (GWU). Policies never
//! mutate state and always return a qualified neighbor of the arriving
//! type; ties break to the lowest worker index for reproducibility.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::model::{Instance, PolicyMatrix};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("assignment fractions of task type index {task_type} sum to {sum}, expected 1")]
    DegenerateRow { task_type: usize, sum: f64 },
    #[error("task type index {0} has no qualified worker")]
    NoNeighbor(usize),
}

/// A task sitting in a worker's virtual queue.
#[derive(Debug, Clone, Copy)]
pub struct QueuedTask<F> {
    pub task_type: usize,
    pub arrival: F,
}

/// The task a worker is currently serving. `duration` is the realized
/// service time, drawn when service began; the GTW policy must not read it
/// (it estimates with mean durations), the simulator and GWU may.
#[derive(Debug, Clone, Copy)]
pub struct InService<F> {
    pub task_type: usize,
    pub start: F,
    pub duration: F,
}

/// Live queue state the online policies observe. Owned and mutated by the
/// simulator; policies get it read-only.
#[derive(Debug, Clone)]
pub struct RuntimeState<F> {
    pub now: F,
    pub queues: Vec<VecDeque<QueuedTask<F>>>,
    pub in_service: Vec<Option<InService<F>>>,
    /// Cumulative realized busy time per worker (completed tasks only).
    pub busy_time: Vec<F>,
}

impl<F: Scalar> RuntimeState<F> {
    pub fn new(n_workers: usize) -> Self {
        RuntimeState {
            now: F::zero(),
            queues: vec![VecDeque::new(); n_workers],
            in_service: vec![None; n_workers],
            busy_time: vec![F::zero(); n_workers],
        }
    }

    /// A worker is free iff it serves nothing and its queue is empty.
    pub fn is_free(&self, worker: usize) -> bool {
        self.in_service[worker].is_none() && self.queues[worker].is_empty()
    }
}

/// Draws a neighbor of type `j` with the probabilities in `x`, ignoring
/// queue state entirely.
pub fn assign_lp_random<F: Scalar, R: Rng + ?Sized>(
    inst: &Instance<F>,
    x: &PolicyMatrix<F>,
    j: usize,
    rng: &mut R,
) -> Result<usize, PolicyError> {
    let ids = inst.type_edges(j);
    if ids.is_empty() {
        return Err(PolicyError::NoNeighbor(j));
    }
    let total: F = ids.iter().map(|&e| x.get(e)).sum();
    if (total - F::one()).abs() > F::of(crate::model::FEASIBILITY_EPS) {
        return Err(PolicyError::DegenerateRow {
            task_type: j,
            sum: total.to_f64().unwrap_or(f64::NAN),
        });
    }
    let target = F::sample_unit(rng);
    let mut cumulative = F::zero();
    let mut fallback = None;
    for &e in ids {
        let weight = x.get(e);
        if weight <= F::zero() {
            continue;
        }
        fallback = Some(inst.edge(e).worker);
        cumulative += weight;
        if target < cumulative {
            return Ok(inst.edge(e).worker);
        }
    }
    // Rounding left a sliver above the accumulated mass.
    fallback.ok_or(PolicyError::DegenerateRow {
        task_type: j,
        sum: total.to_f64().unwrap_or(f64::NAN),
    })
}

/// Prefers free neighbors: draws among them with the fractions of `x`
/// renormalized over the free set; falls back to uniform over the free set
/// when they all carry zero fraction, and to [`assign_lp_random`] when no
/// neighbor is free.
pub fn assign_free_first<F: Scalar, R: Rng + ?Sized>(
    inst: &Instance<F>,
    x: &PolicyMatrix<F>,
    j: usize,
    state: &RuntimeState<F>,
    rng: &mut R,
) -> Result<usize, PolicyError> {
    let free: Vec<usize> = inst
        .type_edges(j)
        .iter()
        .copied()
        .filter(|&e| state.is_free(inst.edge(e).worker))
        .collect();
    if free.is_empty() {
        return assign_lp_random(inst, x, j, rng);
    }
    let mass: F = free.iter().map(|&e| x.get(e)).sum();
    let target = F::sample_unit(rng);
    if mass > F::zero() {
        let mut cumulative = F::zero();
        let mut fallback = None;
        for &e in &free {
            let weight = x.get(e);
            if weight <= F::zero() {
                continue;
            }
            fallback = Some(inst.edge(e).worker);
            cumulative += weight / mass;
            if target < cumulative {
                return Ok(inst.edge(e).worker);
            }
        }
        Ok(fallback.expect("positive mass implies a positive-weight edge"))
    } else {
        // All free workers carry zero fraction; the renormalization in the
        // rule is 0/0, so fall back to a uniform choice among them.
        let pick = (target * F::of(free.len() as f64)).to_f64().unwrap() as usize;
        let pick = pick.min(free.len() - 1);
        Ok(inst.edge(free[pick]).worker)
    }
}

/// Greedy Task Waiting time: the neighbor whose estimated queue clears
/// soonest. Estimates sum mean durations of queued tasks plus the remaining
/// mean of the in-service task (mean minus elapsed, floored at zero);
/// realized durations are never consulted.
pub fn assign_gtw<F: Scalar>(
    inst: &Instance<F>,
    j: usize,
    state: &RuntimeState<F>,
) -> Result<usize, PolicyError> {
    let mut best: Option<(F, usize)> = None;
    for &e in inst.type_edges(j) {
        let worker = inst.edge(e).worker;
        let mut estimate = F::zero();
        for task in &state.queues[worker] {
            estimate += mean_duration(inst, worker, task.task_type);
        }
        if let Some(current) = &state.in_service[worker] {
            let elapsed = state.now - current.start;
            let remaining = mean_duration(inst, worker, current.task_type) - elapsed;
            estimate += remaining.max(F::zero());
        }
        if best.map_or(true, |(incumbent, _)| estimate < incumbent) {
            best = Some((estimate, worker));
        }
    }
    best.map(|(_, worker)| worker)
        .ok_or(PolicyError::NoNeighbor(j))
}

/// Greedy Worker Utilization: the neighbor with the lowest observed busy
/// fraction, counting realized durations of finished tasks plus the elapsed
/// part of the in-service task; everyone ties at zero when `now` is zero.
pub fn assign_gwu<F: Scalar>(
    inst: &Instance<F>,
    j: usize,
    state: &RuntimeState<F>,
) -> Result<usize, PolicyError> {
    let mut best: Option<(F, usize)> = None;
    for &e in inst.type_edges(j) {
        let worker = inst.edge(e).worker;
        let utilization = if state.now > F::zero() {
            let mut busy = state.busy_time[worker];
            if let Some(current) = &state.in_service[worker] {
                busy += state.now - current.start;
            }
            busy / state.now
        } else {
            F::zero()
        };
        if best.map_or(true, |(incumbent, _)| utilization < incumbent) {
            best = Some((utilization, worker));
        }
    }
    best.map(|(_, worker)| worker)
        .ok_or(PolicyError::NoNeighbor(j))
}

fn mean_duration<F: Scalar>(inst: &Instance<F>, worker: usize, task_type: usize) -> F {
    let e = inst
        .edge_index(worker, task_type)
        .expect("queued task sits on a qualified worker");
    inst.edge(e).mu.recip()
}

/// The six selectable policies; the pt/ps suffix says which program's
/// solution feeds the assignment fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    LpRandomPt,
    LpRandomPs,
    FreeFirstPt,
    FreeFirstPs,
    Gtw,
    Gwu,
}

impl PolicyName {
    pub const ALL: [PolicyName; 6] = [
        PolicyName::LpRandomPt,
        PolicyName::LpRandomPs,
        PolicyName::FreeFirstPt,
        PolicyName::FreeFirstPs,
        PolicyName::Gtw,
        PolicyName::Gwu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::LpRandomPt => "lp-random-pt",
            PolicyName::LpRandomPs => "lp-random-ps",
            PolicyName::FreeFirstPt => "free-first-pt",
            PolicyName::FreeFirstPs => "free-first-ps",
            PolicyName::Gtw => "gtw",
            PolicyName::Gwu => "gwu",
        }
    }

    /// Which program's solution this policy consumes, if any.
    pub fn needs_program(self) -> Option<ProgramKind> {
        match self {
            PolicyName::LpRandomPt | PolicyName::FreeFirstPt => Some(ProgramKind::Pt),
            PolicyName::LpRandomPs | PolicyName::FreeFirstPs => Some(ProgramKind::Ps),
            PolicyName::Gtw | PolicyName::Gwu => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProgramKind {
    Pt,
    Ps,
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown policy `{s}`; expected one of: {}",
                    PolicyName::ALL.map(|p| p.as_str()).join(", ")
                )
            })
    }
}
