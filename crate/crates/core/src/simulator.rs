//! Discrete-event simulation of the worker-queue network.
//!
//! Tasks of each type arrive as Poisson processes; an online policy routes
//! every arrival to a worker immediately. A free worker starts service on
//! the spot, otherwise the task joins the worker's FIFO virtual queue.
//! Service durations are exponential with the serving edge's rate, drawn at
//! service start so policies cannot peek at realized durations of waiting
//! tasks. Identical `(instance, policy, horizon, warmup, seed)` produce
//! bit-identical metrics: all randomness flows from documented per-purpose
//! ChaCha streams (see [`crate::rng`]) and event ties are ordered
//! arrival-before-completion, then by schedule sequence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::model::{validate_instance, Instance, PolicyMatrix};
use crate::policies::{
    assign_free_first, assign_gtw, assign_gwu, assign_lp_random, InService, PolicyError,
    QueuedTask, RuntimeState,
};
use crate::rng::{stream_rng, ARRIVALS, MERGED_ARRIVALS, MERGED_TYPES, POLICY, SERVICE};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),
    #[error("horizon must be positive and warmup must be smaller, got warmup {warmup} >= horizon {horizon}")]
    BadWindow { warmup: f64, horizon: f64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One task arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival<F> {
    pub time: F,
    pub task_type: usize,
}

/// How the merged arrival stream is produced. The two modes are
/// distributionally identical; they differ in how randomness is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalMode {
    /// One exponential stream per task type, merged by time.
    #[default]
    PerType,
    /// One exponential stream at the total rate; each arrival's type drawn
    /// from the rate proportions.
    Merged,
}

/// Generates the arrival stream over `(0, horizon]`, sorted by time
/// (ties by type index, then per-type order).
pub fn generate_arrivals<F: Scalar>(
    inst: &Instance<F>,
    horizon: F,
    seed: u64,
) -> Vec<Arrival<F>> {
    generate_arrivals_with_mode(inst, horizon, seed, ArrivalMode::PerType)
}

/// [`generate_arrivals`] with an explicit mode.
pub fn generate_arrivals_with_mode<F: Scalar>(
    inst: &Instance<F>,
    horizon: F,
    seed: u64,
    mode: ArrivalMode,
) -> Vec<Arrival<F>> {
    let mut arrivals = Vec::new();
    if horizon <= F::zero() {
        return arrivals;
    }
    match mode {
        ArrivalMode::PerType => {
            for j in 0..inst.n_types() {
                let mut rng = stream_rng(seed, ARRIVALS + j as u64);
                let rate = inst.lambda(j);
                let mut clock = F::zero();
                loop {
                    clock += F::sample_exp(&mut rng, rate);
                    if clock > horizon {
                        break;
                    }
                    arrivals.push(Arrival {
                        time: clock,
                        task_type: j,
                    });
                }
            }
            // Stable by construction within a type; order ties across types
            // by type index.
            arrivals.sort_by(|a, b| {
                a.time
                    .partial_cmp(&b.time)
                    .expect("arrival times are finite")
                    .then(a.task_type.cmp(&b.task_type))
            });
        }
        ArrivalMode::Merged => {
            let total: F = inst.lambdas().iter().copied().sum();
            if total <= F::zero() {
                return arrivals;
            }
            let mut time_rng = stream_rng(seed, MERGED_ARRIVALS);
            let mut type_rng = stream_rng(seed, MERGED_TYPES);
            let mut clock = F::zero();
            loop {
                clock += F::sample_exp(&mut time_rng, total);
                if clock > horizon {
                    break;
                }
                let target = F::sample_unit(&mut type_rng) * total;
                let mut cumulative = F::zero();
                let mut task_type = inst.n_types() - 1;
                for j in 0..inst.n_types() {
                    cumulative += inst.lambda(j);
                    if target < cumulative {
                        task_type = j;
                        break;
                    }
                }
                arrivals.push(Arrival {
                    time: clock,
                    task_type,
                });
            }
        }
    }
    arrivals
}

/// The online policy a simulation run executes.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a, F> {
    LpRandom(&'a PolicyMatrix<F>),
    FreeFirst(&'a PolicyMatrix<F>),
    Gtw,
    Gwu,
}

/// Empirical per-type waiting statistics over served, post-warmup tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct PerTypeMetrics<F> {
    pub count: usize,
    pub mean_abs_wait: F,
    pub max_abs_wait: F,
    /// Mean of wait times the serving edge's service rate.
    pub mean_rel_wait: F,
}

/// Metrics of one simulation run.
///
/// Task accounting is a partition: every arrival is either counted (service
/// started by the horizon and arrived at or after warmup), excluded by
/// warmup (arrived before warmup, whatever its fate), or censored (arrived
/// in the measurement window but never reached service by the horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics<F> {
    pub per_type: Vec<PerTypeMetrics<F>>,
    /// Busy fraction per worker over `(warmup, horizon]`.
    pub per_worker_busy: Vec<F>,
    pub max_mean_abs_wait: F,
    pub max_mean_rel_wait: F,
    pub max_workload: F,
    pub total_arrivals: usize,
    pub served: usize,
    pub censored: usize,
    pub warmup_excluded: usize,
}

/// One served task, for white-box inspection in tests.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct ServedRecord<F> {
    pub task_type: usize,
    pub worker: usize,
    pub arrival: F,
    pub start: F,
    pub duration: F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Completion<F> {
    time: F,
    worker: usize,
    seq: u64,
}

impl<F: Scalar> Eq for Completion<F> {}

impl<F: Scalar> Ord for Completion<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the earliest event.
        other
            .time
            .partial_cmp(&self.time)
            .expect("completion times are finite")
            .then(other.seq.cmp(&self.seq))
    }
}

impl<F: Scalar> PartialOrd for Completion<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs one simulation and aggregates metrics over `(warmup, horizon]`.
pub fn run_simulation<F: Scalar>(
    inst: &Instance<F>,
    policy: Policy<'_, F>,
    horizon: F,
    warmup: F,
    seed: u64,
) -> Result<SimMetrics<F>, SimError> {
    run_simulation_impl(inst, policy, horizon, warmup, seed, &mut None)
}

/// Test entry point that also returns every served task.
#[cfg(test)]
pub(crate) fn run_simulation_traced<F: Scalar>(
    inst: &Instance<F>,
    policy: Policy<'_, F>,
    horizon: F,
    warmup: F,
    seed: u64,
) -> Result<(SimMetrics<F>, Vec<ServedRecord<F>>), SimError> {
    let mut trace = Some(Vec::new());
    let metrics = run_simulation_impl(inst, policy, horizon, warmup, seed, &mut trace)?;
    Ok((metrics, trace.unwrap()))
}

fn run_simulation_impl<F: Scalar>(
    inst: &Instance<F>,
    policy: Policy<'_, F>,
    horizon: F,
    warmup: F,
    seed: u64,
    trace: &mut Option<Vec<ServedRecord<F>>>,
) -> Result<SimMetrics<F>, SimError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(SimError::InvalidInstance(violations));
    }
    if horizon <= F::zero() || warmup >= horizon || warmup < F::zero() {
        return Err(SimError::BadWindow {
            warmup: warmup.to_f64().unwrap_or(f64::NAN),
            horizon: horizon.to_f64().unwrap_or(f64::NAN),
        });
    }

    let arrivals = generate_arrivals(inst, horizon, seed);
    let mut policy_rng = stream_rng(seed, POLICY);
    let mut service_rngs: Vec<_> = (0..inst.n_workers())
        .map(|i| stream_rng(seed, SERVICE + i as u64))
        .collect();

    let n_workers = inst.n_workers();
    let n_types = inst.n_types();
    let mut state = RuntimeState::<F>::new(n_workers);
    let mut completions: BinaryHeap<Completion<F>> = BinaryHeap::new();
    let mut seq = 0u64;

    let mut counted = vec![0usize; n_types];
    let mut abs_sum = vec![F::zero(); n_types];
    let mut abs_max = vec![F::zero(); n_types];
    let mut rel_sum = vec![F::zero(); n_types];
    let mut busy_window = vec![F::zero(); n_workers];
    let mut warmup_excluded = 0usize;
    let mut served_total = 0usize;

    // Clip of (a, b] to the measurement window (warmup, horizon].
    let window_overlap = |a: F, b: F| (b.min(horizon) - a.max(warmup)).max(F::zero());

    let mut record_service_start =
        |task: QueuedTask<F>, worker: usize, start: F, duration: F| {
            served_total += 1;
            if task.arrival >= warmup {
                let wait = start - task.arrival;
                let edge = inst
                    .edge_index(worker, task.task_type)
                    .expect("policies only pick qualified workers");
                counted[task.task_type] += 1;
                abs_sum[task.task_type] += wait;
                abs_max[task.task_type] = abs_max[task.task_type].max(wait);
                rel_sum[task.task_type] += wait * inst.edge(edge).mu;
            }
            if let Some(records) = trace.as_mut() {
                records.push(ServedRecord {
                    task_type: task.task_type,
                    worker,
                    arrival: task.arrival,
                    start,
                    duration,
                });
            }
        };

    let mut start_service = |worker: usize,
                             task: QueuedTask<F>,
                             now: F,
                             state: &mut RuntimeState<F>,
                             completions: &mut BinaryHeap<Completion<F>>| {
        let edge = inst
            .edge_index(worker, task.task_type)
            .expect("policies only pick qualified workers");
        let duration = F::sample_exp(&mut service_rngs[worker], inst.edge(edge).mu);
        state.in_service[worker] = Some(InService {
            task_type: task.task_type,
            start: now,
            duration,
        });
        seq += 1;
        completions.push(Completion {
            time: now + duration,
            worker,
            seq,
        });
        record_service_start(task, worker, now, duration);
    };

    let mut next_arrival = 0usize;
    loop {
        let arrival_time = arrivals.get(next_arrival).map(|a| a.time);
        let completion_time = completions.peek().map(|c| c.time);
        // Ties go to the arrival.
        let take_arrival = match (arrival_time, completion_time) {
            (Some(a), Some(c)) => a <= c,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };

        if take_arrival {
            let arrival = arrivals[next_arrival];
            next_arrival += 1;
            state.now = arrival.time;
            if arrival.time < warmup {
                warmup_excluded += 1;
            }
            let worker = match policy {
                Policy::LpRandom(x) => {
                    assign_lp_random(inst, x, arrival.task_type, &mut policy_rng)?
                }
                Policy::FreeFirst(x) => {
                    assign_free_first(inst, x, arrival.task_type, &state, &mut policy_rng)?
                }
                Policy::Gtw => assign_gtw(inst, arrival.task_type, &state)?,
                Policy::Gwu => assign_gwu(inst, arrival.task_type, &state)?,
            };
            let task = QueuedTask {
                task_type: arrival.task_type,
                arrival: arrival.time,
            };
            if state.is_free(worker) {
                start_service(worker, task, arrival.time, &mut state, &mut completions);
            } else {
                state.queues[worker].push_back(task);
            }
        } else {
            let completion = completions.pop().expect("peeked above");
            if completion.time > horizon {
                break;
            }
            state.now = completion.time;
            let finished = state.in_service[completion.worker]
                .take()
                .expect("completion implies a task in service");
            state.busy_time[completion.worker] += finished.duration;
            busy_window[completion.worker] += window_overlap(finished.start, completion.time);
            if let Some(task) = state.queues[completion.worker].pop_front() {
                start_service(
                    completion.worker,
                    task,
                    completion.time,
                    &mut state,
                    &mut completions,
                );
            }
        }
    }

    // Workers still serving at the horizon contribute busy time up to it.
    for (i, current) in state.in_service.iter().enumerate() {
        if let Some(task) = current {
            busy_window[i] += window_overlap(task.start, horizon);
        }
    }

    let total_arrivals = arrivals.len();
    let served_in_window: usize = counted.iter().sum();
    // Unserved tasks all sit in some queue; the ones from the warmup period
    // stay in the warmup bucket rather than the censored tally.
    let censored = state
        .queues
        .iter()
        .flatten()
        .filter(|task| task.arrival >= warmup)
        .count();
    debug_assert_eq!(
        total_arrivals,
        served_in_window + warmup_excluded + censored,
        "arrival accounting must partition (served_total = {served_total})"
    );

    let window = horizon - warmup;
    let per_worker_busy: Vec<F> = busy_window
        .iter()
        .map(|&b| (b / window).min(F::one()))
        .collect();

    let mut per_type = Vec::with_capacity(n_types);
    let mut max_mean_abs = F::zero();
    let mut max_mean_rel = F::zero();
    for j in 0..n_types {
        let count = counted[j];
        let (mean_abs, mean_rel) = if count > 0 {
            let n = F::of(count as f64);
            (abs_sum[j] / n, rel_sum[j] / n)
        } else {
            (F::zero(), F::zero())
        };
        if count > 0 {
            max_mean_abs = max_mean_abs.max(mean_abs);
            max_mean_rel = max_mean_rel.max(mean_rel);
        }
        per_type.push(PerTypeMetrics {
            count,
            mean_abs_wait: mean_abs,
            max_abs_wait: abs_max[j],
            mean_rel_wait: mean_rel,
        });
    }
    let max_workload = per_worker_busy
        .iter()
        .fold(F::zero(), |acc, &b| acc.max(b));

    Ok(SimMetrics {
        per_type,
        per_worker_busy,
        max_mean_abs_wait: max_mean_abs,
        max_mean_rel_wait: max_mean_rel,
        max_workload,
        total_arrivals,
        served: served_in_window,
        censored,
        warmup_excluded,
    })
}
