//! The worker/task-type network and its closed-form queueing quantities.
//!
//! Workers and task types form a bipartite graph; an edge `(i, j)` means
//! worker `i` can serve tasks of type `j` with exponential service rate
//! `mu[i][j]`. Tasks of type `j` arrive as a Poisson process of rate
//! `lambda[j]`. A randomized assignment policy routes a fraction `x[i][j]`
//! of type `j` to worker `i`; each worker's queue is then an M/G/1 queue
//! with hyperexponential service, and every long-run quantity (workload,
//! waiting time) has a closed form evaluated here.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::Scalar;

/// Absolute tolerance for the per-type distribution constraint
/// `sum_i x[i][j] = 1`: LP solvers return near-feasible vertices.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// A worker is treated as unstable (infinite expected wait) once its
/// workload reaches `1 - STABILITY_EPS`. The analytic formulas are singular
/// at workload 1 and meaningless beyond it.
pub const STABILITY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate worker id `{0}`")]
    DuplicateWorker(String),
    #[error("duplicate task type id `{0}`")]
    DuplicateTaskType(String),
    #[error("unknown worker `{0}`")]
    UnknownWorker(String),
    #[error("unknown task type `{0}`")]
    UnknownTaskType(String),
    #[error("duplicate edge `{0}|{1}`")]
    DuplicateEdge(String, String),
    #[error("edge key `{0}` is not of the form `worker|task_type`")]
    BadEdgeKey(String),
    #[error("worker index {0} out of range")]
    WorkerIndexOutOfRange(usize),
    #[error("task type index {0} out of range")]
    TypeIndexOutOfRange(usize),
    #[error("split factor must be at least 2, got {0}")]
    BadSplitFactor(usize),
    #[error("policy has {got} entries but the instance has {expected} edges")]
    PolicyShape { expected: usize, got: usize },
    #[error("policy violates feasibility preconditions: {}", .0.join("; "))]
    InfeasiblePolicy(Vec<String>),
    #[error("instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance JSON: field `{0}` has the wrong shape")]
    BadField(&'static str),
}

/// One qualification edge of the bipartite graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<F> {
    pub worker: usize,
    pub task_type: usize,
    /// Service rate; mean service duration is `1 / mu`.
    pub mu: F,
}

/// The bipartite worker/task-type network.
///
/// Workers, task types and edges keep their insertion order and all
/// iteration is in that order, so every downstream computation is
/// deterministic across runs.
#[derive(Debug, Clone)]
pub struct Instance<F> {
    workers: Vec<String>,
    task_types: Vec<String>,
    lambda: Vec<F>,
    edges: Vec<Edge<F>>,
    worker_edges: Vec<Vec<usize>>,
    type_edges: Vec<Vec<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

impl<F: Scalar> Instance<F> {
    /// Builds an instance from index-based parts.
    ///
    /// Only structural problems are errors here (duplicate ids, out-of-range
    /// indices, duplicate edges); value-level problems such as non-positive
    /// rates or a type with no qualified worker are reported by
    /// [`validate_instance`] so that diagnostic tooling can see them.
    pub fn new(
        workers: Vec<String>,
        task_types: Vec<String>,
        lambda: Vec<F>,
        edges: Vec<(usize, usize, F)>,
    ) -> Result<Self, ModelError> {
        let mut seen = HashMap::new();
        for (idx, w) in workers.iter().enumerate() {
            if seen.insert(w.clone(), idx).is_some() {
                return Err(ModelError::DuplicateWorker(w.clone()));
            }
        }
        seen.clear();
        for (idx, t) in task_types.iter().enumerate() {
            if seen.insert(t.clone(), idx).is_some() {
                return Err(ModelError::DuplicateTaskType(t.clone()));
            }
        }
        if lambda.len() != task_types.len() {
            return Err(ModelError::BadField("lambda"));
        }
        let mut inst = Instance {
            worker_edges: vec![Vec::new(); workers.len()],
            type_edges: vec![Vec::new(); task_types.len()],
            workers,
            task_types,
            lambda,
            edges: Vec::with_capacity(edges.len()),
            edge_lookup: HashMap::with_capacity(edges.len()),
        };
        for (worker, task_type, mu) in edges {
            if worker >= inst.workers.len() {
                return Err(ModelError::WorkerIndexOutOfRange(worker));
            }
            if task_type >= inst.task_types.len() {
                return Err(ModelError::TypeIndexOutOfRange(task_type));
            }
            let edge_idx = inst.edges.len();
            if inst.edge_lookup.insert((worker, task_type), edge_idx).is_some() {
                return Err(ModelError::DuplicateEdge(
                    inst.workers[worker].clone(),
                    inst.task_types[task_type].clone(),
                ));
            }
            inst.edges.push(Edge { worker, task_type, mu });
            inst.worker_edges[worker].push(edge_idx);
            inst.type_edges[task_type].push(edge_idx);
        }
        Ok(inst)
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn n_types(&self) -> usize {
        self.task_types.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn workers(&self) -> &[String] {
        &self.workers
    }

    pub fn task_types(&self) -> &[String] {
        &self.task_types
    }

    pub fn edges(&self) -> &[Edge<F>] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge<F> {
        &self.edges[e]
    }

    /// Arrival rate of task type `j`.
    pub fn lambda(&self, j: usize) -> F {
        self.lambda[j]
    }

    pub fn lambdas(&self) -> &[F] {
        &self.lambda
    }

    /// Edge indices incident to worker `i`, in insertion order.
    pub fn worker_edges(&self, i: usize) -> &[usize] {
        &self.worker_edges[i]
    }

    /// Edge indices incident to task type `j`, in insertion order.
    pub fn type_edges(&self, j: usize) -> &[usize] {
        &self.type_edges[j]
    }

    pub fn edge_index(&self, worker: usize, task_type: usize) -> Option<usize> {
        self.edge_lookup.get(&(worker, task_type)).copied()
    }

    pub fn worker_index(&self, name: &str) -> Option<usize> {
        self.workers.iter().position(|w| w == name)
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.task_types.iter().position(|t| t == name)
    }

    /// Parses the instance file format: a JSON document with `workers`,
    /// `task_types`, `lambda` (map type -> rate) and `mu` (map
    /// `"worker|type"` -> rate; a missing key means the edge is absent).
    /// Edge order is the key order of `mu` in the document.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc: Value = serde_json::from_str(text)?;
        let obj = doc.as_object().ok_or(ModelError::BadField("document"))?;
        let workers: Vec<String> = as_string_array(obj.get("workers"), "workers")?;
        let task_types: Vec<String> = as_string_array(obj.get("task_types"), "task_types")?;

        let lambda_map = obj
            .get("lambda")
            .and_then(Value::as_object)
            .ok_or(ModelError::BadField("lambda"))?;
        for name in lambda_map.keys() {
            if !task_types.iter().any(|t| t == name) {
                return Err(ModelError::UnknownTaskType(name.clone()));
            }
        }
        let mut lambda = Vec::with_capacity(task_types.len());
        for t in &task_types {
            let v = lambda_map
                .get(t)
                .and_then(Value::as_f64)
                .ok_or(ModelError::BadField("lambda"))?;
            lambda.push(F::of(v));
        }

        let mu_map = obj
            .get("mu")
            .and_then(Value::as_object)
            .ok_or(ModelError::BadField("mu"))?;
        let mut edges = Vec::with_capacity(mu_map.len());
        for (key, v) in mu_map {
            let (w, t) = key
                .split_once('|')
                .ok_or_else(|| ModelError::BadEdgeKey(key.clone()))?;
            let wi = workers
                .iter()
                .position(|x| x == w)
                .ok_or_else(|| ModelError::UnknownWorker(w.to_string()))?;
            let ti = task_types
                .iter()
                .position(|x| x == t)
                .ok_or_else(|| ModelError::UnknownTaskType(t.to_string()))?;
            let mu = v.as_f64().ok_or(ModelError::BadField("mu"))?;
            edges.push((wi, ti, F::of(mu)));
        }
        Instance::new(workers, task_types, lambda, edges)
    }

    /// Serializes back to the instance file format.
    pub fn to_json_string(&self) -> String {
        let mut lambda = Map::new();
        for (j, t) in self.task_types.iter().enumerate() {
            lambda.insert(t.clone(), json!(self.lambda[j].to_f64().unwrap()));
        }
        let mut mu = Map::new();
        for e in &self.edges {
            let mut key = String::new();
            let _ = write!(
                key,
                "{}|{}",
                self.workers[e.worker], self.task_types[e.task_type]
            );
            mu.insert(key, json!(e.mu.to_f64().unwrap()));
        }
        let doc = json!({
            "workers": self.workers,
            "task_types": self.task_types,
            "lambda": lambda,
            "mu": mu,
        });
        serde_json::to_string_pretty(&doc).expect("instance serialization cannot fail")
    }

    /// Replaces task type `j` by `k` copies, each with arrival rate
    /// `lambda[j] / k`, the same neighbor set and the same service rates.
    /// The copies sit where `j` sat, named `<j>#1 .. <j>#k`. The optimal
    /// values of both minimax programs are invariant under this transform.
    pub fn split_task_type(&self, j: usize, k: usize) -> Result<Self, ModelError> {
        if j >= self.task_types.len() {
            return Err(ModelError::TypeIndexOutOfRange(j));
        }
        if k < 2 {
            return Err(ModelError::BadSplitFactor(k));
        }
        let mut task_types = Vec::with_capacity(self.task_types.len() + k - 1);
        let mut lambda = Vec::with_capacity(task_types.capacity());
        // Maps an (old type, copy) pair to the new type index.
        let new_type = |old: usize, copy: usize| -> usize {
            if old < j {
                old
            } else if old == j {
                j + copy
            } else {
                old + k - 1
            }
        };
        let share = self.lambda[j] / F::of(k as f64);
        for (t, name) in self.task_types.iter().enumerate() {
            if t == j {
                for copy in 1..=k {
                    task_types.push(format!("{name}#{copy}"));
                    lambda.push(share);
                }
            } else {
                task_types.push(name.clone());
                lambda.push(self.lambda[t]);
            }
        }
        let mut edges = Vec::with_capacity(self.edges.len() + (k - 1) * self.type_edges[j].len());
        for e in &self.edges {
            if e.task_type == j {
                for copy in 0..k {
                    edges.push((e.worker, new_type(j, copy), e.mu));
                }
            } else {
                edges.push((e.worker, new_type(e.task_type, 0), e.mu));
            }
        }
        Instance::new(self.workers.clone(), task_types, lambda, edges)
    }

    /// The relaxed instance where every edge rate of worker `i` is replaced
    /// by `max_{j ~ i} mu[i][j]`. Its kappa is 1 by construction.
    pub fn uniform_mu_relaxation(&self) -> Self {
        let mut relaxed = self.clone();
        for edge_ids in &self.worker_edges {
            let Some(max_mu) = edge_ids
                .iter()
                .map(|&e| self.edges[e].mu)
                .fold(None, |acc: Option<F>, mu| {
                    Some(acc.map_or(mu, |a| a.max(mu)))
                })
            else {
                continue;
            };
            for &e in edge_ids {
                relaxed.edges[e].mu = max_mu;
            }
        }
        relaxed
    }
}

fn as_string_array(v: Option<&Value>, field: &'static str) -> Result<Vec<String>, ModelError> {
    v.and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|it| it.as_str().map(str::to_string).ok_or(ModelError::BadField(field)))
                .collect()
        })
        .ok_or(ModelError::BadField(field))?
}

/// Maximum pairwise ratio of service rates on any single worker; 1 when
/// every worker serves all its types at one rate (and for workers with a
/// single neighbor).
pub fn kappa<F: Scalar>(inst: &Instance<F>) -> F {
    let mut kap = F::one();
    for i in 0..inst.n_workers() {
        let edge_ids = inst.worker_edges(i);
        if edge_ids.len() < 2 {
            continue;
        }
        let mut lo = F::infinity();
        let mut hi = F::zero();
        for &e in edge_ids {
            let mu = inst.edge(e).mu;
            lo = lo.min(mu);
            hi = hi.max(mu);
        }
        kap = kap.max(hi / lo);
    }
    kap
}

/// Checks the value-level invariants and returns one human-readable line per
/// violation; an empty list means the instance is valid.
pub fn validate_instance<F: Scalar>(inst: &Instance<F>) -> Vec<String> {
    let mut violations = Vec::new();
    for (j, name) in inst.task_types().iter().enumerate() {
        if inst.type_edges(j).is_empty() {
            violations.push(format!("task type `{name}` has no feasible worker"));
        }
        if inst.lambda(j) <= F::zero() {
            violations.push(format!(
                "arrival rate must be positive: task type `{name}` has lambda = {}",
                inst.lambda(j)
            ));
        }
    }
    for e in inst.edges() {
        if e.mu <= F::zero() {
            violations.push(format!(
                "service rate must be positive: edge `{}|{}` has mu = {}",
                inst.workers()[e.worker],
                inst.task_types()[e.task_type],
                e.mu
            ));
        }
    }
    violations
}

/// Assignment fractions, one entry per instance edge (same order).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrix<F> {
    x: Vec<F>,
}

impl<F: Scalar> PolicyMatrix<F> {
    pub fn new(x: Vec<F>) -> Self {
        PolicyMatrix { x }
    }

    /// The policy that splits every type uniformly across its neighbors.
    pub fn uniform(inst: &Instance<F>) -> Self {
        let mut x = vec![F::zero(); inst.n_edges()];
        for j in 0..inst.n_types() {
            let deg = inst.type_edges(j).len();
            if deg == 0 {
                continue;
            }
            let share = F::one() / F::of(deg as f64);
            for &e in inst.type_edges(j) {
                x[e] = share;
            }
        }
        PolicyMatrix { x }
    }

    /// Builds a policy from a `"worker|type" -> fraction` map; edges absent
    /// from the map get 0.
    pub fn from_edge_map(
        inst: &Instance<F>,
        map: &HashMap<(usize, usize), F>,
    ) -> Result<Self, ModelError> {
        let mut x = vec![F::zero(); inst.n_edges()];
        for (&(w, t), &v) in map {
            let e = inst
                .edge_index(w, t)
                .ok_or(ModelError::WorkerIndexOutOfRange(w))?;
            x[e] = v;
        }
        Ok(PolicyMatrix { x })
    }

    pub fn values(&self) -> &[F] {
        &self.x
    }

    pub fn get(&self, e: usize) -> F {
        self.x[e]
    }

    /// JSON value keyed `"worker|type"` for reporting.
    pub fn to_edge_map(&self, inst: &Instance<F>) -> Value {
        let mut map = Map::new();
        for (e, edge) in inst.edges().iter().enumerate() {
            map.insert(
                format!(
                    "{}|{}",
                    inst.workers()[edge.worker],
                    inst.task_types()[edge.task_type]
                ),
                json!(self.x[e].to_f64().unwrap()),
            );
        }
        Value::Object(map)
    }

    /// Box and per-type distribution violations, with `eps` slack on the
    /// distribution constraint.
    pub fn distribution_violations(&self, inst: &Instance<F>, eps: F) -> Vec<String> {
        let mut violations = Vec::new();
        if self.x.len() != inst.n_edges() {
            violations.push(format!(
                "policy has {} entries, instance has {} edges",
                self.x.len(),
                inst.n_edges()
            ));
            return violations;
        }
        for (e, edge) in inst.edges().iter().enumerate() {
            if self.x[e] < F::zero() || self.x[e] > F::one() {
                violations.push(format!(
                    "x[{}|{}] = {} outside [0, 1]",
                    inst.workers()[edge.worker],
                    inst.task_types()[edge.task_type],
                    self.x[e]
                ));
            }
        }
        for (j, name) in inst.task_types().iter().enumerate() {
            let total: F = inst.type_edges(j).iter().map(|&e| self.x[e]).sum();
            if (total - F::one()).abs() > eps {
                violations.push(format!(
                    "assignment fractions of task type `{name}` sum to {total}, expected 1"
                ));
            }
        }
        violations
    }
}

/// Closed-form per-worker and per-type queueing quantities for one policy.
#[derive(Debug, Clone)]
pub struct DerivedRates<F> {
    /// Arrival rate on each worker's virtual queue.
    pub lambda_i: Vec<F>,
    /// Mean service time of each worker's queue (hyperexponential mixture).
    pub s_i: Vec<F>,
    /// Workload (long-run busy fraction) of each worker.
    pub rho_i: Vec<F>,
    /// Expected queue waiting time on each worker; `+inf` when unstable.
    pub w_i: Vec<F>,
    /// Expected absolute waiting time of each task type.
    pub w_j: Vec<F>,
    /// Expected relative (dimensionless) waiting time of each task type.
    pub wbar_j: Vec<F>,
}

/// Evaluates every closed-form quantity for `x` on `inst`.
///
/// Workers at or beyond the stability threshold get `w_i = +inf`; the
/// sentinel propagates into `w_j`/`wbar_j` only through edges that actually
/// carry load (`x > 0`), so an unstable worker nobody routes to is harmless.
pub fn derived_rates<F: Scalar>(
    inst: &Instance<F>,
    x: &PolicyMatrix<F>,
) -> Result<DerivedRates<F>, ModelError> {
    let violations = x.distribution_violations(inst, F::of(FEASIBILITY_EPS));
    if !violations.is_empty() {
        return Err(ModelError::InfeasiblePolicy(violations));
    }
    Ok(derived_rates_unchecked(inst, x))
}

/// Same as [`derived_rates`] but skips the precondition check. Used by the
/// PT local search whose iterates are feasible by construction.
pub fn derived_rates_unchecked<F: Scalar>(
    inst: &Instance<F>,
    x: &PolicyMatrix<F>,
) -> DerivedRates<F> {
    let n_workers = inst.n_workers();
    let mut lambda_i = vec![F::zero(); n_workers];
    let mut s_i = vec![F::zero(); n_workers];
    let mut rho_i = vec![F::zero(); n_workers];
    let mut w_i = vec![F::zero(); n_workers];

    for i in 0..n_workers {
        let mut lam = F::zero();
        let mut load = F::zero();
        let mut second_moment_sum = F::zero();
        for &e in inst.worker_edges(i) {
            let edge = inst.edge(e);
            let flow = x.get(e) * inst.lambda(edge.task_type);
            lam += flow;
            load += flow / edge.mu;
            second_moment_sum += flow / (edge.mu * edge.mu);
        }
        lambda_i[i] = lam;
        rho_i[i] = load;
        if lam > F::zero() {
            // Mean of the hyperexponential service mixture on this queue.
            let mut mean = F::zero();
            for &e in inst.worker_edges(i) {
                let edge = inst.edge(e);
                mean += x.get(e) * inst.lambda(edge.task_type) / (lam * edge.mu);
            }
            s_i[i] = mean;
        }
        w_i[i] = if load >= F::one() - F::of(STABILITY_EPS) {
            F::infinity()
        } else {
            // Pollaczek-Khinchin mean waiting time of the M/G/1 queue.
            second_moment_sum / (F::one() - load)
        };
    }

    let n_types = inst.n_types();
    let mut w_j = vec![F::zero(); n_types];
    let mut wbar_j = vec![F::zero(); n_types];
    for j in 0..n_types {
        let mut abs = F::zero();
        let mut rel = F::zero();
        for &e in inst.type_edges(j) {
            let edge = inst.edge(e);
            let share = x.get(e);
            if share > F::zero() {
                abs += share * w_i[edge.worker];
                rel += share * edge.mu * w_i[edge.worker];
            }
        }
        w_j[j] = abs;
        wbar_j[j] = rel;
    }

    Ok::<_, ()>(DerivedRates {
        lambda_i,
        s_i,
        rho_i,
        w_i,
        w_j,
        wbar_j,
    })
    .unwrap()
}
