//! Experiment orchestration: sweeps, replicated simulation, CSV output.
//!
//! A config names an instance source (file or generator), a set of online
//! policies, a simulation window, a replication count, a root seed and an
//! optional sweep axis. For every sweep point the harness materializes the
//! instance, solves both minimax programs once (offline phase), fans the
//! replications out, and emits one CSV row per replication plus an
//! `aggregate` pseudo-replication carrying means and 95% confidence-interval
//! half-widths. Everything is deterministic in the config: the simulation
//! seed of (sweep point, policy, replication) is a pure hash of the root
//! seed and those indices, so results do not depend on scheduling.

pub mod cli;
pub mod generator;
mod stats;

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, ModelError, PolicyMatrix};
use crate::policies::{PolicyName, ProgramKind};
use crate::rng::derive_seed;
use crate::simulator::{run_simulation, Policy, SimError, SimMetrics};
use crate::solvers::{
    solve_ps, solve_pt, SolverError, DEFAULT_PT_STARTS, DEFAULT_PT_TOL,
};

pub use generator::{generate_instance, EdgeRule, GeneratorSpec};
pub use stats::{ci95_halfwidth, mean};

/// Environment variable capping the replication fan-out worker count.
pub const THREADS_ENV: &str = "TASKFAIR_THREADS";

/// Seed-derivation tags for the non-simulation draws.
const INSTANCE_SEED_TAG: u64 = u64::MAX;
const PT_SOLVER_SEED_TAG: u64 = u64::MAX - 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    BadConfig(String),
    #[error("{0}")]
    InfeasibleInstance(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv parse: {0}")]
    Csv(String),
}

/// Where the instance comes from: `{"file": "path"}` or
/// `{"generator": {...}}` in the config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File { file: PathBuf },
    Generator { generator: GeneratorSpec },
}

/// The swept parameter, if any. Sweeps other than `none` need a generator
/// source, since they rewrite generator fields per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Sweep {
    Kappa { values: Vec<f64> },
    DailyLoad { values: Vec<f64> },
    Balance { vectors: Vec<Vec<f64>> },
    None,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::None
    }
}

fn default_warmup() -> f64 {
    0.0
}

/// One experiment: instance x policies x sweep x replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub instance: InstanceSource,
    pub policies: Vec<String>,
    /// Simulated seconds per replication.
    pub horizon: f64,
    /// Seconds discarded from metrics at the start of each replication.
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    pub replications: usize,
    pub root_seed: u64,
    #[serde(default)]
    pub sweep: Sweep,
    /// Optional CSV destination; callers may override.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::BadConfig(
                "replications must be at least 1".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(HarnessError::BadConfig("policies must be nonempty".into()));
        }
        for name in &self.policies {
            name.parse::<PolicyName>()
                .map_err(HarnessError::BadConfig)?;
        }
        if self.horizon <= 0.0 || self.warmup < 0.0 || self.warmup >= self.horizon {
            return Err(HarnessError::BadConfig(format!(
                "need 0 <= warmup < horizon, got warmup {} horizon {}",
                self.warmup, self.horizon
            )));
        }
        let sweep_needs_generator = !matches!(self.sweep, Sweep::None);
        if sweep_needs_generator && !matches!(self.instance, InstanceSource::Generator { .. }) {
            return Err(HarnessError::BadConfig(
                "sweeps rewrite generator fields; use a generator instance source".into(),
            ));
        }
        match &self.sweep {
            Sweep::Kappa { values } | Sweep::DailyLoad { values } => {
                if values.is_empty() {
                    return Err(HarnessError::BadConfig("sweep values are empty".into()));
                }
            }
            Sweep::Balance { vectors } => {
                if vectors.is_empty() {
                    return Err(HarnessError::BadConfig("sweep vectors are empty".into()));
                }
                for v in vectors {
                    let total: f64 = v.iter().sum();
                    if (total - 1.0).abs() > 1e-9 {
                        return Err(HarnessError::BadConfig(format!(
                            "balance vector sums to {total}, expected 1"
                        )));
                    }
                }
            }
            Sweep::None => {}
        }
        Ok(())
    }
}

/// One CSV row. Metric cells are empty for infeasible points; the ci_half_*
/// cells are filled only on `aggregate` rows with at least 2 replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_axis: String,
    pub sweep_value: String,
    pub policy: String,
    /// Replication index, `aggregate`, or `infeasible`.
    pub replication: String,
    pub max_mean_abs_wait: Option<f64>,
    pub max_mean_rel_wait: Option<f64>,
    pub max_workload: Option<f64>,
    pub censored: Option<f64>,
    pub opt_ps: Option<f64>,
    pub opt_pt_local: Option<f64>,
    pub ci_half_abs_wait: Option<f64>,
    pub ci_half_rel_wait: Option<f64>,
    pub ci_half_workload: Option<f64>,
    pub ci_half_censored: Option<f64>,
}

pub const CSV_HEADER: &str = "sweep_axis,sweep_value,policy,replication,max_mean_abs_wait,max_mean_rel_wait,max_workload,censored,opt_ps,opt_pt_local,ci_half_abs_wait,ci_half_rel_wait,ci_half_workload,ci_half_censored";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_cell(text: &str, line: usize) -> Result<Option<f64>, HarnessError> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>()
        .map(Some)
        .map_err(|e| HarnessError::Csv(format!("line {line}: bad number `{text}`: {e}")))
}

impl ResultTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                row.sweep_axis,
                row.sweep_value,
                row.policy,
                row.replication,
                cell(row.max_mean_abs_wait),
                cell(row.max_mean_rel_wait),
                cell(row.max_workload),
                cell(row.censored),
                cell(row.opt_ps),
                cell(row.opt_pt_local),
                cell(row.ci_half_abs_wait),
                cell(row.ci_half_rel_wait),
                cell(row.ci_half_workload),
                cell(row.ci_half_censored),
            ));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            other => {
                return Err(HarnessError::Csv(format!(
                    "unexpected header: {:?}",
                    other.map(|(_, h)| h)
                )))
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 14 {
                return Err(HarnessError::Csv(format!(
                    "line {idx}: expected 14 fields, got {}",
                    fields.len()
                )));
            }
            rows.push(ResultRow {
                sweep_axis: fields[0].to_string(),
                sweep_value: fields[1].to_string(),
                policy: fields[2].to_string(),
                replication: fields[3].to_string(),
                max_mean_abs_wait: parse_cell(fields[4], idx)?,
                max_mean_rel_wait: parse_cell(fields[5], idx)?,
                max_workload: parse_cell(fields[6], idx)?,
                censored: parse_cell(fields[7], idx)?,
                opt_ps: parse_cell(fields[8], idx)?,
                opt_pt_local: parse_cell(fields[9], idx)?,
                ci_half_abs_wait: parse_cell(fields[10], idx)?,
                ci_half_rel_wait: parse_cell(fields[11], idx)?,
                ci_half_workload: parse_cell(fields[12], idx)?,
                ci_half_censored: parse_cell(fields[13], idx)?,
            });
        }
        Ok(ResultTable { rows })
    }
}

/// One sweep point: its label and the instance spec or file it resolves to.
struct SweepPoint {
    axis: &'static str,
    value: String,
    source: InstanceSource,
}

fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut points = Vec::new();
    match &cfg.sweep {
        Sweep::None => points.push(SweepPoint {
            axis: "none",
            value: String::new(),
            source: cfg.instance.clone(),
        }),
        Sweep::Kappa { values } => {
            for &v in values {
                let InstanceSource::Generator { generator } = &cfg.instance else {
                    unreachable!("validated: sweeps need a generator source");
                };
                let mut spec = generator.clone();
                spec.target_kappa = v;
                points.push(SweepPoint {
                    axis: "kappa",
                    value: v.to_string(),
                    source: InstanceSource::Generator { generator: spec },
                });
            }
        }
        Sweep::DailyLoad { values } => {
            for &v in values {
                let InstanceSource::Generator { generator } = &cfg.instance else {
                    unreachable!("validated: sweeps need a generator source");
                };
                let mut spec = generator.clone();
                spec.daily_arrivals = v;
                points.push(SweepPoint {
                    axis: "daily_load",
                    value: v.to_string(),
                    source: InstanceSource::Generator { generator: spec },
                });
            }
        }
        Sweep::Balance { vectors } => {
            for v in vectors {
                let InstanceSource::Generator { generator } = &cfg.instance else {
                    unreachable!("validated: sweeps need a generator source");
                };
                let mut spec = generator.clone();
                spec.balance = v.clone();
                let label = v
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join("/");
                points.push(SweepPoint {
                    axis: "balance",
                    value: label,
                    source: InstanceSource::Generator { generator: spec },
                });
            }
        }
    }
    Ok(points)
}

fn load_instance(source: &InstanceSource, root_seed: u64) -> Result<Instance<f64>, HarnessError> {
    match source {
        InstanceSource::File { file } => {
            let text = std::fs::read_to_string(file)?;
            Ok(Instance::from_json_str(&text)?)
        }
        InstanceSource::Generator { generator } => {
            // One fixed generation seed per experiment, so sweep points
            // share their topology and differ only in the swept field.
            generate_instance(generator, derive_seed(root_seed, &[INSTANCE_SEED_TAG]))
        }
    }
}

/// Runs the whole experiment and returns the result table. Replications run
/// in parallel (capped by the `TASKFAIR_THREADS` environment variable); row
/// order and values are independent of the parallelism.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    cfg.validate()?;
    let pool = thread_pool()?;

    let policies: Vec<PolicyName> = cfg
        .policies
        .iter()
        .map(|p| p.parse::<PolicyName>().expect("validated"))
        .collect();

    let mut table = ResultTable::default();
    for (point_idx, point) in sweep_points(cfg)?.into_iter().enumerate() {
        let instance = match load_instance(&point.source, cfg.root_seed) {
            Ok(inst) => inst,
            Err(HarnessError::InfeasibleInstance(_)) => {
                for policy in &policies {
                    table.rows.push(infeasible_row(&point, policy.as_str()));
                }
                continue;
            }
            Err(other) => return Err(other),
        };

        // Offline phase, once per sweep point.
        let ps = solve_ps(&instance)?;
        let opt_ps = ps.objective;
        let pt = solve_pt(
            &instance,
            DEFAULT_PT_STARTS,
            DEFAULT_PT_TOL,
            derive_seed(cfg.root_seed, &[PT_SOLVER_SEED_TAG, point_idx as u64]),
        )?;
        let opt_pt = pt.objective;
        let mut solutions: HashMap<ProgramKind, PolicyMatrix<f64>> = HashMap::new();
        if let Some(x) = ps.x {
            solutions.insert(ProgramKind::Ps, x);
        }
        if let Some(x) = pt.x {
            solutions.insert(ProgramKind::Pt, x);
        }

        for (policy_idx, &policy) in policies.iter().enumerate() {
            let fractions = match policy.needs_program() {
                Some(kind) => match solutions.get(&kind) {
                    Some(x) => Some(x),
                    None => {
                        // The program this policy feeds on has no solution.
                        table.rows.push(infeasible_row(&point, policy.as_str()));
                        continue;
                    }
                },
                None => None,
            };

            let metrics: Vec<SimMetrics<f64>> = pool.install(|| {
                (0..cfg.replications)
                    .into_par_iter()
                    .map(|rep| {
                        let seed = derive_seed(
                            cfg.root_seed,
                            &[point_idx as u64, policy_idx as u64, rep as u64],
                        );
                        let sim_policy = match (policy, fractions) {
                            (PolicyName::Gtw, _) => Policy::Gtw,
                            (PolicyName::Gwu, _) => Policy::Gwu,
                            (PolicyName::LpRandomPt | PolicyName::LpRandomPs, Some(x)) => {
                                Policy::LpRandom(x)
                            }
                            (PolicyName::FreeFirstPt | PolicyName::FreeFirstPs, Some(x)) => {
                                Policy::FreeFirst(x)
                            }
                            _ => unreachable!("fraction-fed policies checked above"),
                        };
                        run_simulation(&instance, sim_policy, cfg.horizon, cfg.warmup, seed)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })?;

            let abs: Vec<f64> = metrics.iter().map(|m| m.max_mean_abs_wait).collect();
            let rel: Vec<f64> = metrics.iter().map(|m| m.max_mean_rel_wait).collect();
            let load: Vec<f64> = metrics.iter().map(|m| m.max_workload).collect();
            let censored: Vec<f64> = metrics.iter().map(|m| m.censored as f64).collect();

            for rep in 0..cfg.replications {
                table.rows.push(ResultRow {
                    sweep_axis: point.axis.to_string(),
                    sweep_value: point.value.clone(),
                    policy: policy.as_str().to_string(),
                    replication: rep.to_string(),
                    max_mean_abs_wait: Some(abs[rep]),
                    max_mean_rel_wait: Some(rel[rep]),
                    max_workload: Some(load[rep]),
                    censored: Some(censored[rep]),
                    opt_ps,
                    opt_pt_local: opt_pt,
                    ci_half_abs_wait: None,
                    ci_half_rel_wait: None,
                    ci_half_workload: None,
                    ci_half_censored: None,
                });
            }
            table.rows.push(ResultRow {
                sweep_axis: point.axis.to_string(),
                sweep_value: point.value.clone(),
                policy: policy.as_str().to_string(),
                replication: "aggregate".to_string(),
                max_mean_abs_wait: Some(mean(&abs)),
                max_mean_rel_wait: Some(mean(&rel)),
                max_workload: Some(mean(&load)),
                censored: Some(mean(&censored)),
                opt_ps,
                opt_pt_local: opt_pt,
                ci_half_abs_wait: ci95_halfwidth(&abs),
                ci_half_rel_wait: ci95_halfwidth(&rel),
                ci_half_workload: ci95_halfwidth(&load),
                ci_half_censored: ci95_halfwidth(&censored),
            });
        }
    }
    Ok(table)
}

fn infeasible_row(point: &SweepPoint, policy: &str) -> ResultRow {
    ResultRow {
        sweep_axis: point.axis.to_string(),
        sweep_value: point.value.clone(),
        policy: policy.to_string(),
        replication: "infeasible".to_string(),
        max_mean_abs_wait: None,
        max_mean_rel_wait: None,
        max_workload: None,
        censored: None,
        opt_ps: None,
        opt_pt_local: None,
        ci_half_abs_wait: None,
        ci_half_rel_wait: None,
        ci_half_workload: None,
        ci_half_censored: None,
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.parse().map_err(|_| {
            HarnessError::BadConfig(format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))
        })?;
        if n == 0 {
            return Err(HarnessError::BadConfig(format!(
                "{THREADS_ENV} must be a positive integer, got 0"
            )));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::BadConfig(format!("thread pool: {e}")))
}
