//! Command-line dispatch.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or unreadable/invalid
//! input files), 2 infeasible (no stable assignment, or a validation run
//! that found violations), 3 internal error. Results print as JSON to
//! stdout (`sweep` prints CSV); `--out` redirects the payload to a file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::model::{validate_instance, Instance, PolicyMatrix};
use crate::policies::{PolicyName, ProgramKind};
use crate::programs::approx_bound;
use crate::simulator::{run_simulation, Policy, SimMetrics};
use crate::solvers::{
    nonconvexity_witness, oracle_eta_s_subsets, oracle_eta_t_grid, solve_ps, solve_pt,
    SolveResult, SolveStatus, WitnessPoint, DEFAULT_PT_STARTS, DEFAULT_PT_TOL,
};

use super::{run_experiment, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser)]
#[command(
    name = "taskfair",
    version,
    about = "Minimax-fair task assignment: solvers, oracles, and a queueing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file against the model invariants.
    Validate { instance: PathBuf },
    /// Solve the max-workload program (exact LP).
    SolvePs {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the max-relative-wait program (multistart local search).
    SolvePt {
        instance: PathBuf,
        /// Random starts on top of the warm start.
        #[arg(long, default_value_t = DEFAULT_PT_STARTS)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative-improvement stopping tolerance.
        #[arg(long, default_value_t = DEFAULT_PT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal max workload by task-subset enumeration (uniform-rate instances).
    OracleSubsets {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive lattice search of the max-relative-wait objective.
    OracleGrid {
        instance: PathBuf,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case factor between the two programs' objectives.
    Bound {
        #[arg(long)]
        kappa: f64,
        #[arg(long = "eta-s")]
        eta_s: f64,
    },
    /// Search for midpoint convexity/concavity violations of the wait objective.
    Nonconvexity {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 41)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation and print its metrics.
    Simulate {
        instance: PathBuf,
        /// lp-random-pt|lp-random-ps|free-first-pt|free-first-ps|gtw|gwu
        #[arg(long)]
        policy: String,
        /// Simulated seconds.
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0.0)]
        warmup: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep experiment from a JSON config and emit CSV.
    Sweep {
        config: PathBuf,
        /// Overrides the config's output path; default is stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

/// Parses `argv` and runs the selected subcommand.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    Instance::from_json_str(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(payload: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, payload)
            .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{}", payload.trim_end_matches('\n'));
            Ok(())
        }
    }
}

fn solve_result_json(inst: &Instance<f64>, result: &SolveResult<f64>) -> serde_json::Value {
    json!({
        "status": result.status.as_str(),
        "objective": result.objective,
        "iterations": result.iterations,
        "starts_used": result.starts_used,
        "x": result.x.as_ref().map(|x| x.to_edge_map(inst)),
    })
}

fn witness_json(witness: &Option<WitnessPoint<f64>>) -> serde_json::Value {
    match witness {
        None => serde_json::Value::Null,
        Some(w) => json!({
            "a": [w.a.0, w.a.1],
            "b": [w.b.0, w.b.1],
            "midpoint": [w.midpoint.0, w.midpoint.1],
            "f_a": w.f_a,
            "f_b": w.f_b,
            "f_mid": w.f_mid,
            "margin": w.margin,
        }),
    }
}

fn metrics_json(inst: &Instance<f64>, metrics: &SimMetrics<f64>) -> serde_json::Value {
    let per_type: serde_json::Map<String, serde_json::Value> = inst
        .task_types()
        .iter()
        .zip(&metrics.per_type)
        .map(|(name, m)| {
            (
                name.clone(),
                json!({
                    "count": m.count,
                    "mean_abs_wait": m.mean_abs_wait,
                    "max_abs_wait": m.max_abs_wait,
                    "mean_rel_wait": m.mean_rel_wait,
                }),
            )
        })
        .collect();
    let per_worker: serde_json::Map<String, serde_json::Value> = inst
        .workers()
        .iter()
        .zip(&metrics.per_worker_busy)
        .map(|(name, &busy)| (name.clone(), json!(busy)))
        .collect();
    json!({
        "max_mean_abs_wait": metrics.max_mean_abs_wait,
        "max_mean_rel_wait": metrics.max_mean_rel_wait,
        "max_workload": metrics.max_workload,
        "total_arrivals": metrics.total_arrivals,
        "served": metrics.served,
        "censored": metrics.censored,
        "warmup_excluded": metrics.warmup_excluded,
        "per_type": per_type,
        "per_worker_busy": per_worker,
    })
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Validate { instance } => {
            let inst = load_instance(&instance)?;
            let violations = validate_instance(&inst);
            let valid = violations.is_empty();
            let payload = json!({ "valid": valid, "violations": violations });
            emit(&payload.to_string(), None)?;
            Ok(if valid { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::SolvePs { instance, out } => {
            let inst = load_instance(&instance)?;
            let result = solve_ps(&inst).map_err(|e| Failure::usage(e.to_string()))?;
            let code = match result.status {
                SolveStatus::Infeasible => EXIT_INFEASIBLE,
                _ => EXIT_OK,
            };
            emit(&solve_result_json(&inst, &result).to_string(), out.as_deref())?;
            Ok(code)
        }
        Command::SolvePt {
            instance,
            starts,
            seed,
            tol,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let result =
                solve_pt(&inst, starts, tol, seed).map_err(|e| Failure::usage(e.to_string()))?;
            let code = match result.status {
                SolveStatus::Infeasible => EXIT_INFEASIBLE,
                _ => EXIT_OK,
            };
            emit(&solve_result_json(&inst, &result).to_string(), out.as_deref())?;
            Ok(code)
        }
        Command::OracleSubsets { instance, out } => {
            let inst = load_instance(&instance)?;
            let result =
                oracle_eta_s_subsets(&inst).map_err(|e| Failure::usage(e.to_string()))?;
            let witness: Vec<&String> = result
                .witness
                .iter()
                .map(|&j| &inst.task_types()[j])
                .collect();
            let payload = json!({ "objective": result.objective, "witness": witness });
            emit(&payload.to_string(), out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::OracleGrid {
            instance,
            resolution,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let result = oracle_eta_t_grid(&inst, resolution)
                .map_err(|e| Failure::usage(e.to_string()))?;
            let payload = json!({
                "objective": result.objective,
                "allowance": result.allowance,
                "points_evaluated": result.points_evaluated,
                "x": result.x.to_edge_map(&inst),
            });
            emit(&payload.to_string(), out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Bound { kappa, eta_s } => {
            let value = approx_bound(kappa, eta_s).map_err(|e| Failure::usage(e.to_string()))?;
            emit(&json!(value).to_string(), None)?;
            Ok(EXIT_OK)
        }
        Command::Nonconvexity {
            p,
            q,
            resolution,
            out,
        } => {
            let report = nonconvexity_witness(p, q, resolution)
                .map_err(|e| Failure::usage(e.to_string()))?;
            let payload = json!({
                "p": report.p,
                "q": report.q,
                "points_sampled": report.points_sampled,
                "convexity_violation": witness_json(&report.convexity_violation),
                "concavity_violation": witness_json(&report.concavity_violation),
            });
            emit(&payload.to_string(), out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Simulate {
            instance,
            policy,
            horizon,
            warmup,
            seed,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let name: PolicyName = policy.parse().map_err(Failure::usage)?;
            let fractions = match name.needs_program() {
                None => None,
                Some(kind) => Some(offline_solution(&inst, kind, seed)?),
            };
            let sim_policy = match (name, &fractions) {
                (PolicyName::Gtw, _) => Policy::Gtw,
                (PolicyName::Gwu, _) => Policy::Gwu,
                (PolicyName::LpRandomPt | PolicyName::LpRandomPs, Some(x)) => Policy::LpRandom(x),
                (PolicyName::FreeFirstPt | PolicyName::FreeFirstPs, Some(x)) => {
                    Policy::FreeFirst(x)
                }
                _ => unreachable!("fraction-fed policies resolved above"),
            };
            let metrics = run_simulation(&inst, sim_policy, horizon, warmup, seed)
                .map_err(|e| Failure::usage(e.to_string()))?;
            emit(&metrics_json(&inst, &metrics).to_string(), out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json_str(&text)
                .map_err(|e| Failure::usage(e.to_string()))?;
            let table = run_experiment(&cfg).map_err(|e| Failure::internal(e.to_string()))?;
            let destination = out.or(cfg.output.clone());
            emit(&table.to_csv_string(), destination.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

/// Solves the program a policy feeds on; infeasibility is a user-visible
/// outcome, not an internal error.
fn offline_solution(
    inst: &Instance<f64>,
    kind: ProgramKind,
    seed: u64,
) -> Result<PolicyMatrix<f64>, Failure> {
    let result = match kind {
        ProgramKind::Ps => solve_ps(inst).map_err(|e| Failure::usage(e.to_string()))?,
        ProgramKind::Pt => solve_pt(inst, DEFAULT_PT_STARTS, DEFAULT_PT_TOL, seed)
            .map_err(|e| Failure::usage(e.to_string()))?,
    };
    match result.x {
        Some(x) => Ok(x),
        None => Err(Failure {
            code: EXIT_INFEASIBLE,
            message: "no stable assignment exists for this instance".into(),
        }),
    }
}
