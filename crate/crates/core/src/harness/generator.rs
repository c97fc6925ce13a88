//! Synthetic instance generation.
//!
//! Mirrors the duration model of the experiments: each worker gets a base
//! mean service time drawn uniformly from a configured range (seconds), and
//! its per-type means are spread around that base so the fastest and
//! slowest types are in exact ratio `target_kappa` — first neighbor at
//! `(2 k x) / (1 + k)`, last at `2x` minus that, middles uniform in
//! between, single-type workers at `x` flat. Arrival rates come from a
//! daily task load split by a balance vector.

use serde::{Deserialize, Serialize};

use crate::model::{validate_instance, Instance};
use crate::rng::{stream_rng, GENERATOR};
use crate::solvers::{solve_ps, SolveStatus};
use crate::Scalar;

use super::HarnessError;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// How edges of the bipartite graph are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EdgeRule {
    /// Every worker/type pair qualifies independently with this probability;
    /// a type left with no neighbor gets one seeded at random.
    Density { probability: f64 },
    /// A worker qualifies for a type iff its candidate mean duration is at
    /// most the type's median over all workers, i.e. the faster half.
    MedianThreshold,
}

/// Recipe for a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_workers: usize,
    pub n_task_types: usize,
    /// Exact ratio between a worker's slowest and fastest mean durations.
    pub target_kappa: f64,
    /// Range the per-worker base mean duration (seconds) is drawn from.
    #[serde(default = "default_mean_service_range")]
    pub mean_service_range: (f64, f64),
    #[serde(default = "default_edge_rule")]
    pub edge_rule: EdgeRule,
    /// Expected task arrivals per day, across all types.
    pub daily_arrivals: f64,
    /// Fraction of the daily load per task type; must sum to 1.
    pub balance: Vec<f64>,
}

fn default_mean_service_range() -> (f64, f64) {
    (3.33, 8.0)
}

fn default_edge_rule() -> EdgeRule {
    EdgeRule::Density { probability: 0.6 }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_workers == 0 || self.n_task_types == 0 {
            return Err(HarnessError::BadConfig(
                "generator needs at least one worker and one task type".into(),
            ));
        }
        if self.target_kappa < 1.0 {
            return Err(HarnessError::BadConfig(format!(
                "target_kappa must be at least 1, got {}",
                self.target_kappa
            )));
        }
        let (lo, hi) = self.mean_service_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(HarnessError::BadConfig(format!(
                "mean_service_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if let EdgeRule::Density { probability } = self.edge_rule {
            if !(0.0..=1.0).contains(&probability) {
                return Err(HarnessError::BadConfig(format!(
                    "edge density must lie in [0, 1], got {probability}"
                )));
            }
        }
        if self.daily_arrivals <= 0.0 {
            return Err(HarnessError::BadConfig(
                "daily_arrivals must be positive".into(),
            ));
        }
        if self.balance.len() != self.n_task_types {
            return Err(HarnessError::BadConfig(format!(
                "balance has {} entries for {} task types",
                self.balance.len(),
                self.n_task_types
            )));
        }
        let total: f64 = self.balance.iter().sum();
        if self.balance.iter().any(|&b| b <= 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(HarnessError::BadConfig(format!(
                "balance must be positive and sum to 1, sums to {total}"
            )));
        }
        Ok(())
    }
}

/// Mean durations a worker spreads over `count` types: first/last in exact
/// ratio `kappa`, middles drawn uniformly in between.
fn spread_means<F: Scalar>(
    base: F,
    kappa: F,
    count: usize,
    mut middle_draw: impl FnMut() -> F,
) -> Vec<F> {
    if count == 1 {
        return vec![base];
    }
    let two = F::of(2.0);
    let first = two * kappa * base / (F::one() + kappa);
    let last = two * base - first;
    let mut means = Vec::with_capacity(count);
    means.push(first);
    for _ in 1..count - 1 {
        let t = middle_draw();
        means.push(last + t * (first - last));
    }
    means.push(last);
    means
}

/// Generates an instance from the spec; fails if no stable assignment
/// exists at the requested load.
pub fn generate_instance<F: Scalar>(
    spec: &GeneratorSpec,
    seed: u64,
) -> Result<Instance<F>, HarnessError> {
    spec.validate()?;
    let mut rng = stream_rng(seed, GENERATOR);
    let (lo, hi) = spec.mean_service_range;
    let kappa = F::of(spec.target_kappa);

    let base_means: Vec<F> = (0..spec.n_workers)
        .map(|_| F::of(lo) + F::sample_unit(&mut rng) * F::of(hi - lo))
        .collect();

    // Candidate means over the full bipartite matrix decide the edges.
    let candidate: Vec<Vec<F>> = base_means
        .iter()
        .map(|&base| {
            spread_means(base, kappa, spec.n_task_types, || F::sample_unit(&mut rng))
        })
        .collect();

    let mut adjacency = vec![vec![false; spec.n_task_types]; spec.n_workers];
    match spec.edge_rule {
        EdgeRule::Density { probability } => {
            let p = F::of(probability);
            for row in adjacency.iter_mut() {
                for cell in row.iter_mut() {
                    *cell = F::sample_unit(&mut rng) < p;
                }
            }
            for j in 0..spec.n_task_types {
                if (0..spec.n_workers).all(|i| !adjacency[i][j]) {
                    let pick = (F::sample_unit(&mut rng)
                        * F::of(spec.n_workers as f64))
                    .to_f64()
                    .unwrap() as usize;
                    adjacency[pick.min(spec.n_workers - 1)][j] = true;
                }
            }
        }
        EdgeRule::MedianThreshold => {
            for j in 0..spec.n_task_types {
                let mut column: Vec<F> = (0..spec.n_workers).map(|i| candidate[i][j]).collect();
                column.sort_by(|a, b| a.partial_cmp(b).expect("means are finite"));
                let median = column[(spec.n_workers - 1) / 2];
                for i in 0..spec.n_workers {
                    adjacency[i][j] = candidate[i][j] <= median;
                }
            }
        }
    }

    // Final means are re-spread over each worker's actual neighbor set so
    // the fastest/slowest ratio hits the target exactly.
    let mut edges: Vec<(usize, usize, F)> = Vec::new();
    for i in 0..spec.n_workers {
        let neighbors: Vec<usize> = (0..spec.n_task_types)
            .filter(|&j| adjacency[i][j])
            .collect();
        if neighbors.is_empty() {
            continue;
        }
        let means = spread_means(base_means[i], kappa, neighbors.len(), || {
            F::sample_unit(&mut rng)
        });
        for (&j, &mean) in neighbors.iter().zip(&means) {
            edges.push((i, j, mean.recip()));
        }
    }
    // Worker-major above; instances store edges in this insertion order.

    let lambda: Vec<F> = spec
        .balance
        .iter()
        .map(|&b| F::of(spec.daily_arrivals * b / SECONDS_PER_DAY))
        .collect();

    let inst = Instance::new(
        (1..=spec.n_workers).map(|i| format!("w{i}")).collect(),
        (1..=spec.n_task_types).map(|j| format!("t{j}")).collect(),
        lambda,
        edges,
    )?;

    let violations = validate_instance(&inst);
    if !violations.is_empty() {
        return Err(HarnessError::BadConfig(format!(
            "generated instance is invalid: {}",
            violations.join("; ")
        )));
    }
    let ps = solve_ps(&inst)?;
    if ps.status != SolveStatus::Optimal {
        return Err(HarnessError::InfeasibleInstance(format!(
            "no stable assignment exists at {} daily arrivals; lower the load or add workers",
            spec.daily_arrivals
        )));
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::kappa;
    use approx::assert_relative_eq;

    fn base_spec() -> GeneratorSpec {
        GeneratorSpec {
            n_workers: 5,
            n_task_types: 4,
            target_kappa: 1.0,
            mean_service_range: (3.33, 8.0),
            edge_rule: EdgeRule::Density { probability: 0.6 },
            daily_arrivals: 40_000.0,
            balance: vec![0.25; 4],
        }
    }

    #[test]
    fn kappa_one_collapses_the_spread() {
        let inst: Instance<f64> = generate_instance(&base_spec(), 5).unwrap();
        assert_relative_eq!(kappa(&inst), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn kappa_formula_first_and_last_means() {
        // base 6, kappa 2: first mean (2*2*6)/3 = 8, last 12 - 8 = 4.
        let means = spread_means(6.0f64, 2.0, 2, || unreachable!("no middles for two types"));
        assert_relative_eq!(means[0], 8.0);
        assert_relative_eq!(means[1], 4.0);
        // Rate ratio is exactly kappa.
        assert_relative_eq!(means[0] / means[1], 2.0);
    }

    #[test]
    fn target_kappa_is_hit_exactly() {
        let mut spec = base_spec();
        spec.target_kappa = 2.5;
        spec.edge_rule = EdgeRule::MedianThreshold;
        let inst: Instance<f64> = generate_instance(&spec, 11).unwrap();
        assert_relative_eq!(kappa(&inst), 2.5, max_relative = 1e-12);
    }

    #[test]
    fn arrival_rates_convert_from_daily_load() {
        let mut spec = base_spec();
        spec.n_workers = 14; // enough capacity for the heavy load below
        spec.daily_arrivals = 120_000.0;
        let inst: Instance<f64> = generate_instance(&spec, 7).unwrap();
        for j in 0..4 {
            assert_relative_eq!(inst.lambda(j), 30_000.0 / 86_400.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn overload_is_reported_with_advice() {
        let mut spec = base_spec();
        spec.daily_arrivals = 10_000_000.0;
        let err = generate_instance::<f64>(&spec, 3).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("lower the load"), "{message}");
    }

    #[test]
    fn generation_is_reproducible() {
        let a: Instance<f64> = generate_instance(&base_spec(), 9).unwrap();
        let b: Instance<f64> = generate_instance(&base_spec(), 9).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = base_spec();
        spec.balance = vec![0.5; 4];
        assert!(matches!(
            generate_instance::<f64>(&spec, 1),
            Err(HarnessError::BadConfig(_))
        ));
        let mut spec = base_spec();
        spec.target_kappa = 0.5;
        assert!(generate_instance::<f64>(&spec, 1).is_err());
    }
}
