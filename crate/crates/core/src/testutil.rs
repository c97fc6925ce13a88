//! Shared fixtures for unit tests.

use crate::model::{Instance, PolicyMatrix};

pub(crate) fn inst(
    workers: &[&str],
    types: &[&str],
    lambda: &[f64],
    edges: &[(usize, usize, f64)],
) -> Instance<f64> {
    Instance::new(
        workers.iter().map(|s| s.to_string()).collect(),
        types.iter().map(|s| s.to_string()).collect(),
        lambda.to_vec(),
        edges.to_vec(),
    )
    .unwrap()
}

/// Two workers, five types, all rates 1, lambda 0.1 everywhere; worker `w1`
/// serves only `t1`, worker `w2` serves everything. Both minimax programs
/// have the unique optimum x[w1][t1] = 1, x[w2][tj] = 1 for j >= 2.
pub(crate) fn two_worker_five_type() -> Instance<f64> {
    let edges: Vec<(usize, usize, f64)> = std::iter::once((0usize, 0usize, 1.0))
        .chain((0..5).map(|j| (1usize, j, 1.0)))
        .collect();
    Instance::new(
        vec!["w1".into(), "w2".into()],
        (1..=5).map(|j| format!("t{j}")).collect(),
        vec![0.1; 5],
        edges,
    )
    .unwrap()
}

pub(crate) fn two_worker_five_type_optimal_policy(inst: &Instance<f64>) -> PolicyMatrix<f64> {
    let mut x = vec![0.0; inst.n_edges()];
    x[inst.edge_index(0, 0).unwrap()] = 1.0;
    for j in 1..5 {
        x[inst.edge_index(1, j).unwrap()] = 1.0;
    }
    PolicyMatrix::new(x)
}

proptest::prop_compose! {
    /// Random small instance with a random feasible policy.
    pub(crate) fn instance_and_policy()(
        n_workers in 1usize..4,
        n_types in 1usize..4,
        seeds in proptest::collection::vec(0.0f64..1.0, 36),
    ) -> (Instance<f64>, PolicyMatrix<f64>) {
        let mut s = seeds.iter().copied().cycle();
        let mut draw = move || s.next().unwrap();
        let mut edges = Vec::new();
        for j in 0..n_types {
            for i in 0..n_workers {
                // Keep each type connected through worker j % n_workers.
                if i == j % n_workers || draw() > 0.4 {
                    edges.push((i, j, 0.5 + 2.0 * draw()));
                }
            }
        }
        let lambda: Vec<f64> = (0..n_types).map(|_| 0.05 + 0.4 * draw()).collect();
        let inst = Instance::new(
            (0..n_workers).map(|i| format!("w{i}")).collect(),
            (0..n_types).map(|j| format!("t{j}")).collect(),
            lambda,
            edges,
        ).unwrap();
        let mut x = vec![0.0; inst.n_edges()];
        for j in 0..n_types {
            let ids = inst.type_edges(j).to_vec();
            let weights: Vec<f64> = ids.iter().map(|_| 0.01 + draw()).collect();
            let total: f64 = weights.iter().sum();
            for (&e, w) in ids.iter().zip(&weights) {
                x[e] = w / total;
            }
        }
        (inst, PolicyMatrix::new(x))
    }
}
