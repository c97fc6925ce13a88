//! Dense bounded-variable primal simplex.
//!
//! Two phases: phase 1 drives artificial variables out of the basis, phase 2
//! minimizes the real objective. Variables carry individual bounds (upper
//! bounds may be infinite) and nonbasic variables sit at either bound, so
//! box constraints never become rows. Pivoting uses Dantzig's rule with
//! lowest-index tie-breaks and falls back to Bland's rule after a stall,
//! which guarantees termination; all choices are deterministic.
//!
//! The problems this crate feeds in are small (tens of variables), so a
//! dense tableau kept exact by row operations beats anything fancier.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `minimize objective . v` subject to the rows and per-variable bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram<F> {
    pub n_vars: usize,
    pub objective: Vec<F>,
    /// Sparse rows: (coefficients, relation, right-hand side).
    pub rows: Vec<(Vec<(usize, F)>, Relation, F)>,
    /// Inclusive bounds per variable; the upper bound may be `+inf`.
    pub bounds: Vec<(F, F)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<F> {
    Optimal {
        x: Vec<F>,
        objective: F,
        iterations: usize,
    },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("linear program is malformed: {0}")]
    Malformed(&'static str),
    #[error("simplex did not terminate within the iteration budget")]
    IterationBudget,
}

const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau<F> {
    /// `B^-1 A`, maintained by pivots; one row per constraint.
    rows: Vec<Vec<F>>,
    /// `B^-1 b`, maintained by the same pivots.
    rhs: Vec<F>,
    lower: Vec<F>,
    upper: Vec<F>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl<F: Scalar> Tableau<F> {
    /// Current value of every variable: nonbasic at their bound, basic from
    /// `B^-1 (b - N x_N)`.
    fn values(&self) -> Vec<F> {
        let mut v = vec![F::zero(); self.n_cols];
        for (col, &st) in self.state.iter().enumerate() {
            v[col] = match st {
                VarState::AtLower => self.lower[col],
                VarState::AtUpper => self.upper[col],
                VarState::Basic => F::zero(),
            };
        }
        for (r, &b) in self.basis.iter().enumerate() {
            let mut beta = self.rhs[r];
            for (col, &st) in self.state.iter().enumerate() {
                if st != VarState::Basic && v[col] != F::zero() {
                    beta -= self.rows[r][col] * v[col];
                }
            }
            v[b] = beta;
        }
        v
    }

    fn reduced_costs(&self, cost: &[F]) -> Vec<F> {
        // z_j = c_j - c_B . (B^-1 a_j); the tableau already holds B^-1 A.
        let mut z = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != F::zero() {
                for col in 0..self.n_cols {
                    z[col] -= cb * self.rows[r][col];
                }
            }
        }
        z
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.rows[row][col];
        let inv = pivot.recip();
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        self.rhs[row] *= inv;
        let pivot_rhs = self.rhs[row];
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let factor = self.rows[r][col];
            if factor == F::zero() {
                continue;
            }
            for c in 0..self.n_cols {
                let delta = factor * self.rows[row][c];
                self.rows[r][c] -= delta;
            }
            self.rhs[r] -= factor * pivot_rhs;
        }
    }
}

/// Solves the program; `Optimal` carries certified-optimal values.
pub fn solve<F: Scalar>(lp: &LinearProgram<F>) -> Result<LpOutcome<F>, LpError> {
    if lp.objective.len() != lp.n_vars || lp.bounds.len() != lp.n_vars {
        return Err(LpError::Malformed("objective/bounds length mismatch"));
    }
    for &(lo, hi) in &lp.bounds {
        if lo > hi || lo.is_infinite() {
            return Err(LpError::Malformed("variable bounds are inconsistent"));
        }
    }

    let m = lp.rows.len();
    // Column layout: structural | slack (one per inequality) | artificial.
    let n_slack = lp
        .rows
        .iter()
        .filter(|(_, rel, _)| *rel != Relation::Eq)
        .count();
    let n_cols = lp.n_vars + n_slack + m;

    let mut lower = vec![F::zero(); n_cols];
    let mut upper = vec![F::infinity(); n_cols];
    let mut state = vec![VarState::AtLower; n_cols];
    for v in 0..lp.n_vars {
        lower[v] = lp.bounds[v].0;
        upper[v] = lp.bounds[v].1;
        // Start nonbasic variables at the finite bound closest to zero.
        state[v] = if upper[v].is_finite() && upper[v].abs() < lower[v].abs() {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
    }

    let mut rows = vec![vec![F::zero(); n_cols]; m];
    let mut rhs = vec![F::zero(); m];
    let mut slack_at = lp.n_vars;
    for (r, (coeffs, rel, b)) in lp.rows.iter().enumerate() {
        for &(col, a) in coeffs {
            if col >= lp.n_vars {
                return Err(LpError::Malformed("row references unknown variable"));
            }
            rows[r][col] += a;
        }
        rhs[r] = *b;
        match rel {
            Relation::Le => {
                rows[r][slack_at] = F::one();
                slack_at += 1;
            }
            Relation::Ge => {
                rows[r][slack_at] = -F::one();
                slack_at += 1;
            }
            Relation::Eq => {}
        }
    }

    // Artificial basis: one artificial per row. Rows with a negative
    // residual at the nonbasic starting point are negated first, so the
    // artificial block is the identity and its starting values are the
    // nonnegative residual magnitudes.
    let mut tab = Tableau {
        rows,
        rhs,
        lower,
        upper,
        state,
        basis: Vec::with_capacity(m),
        n_cols,
    };
    for r in 0..m {
        let mut residual = tab.rhs[r];
        for col in 0..lp.n_vars + n_slack {
            let v = match tab.state[col] {
                VarState::AtLower => tab.lower[col],
                VarState::AtUpper => tab.upper[col],
                VarState::Basic => unreachable!("no basic vars yet"),
            };
            if v != F::zero() {
                residual -= tab.rows[r][col] * v;
            }
        }
        if residual < F::zero() {
            for v in tab.rows[r].iter_mut() {
                *v = -*v;
            }
            tab.rhs[r] = -tab.rhs[r];
        }
        let art = lp.n_vars + n_slack + r;
        tab.rows[r][art] = F::one();
        tab.state[art] = VarState::Basic;
        tab.basis.push(art);
    }

    let mut iterations = 0usize;

    // Phase 1: minimize the sum of artificials.
    let mut phase1_cost = vec![F::zero(); n_cols];
    for col in lp.n_vars + n_slack..n_cols {
        phase1_cost[col] = F::one();
    }
    match run_simplex(&mut tab, &phase1_cost, &mut iterations)? {
        SimplexEnd::Optimal => {}
        SimplexEnd::Unbounded => {
            return Err(LpError::Malformed("phase 1 cannot be unbounded"));
        }
    }
    let values = tab.values();
    let infeasibility: F = (lp.n_vars + n_slack..n_cols)
        .map(|col| values[col])
        .fold(F::zero(), |acc, v| acc + v.abs());
    if infeasibility > F::of(FEAS_TOL) {
        return Ok(LpOutcome::Infeasible);
    }

    // Pin artificials to zero so phase 2 can never reuse them, and pivot any
    // still sitting (at value zero) in the basis out onto a real column.
    for col in lp.n_vars + n_slack..n_cols {
        tab.upper[col] = F::zero();
        if tab.state[col] != VarState::Basic {
            tab.state[col] = VarState::AtLower;
        }
    }
    for r in 0..m {
        if tab.basis[r] < lp.n_vars + n_slack {
            continue;
        }
        let pivot_col = (0..lp.n_vars + n_slack)
            .find(|&c| tab.state[c] != VarState::Basic && tab.rows[r][c].abs() > F::of(PIVOT_TOL));
        if let Some(col) = pivot_col {
            let leaving = tab.basis[r];
            tab.pivot(r, col);
            tab.state[leaving] = VarState::AtLower;
            tab.state[col] = VarState::Basic;
            tab.basis[r] = col;
        }
        // A row whose artificial cannot be pivoted out is redundant; the
        // artificial stays basic at zero, harmless with its zeroed bounds.
    }

    // Phase 2: the real objective.
    let mut phase2_cost = vec![F::zero(); n_cols];
    phase2_cost[..lp.n_vars].copy_from_slice(&lp.objective);
    match run_simplex(&mut tab, &phase2_cost, &mut iterations)? {
        SimplexEnd::Optimal => {}
        SimplexEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    }

    let values = tab.values();
    let x: Vec<F> = values[..lp.n_vars].to_vec();
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .fold(F::zero(), |acc, (&c, &v)| acc + c * v);
    Ok(LpOutcome::Optimal {
        x,
        objective,
        iterations,
    })
}

enum SimplexEnd {
    Optimal,
    Unbounded,
}

fn run_simplex<F: Scalar>(
    tab: &mut Tableau<F>,
    cost: &[F],
    iterations: &mut usize,
) -> Result<SimplexEnd, LpError> {
    let m = tab.basis.len();
    let stall_limit = 50 * (m + tab.n_cols) + 50;
    let budget = 40 * stall_limit;
    let tol = F::of(REDUCED_COST_TOL);
    let mut local_iters = 0usize;

    loop {
        if local_iters > budget {
            return Err(LpError::IterationBudget);
        }
        let bland = local_iters > stall_limit;
        local_iters += 1;

        let z = tab.reduced_costs(cost);
        // Entering variable: from the lower bound when the reduced cost is
        // negative, from the upper bound when it is positive.
        let mut entering: Option<(usize, F)> = None;
        for col in 0..tab.n_cols {
            let eligible = match tab.state[col] {
                VarState::Basic => continue,
                VarState::AtLower => z[col] < -tol,
                VarState::AtUpper => z[col] > tol,
            };
            // Fixed variables (lower == upper) can never improve anything.
            if !eligible || tab.lower[col] == tab.upper[col] {
                continue;
            }
            if bland {
                entering = Some((col, z[col]));
                break;
            }
            match entering {
                Some((_, best)) if z[col].abs() <= best.abs() => {}
                _ => entering = Some((col, z[col])),
            }
        }
        let Some((col, zc)) = entering else {
            return Ok(SimplexEnd::Optimal);
        };
        *iterations += 1;

        // Direction the entering variable moves in.
        let delta = if zc < F::zero() { F::one() } else { -F::one() };
        let values = tab.values();

        // Ratio test: the entering variable can travel until it hits its own
        // far bound or drives a basic variable to one of its bounds.
        let own_span = tab.upper[col] - tab.lower[col];
        let mut best_t = own_span; // may be +inf
        let mut leaving: Option<usize> = None; // row index
        for r in 0..m {
            let d = -delta * tab.rows[r][col];
            if d.abs() <= F::of(PIVOT_TOL) {
                continue;
            }
            let basic = tab.basis[r];
            let beta = values[basic];
            let limit = if d > F::zero() {
                if tab.upper[basic].is_infinite() {
                    continue;
                }
                (tab.upper[basic] - beta) / d
            } else {
                (beta - tab.lower[basic]) / (-d)
            };
            let limit = limit.max(F::zero());
            let replace = match leaving {
                None => limit < best_t,
                Some(cur_row) => {
                    limit < best_t
                        || (limit == best_t && bland && tab.basis[r] < tab.basis[cur_row])
                }
            };
            if replace {
                best_t = limit;
                leaving = Some(r);
            }
        }

        if best_t.is_infinite() {
            return Ok(SimplexEnd::Unbounded);
        }

        match leaving {
            None => {
                // Bound flip: the entering variable crosses to its other bound.
                tab.state[col] = match tab.state[col] {
                    VarState::AtLower => VarState::AtUpper,
                    VarState::AtUpper => VarState::AtLower,
                    VarState::Basic => unreachable!(),
                };
            }
            Some(row) => {
                let leaving_var = tab.basis[row];
                let d = -delta * tab.rows[row][col];
                tab.state[leaving_var] = if d > F::zero() {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                tab.pivot(row, col);
                tab.state[col] = VarState::Basic;
                tab.basis[row] = col;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn optimal(outcome: LpOutcome<f64>) -> (Vec<f64>, f64) {
        match outcome {
            LpOutcome::Optimal { x, objective, .. } => (x, objective),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn maximizes_along_a_capacity_row() {
        // min -x - y s.t. x + y <= 1, both in [0, 1].
        let lp = LinearProgram {
            n_vars: 2,
            objective: vec![-1.0, -1.0],
            rows: vec![(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0)],
            bounds: vec![(0.0, 1.0); 2],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(obj, -1.0);
        assert_relative_eq!(x[0] + x[1], 1.0);
    }

    #[test]
    fn pure_bound_flip_with_no_rows() {
        let lp = LinearProgram {
            n_vars: 1,
            objective: vec![-1.0],
            rows: vec![],
            bounds: vec![(0.0, 2.0)],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(x[0], 2.0);
        assert_relative_eq!(obj, -2.0);
    }

    #[test]
    fn unbounded_without_upper_bound() {
        let lp = LinearProgram {
            n_vars: 1,
            objective: vec![-1.0],
            rows: vec![],
            bounds: vec![(0.0, f64::INFINITY)],
        };
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn greater_equal_rows_work() {
        // min x s.t. x >= 3, x in [0, 10].
        let lp = LinearProgram {
            n_vars: 1,
            objective: vec![1.0],
            rows: vec![(vec![(0, 1.0)], Relation::Ge, 3.0)],
            bounds: vec![(0.0, 10.0)],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(x[0], 3.0);
        assert_relative_eq!(obj, 3.0);
    }

    #[test]
    fn infeasible_bounds_vs_row() {
        // x <= -1 with x >= 0 has no solution.
        let lp = LinearProgram {
            n_vars: 1,
            objective: vec![0.0],
            rows: vec![(vec![(0, 1.0)], Relation::Le, -1.0)],
            bounds: vec![(0.0, f64::INFINITY)],
        };
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn equality_distribution_picks_cheapest_vertex() {
        // min 3a + b + 2c s.t. a + b + c = 1, each in [0, 1].
        let lp = LinearProgram {
            n_vars: 3,
            objective: vec![3.0, 1.0, 2.0],
            rows: vec![(
                vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                Relation::Eq,
                1.0,
            )],
            bounds: vec![(0.0, 1.0); 3],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(obj, 1.0);
        assert_relative_eq!(x[1], 1.0);
    }

    #[test]
    fn upper_bounds_force_spill_to_second_best() {
        // Same distribution but b capped at 0.4: spill goes to c.
        let lp = LinearProgram {
            n_vars: 3,
            objective: vec![3.0, 1.0, 2.0],
            rows: vec![(
                vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                Relation::Eq,
                1.0,
            )],
            bounds: vec![(0.0, 1.0), (0.0, 0.4), (0.0, 1.0)],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(x[1], 0.4);
        assert_relative_eq!(x[2], 0.6);
        assert_relative_eq!(obj, 0.4 + 1.2);
    }

    #[test]
    fn minimax_auxiliary_variable_pattern() {
        // min r s.t. r >= 0.8 a, r >= 0.5 (1 - a): the pattern solve_ps uses.
        // Optimum a = 5/13, r = 4/13.
        let lp = LinearProgram {
            n_vars: 2, // a, r
            objective: vec![0.0, 1.0],
            rows: vec![
                (vec![(0, 0.8), (1, -1.0)], Relation::Le, 0.0),
                (vec![(0, -0.5), (1, -1.0)], Relation::Le, -0.5),
            ],
            bounds: vec![(0.0, 1.0), (0.0, f64::INFINITY)],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(x[0], 5.0 / 13.0, max_relative = 1e-9);
        assert_relative_eq!(obj, 4.0 / 13.0, max_relative = 1e-9);
    }

    #[test]
    fn negative_lower_bounds() {
        // min x + y s.t. x + 2y >= -2, x in [-3, 0], y in [-1, 5].
        let lp = LinearProgram {
            n_vars: 2,
            objective: vec![1.0, 1.0],
            rows: vec![(vec![(0, 1.0), (1, 2.0)], Relation::Ge, -2.0)],
            bounds: vec![(-3.0, 0.0), (-1.0, 5.0)],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        // On the binding row obj = -2 - y, so push y as high as the box on x
        // allows: x = -3, y = 0.5.
        assert_relative_eq!(x[0], -3.0, max_relative = 1e-9);
        assert_relative_eq!(x[1], 0.5, max_relative = 1e-9);
        assert_relative_eq!(obj, -2.5, max_relative = 1e-9);
    }

    #[test]
    fn degenerate_ties_terminate() {
        // Multiple redundant rows through the same vertex.
        let lp = LinearProgram {
            n_vars: 2,
            objective: vec![-1.0, -2.0],
            rows: vec![
                (vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0),
                (vec![(0, 2.0), (1, 2.0)], Relation::Le, 2.0),
                (vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0),
            ],
            bounds: vec![(0.0, 1.0); 2],
        };
        let (x, obj) = optimal(solve(&lp).unwrap());
        assert_relative_eq!(obj, -2.0);
        assert_relative_eq!(x[1], 1.0);
    }
}
