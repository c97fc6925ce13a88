//! Midpoint-convexity witness search for the waiting-time objective.
//!
//! On the three-worker/two-type network where workers 1 and 3 each serve one
//! type and worker 2 serves both, the objective restricted to the region
//! where type 2 dominates reduces to a two-variable function
//!
//! ```text
//! f(x, y) = y / (1 - p y) + (1 - y) / (1 - q (2 - x - y)) - 1
//! ```
//!
//! over `O = { 2q + p^2 x y >= (p + q)(x + y), 0 <= y <= x <= 1 }`, with
//! `p` the load ratio of the dedicated workers and `q` of the shared one.
//! This module samples the region densely and hunts for midpoint violations
//! of convexity and of concavity; finding both proves the objective is
//! neither convex nor concave there.

use crate::Scalar;

use super::SolverError;

/// A pair of points and their midpoint exhibiting a midpoint violation.
#[derive(Debug, Clone)]
pub struct WitnessPoint<F> {
    pub a: (F, F),
    pub b: (F, F),
    pub midpoint: (F, F),
    pub f_a: F,
    pub f_b: F,
    pub f_mid: F,
    /// `f_mid - (f_a + f_b)/2` for convexity violations, the negation for
    /// concavity violations; strictly positive either way.
    pub margin: F,
}

#[derive(Debug, Clone)]
pub struct NonconvexityReport<F> {
    pub p: F,
    pub q: F,
    /// Witness of `f(mid) > (f(a) + f(b))/2` with the largest margin found.
    pub convexity_violation: Option<WitnessPoint<F>>,
    /// Witness of `f(mid) < (f(a) + f(b))/2` with the largest margin found.
    pub concavity_violation: Option<WitnessPoint<F>>,
    pub points_sampled: usize,
}

/// Evaluates `f` if the point is inside the region and away from the
/// denominators' singularities.
fn evaluate<F: Scalar>(p: F, q: F, x: F, y: F) -> Option<F> {
    let two = F::of(2.0);
    if y < F::zero() || y > x || x > F::one() {
        return None;
    }
    if two * q + p * p * x * y < (p + q) * (x + y) - F::of(1e-12) {
        return None;
    }
    let d1 = F::one() - p * y;
    let d2 = F::one() - q * (two - x - y);
    if d1 <= F::of(1e-9) || d2 <= F::of(1e-9) {
        return None;
    }
    Some(y / d1 + (F::one() - y) / d2 - F::one())
}

/// Scans a `resolution x resolution` lattice over the region for midpoint
/// violations of convexity and concavity, keeping the largest margin of
/// each kind. Degenerate rates may legitimately yield no witness.
pub fn nonconvexity_witness<F: Scalar>(
    p: F,
    q: F,
    resolution: usize,
) -> Result<NonconvexityReport<F>, SolverError> {
    if p < F::zero() || p > F::one() {
        return Err(SolverError::Precondition(format!(
            "p must lie in [0, 1], got {p}"
        )));
    }
    if q < F::zero() || q > F::of(0.5) {
        return Err(SolverError::Precondition(format!(
            "q must lie in [0, 1/2], got {q}"
        )));
    }
    if !(3..=512).contains(&resolution) {
        return Err(SolverError::TooLarge(format!(
            "witness resolution must be in 3..=512, got {resolution}"
        )));
    }

    let cell = F::one() / F::of((resolution - 1) as f64);
    let mut points: Vec<(F, F, F)> = Vec::new();
    for xi in 0..resolution {
        for yi in 0..=xi {
            let x = F::of(xi as f64) * cell;
            let y = F::of(yi as f64) * cell;
            if let Some(value) = evaluate(p, q, x, y) {
                points.push((x, y, value));
            }
        }
    }

    let mut report = NonconvexityReport {
        p,
        q,
        convexity_violation: None,
        concavity_violation: None,
        points_sampled: points.len(),
    };
    let half = F::of(0.5);
    for (idx, &(ax, ay, fa)) in points.iter().enumerate() {
        for &(bx, by, fb) in points.iter().skip(idx + 1) {
            let mx = half * (ax + bx);
            let my = half * (ay + by);
            let Some(fm) = evaluate(p, q, mx, my) else {
                continue;
            };
            let gap = fm - half * (fa + fb);
            if gap > F::of(1e-12) {
                let better = report
                    .convexity_violation
                    .as_ref()
                    .map_or(true, |w| gap > w.margin);
                if better {
                    report.convexity_violation = Some(WitnessPoint {
                        a: (ax, ay),
                        b: (bx, by),
                        midpoint: (mx, my),
                        f_a: fa,
                        f_b: fb,
                        f_mid: fm,
                        margin: gap,
                    });
                }
            } else if -gap > F::of(1e-12) {
                let better = report
                    .concavity_violation
                    .as_ref()
                    .map_or(true, |w| -gap > w.margin);
                if better {
                    report.concavity_violation = Some(WitnessPoint {
                        a: (ax, ay),
                        b: (bx, by),
                        midpoint: (mx, my),
                        f_a: fa,
                        f_b: fb,
                        f_mid: fm,
                        margin: -gap,
                    });
                }
            }
        }
    }
    Ok(report)
}
