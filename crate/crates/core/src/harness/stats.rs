//! Mean and 95% Student-t confidence intervals over replications.

/// Two-sided 95% t quantiles for 1..=30 degrees of freedom, then breakpoints
/// at 40/60/120 and the normal limit beyond.
const T95: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

fn t95(dof: usize) -> f64 {
    match dof {
        0 => f64::NAN,
        1..=30 => T95[dof - 1],
        31..=40 => 2.021,
        41..=60 => 2.000,
        61..=120 => 1.980,
        _ => 1.960,
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Half-width of the 95% confidence interval for the mean; `None` for a
/// single replication (the interval degenerates to the point value).
pub fn ci95_halfwidth(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let m = mean(values);
    let variance = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0);
    Some(t95(n - 1) * (variance / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_value_has_no_interval() {
        assert_eq!(ci95_halfwidth(&[3.2]), None);
        assert_relative_eq!(mean(&[3.2]), 3.2);
    }

    #[test]
    fn known_small_sample() {
        // n = 4, mean 2.5, sample std sqrt(5/3); t(3) = 3.182.
        let values = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(mean(&values), 2.5);
        let expected = 3.182 * (5.0f64 / 3.0).sqrt() / 2.0;
        assert_relative_eq!(ci95_halfwidth(&values).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn interval_shrinks_with_sample_size() {
        let small: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let large: Vec<f64> = (0..50).map(|i| (i % 5) as f64).collect();
        assert!(ci95_halfwidth(&large).unwrap() < ci95_halfwidth(&small).unwrap());
    }

    #[test]
    fn zero_variance_zero_width() {
        assert_relative_eq!(ci95_halfwidth(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
    }
}
