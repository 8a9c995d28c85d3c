//! Small statistics helpers shared by experiments and tests.

use crate::error::{Error, Result};

/// Sample mean and unbiased sample variance (n-1 denominator).
///
/// A single observation has variance zero. Empty input is rejected.
pub fn mean_var(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::invalid("mean_var: empty input"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((mean, ss / (n - 1.0)))
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> Result<f64> {
    let (_, var) = mean_var(xs)?;
    Ok((var / xs.len() as f64).sqrt())
}

/// Least-squares slope of `ys` against the index 0, 1, 2, ...
pub fn least_squares_slope(ys: &[f64]) -> Result<f64> {
    if ys.len() < 2 {
        return Err(Error::invalid("least_squares_slope: need at least 2 points"));
    }
    let n = ys.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (y - y_mean);
        den += dx * dx;
    }
    Ok(num / den)
}

/// Asymptotic p-value of the one-sample Kolmogorov-Smirnov statistic `d`
/// on `n` observations, via the Kolmogorov series with the usual
/// finite-sample correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let n = n as f64;
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1.0f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_mean_var_small_sample() {
        let (mean, var) = mean_var(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mean, 2.0);
        assert_eq!(var, 1.0);
    }

    #[test]
    fn test_mean_var_single_observation() {
        let (mean, var) = mean_var(&[5.0]).unwrap();
        assert_eq!(mean, 5.0);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn test_mean_var_rejects_empty() {
        assert!(mean_var(&[]).is_err());
    }

    #[test]
    fn test_slope_of_line_is_exact() {
        let ys: Vec<f64> = (0..50).map(|i| 3.0 + 0.25 * i as f64).collect();
        let slope = least_squares_slope(&ys).unwrap();
        assert!((slope - 0.25).abs() < 1e-12, "slope {slope}");
    }

    #[test]
    fn test_kolmogorov_pvalue_extremes() {
        assert!(kolmogorov_pvalue(0.001, 1000) > 0.99);
        assert!(kolmogorov_pvalue(0.2, 1000) < 1e-6);
    }
}
