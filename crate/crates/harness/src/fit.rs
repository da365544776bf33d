//! Least-squares slopes on log-log data.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; 0 for an exact fit.
    pub stderr: f64,
    /// 95% confidence interval from the t distribution with `n − 2` dof.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

/// Fits `log y = a + b log x`. Needs at least three positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() {
        return Err(HarnessError::Failed("slope fit: x and y lengths differ".into()));
    }
    if x.len() < 3 {
        return Err(HarnessError::Failed("need ≥ 3 points for slope fit".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Failed("slope fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Failed("slope fit: all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = n - 2.0;
    let stderr = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("dof ≥ 1").inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        ci_low: slope - t * stderr,
        ci_high: slope + t * stderr,
        points: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x = [0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let fit = loglog_slope(&x, &y).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
    }

    #[test]
    fn noisy_fit_interval_contains_slope() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y = [1.0, 2.2, 3.9, 8.3];
        let fit = loglog_slope(&x, &y).unwrap();
        assert!(fit.ci_low < fit.slope && fit.slope < fit.ci_high);
        // Two-sided 95% quantile at 2 dof.
        let half = (fit.ci_high - fit.ci_low) / 2.0;
        assert!((half / fit.stderr - 4.302652729911275).abs() < 1e-6);
    }

    #[test]
    fn too_few_points() {
        let err = loglog_slope(&[0.1], &[0.2]).unwrap_err();
        assert_eq!(err.to_string(), "need ≥ 3 points for slope fit");
    }
}
