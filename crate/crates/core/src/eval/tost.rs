use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TostResult {
    pub n: usize,
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub df: f64,
    pub t_lower: f64,
    pub t_upper: f64,
    /// p-value of the test against `mean <= -delta`.
    pub p_lower: f64,
    /// p-value of the test against `mean >= delta`.
    pub p_upper: f64,
    pub equivalent: bool,
    /// The differences have zero variance; the verdict comes from the mean alone.
    pub zero_variance: bool,
}

/// Paired two one-sided t-tests of `a - b` against the bounds `[-delta, delta]`.
/// Equivalent iff both p-values fall below `alpha`.
pub fn tost_paired(a: &[f64], b: &[f64], delta: f64, alpha: f64) -> Result<TostResult> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Precondition(
            "need at least two paired values".into(),
        ));
    }
    let valid = delta > 0.0 && alpha > 0.0 && alpha < 1.0;
    if !valid {
        return Err(Error::Config(format!(
            "invalid delta {delta} or alpha {alpha}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numeric("non-finite paired difference".into()));
    }
    let constant = diffs.iter().all(|d| *d == diffs[0]);
    let mean = if constant {
        diffs[0]
    } else {
        diffs.iter().sum::<f64>() / n as f64
    };
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = (n - 1) as f64;

    if constant || sd == 0.0 {
        let (p_lower, p_upper) = (
            if mean > -delta { 0.0 } else { 1.0 },
            if mean < delta { 0.0 } else { 1.0 },
        );
        return Ok(TostResult {
            n,
            mean_diff: mean,
            sd_diff: 0.0,
            df,
            t_lower: f64::INFINITY.copysign(mean + delta),
            t_upper: f64::INFINITY.copysign(mean - delta),
            p_lower,
            p_upper,
            equivalent: mean.abs() < delta,
            zero_variance: true,
        });
    }

    let se = sd / (n as f64).sqrt();
    let t_lower = (mean + delta) / se;
    let t_upper = (mean - delta) / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
    let p_lower = dist.sf(t_lower);
    let p_upper = dist.cdf(t_upper);
    Ok(TostResult {
        n,
        mean_diff: mean,
        sd_diff: sd,
        df,
        t_lower,
        t_upper,
        p_lower,
        p_upper,
        equivalent: p_lower < alpha && p_upper < alpha,
        zero_variance: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jitter(n: usize, sd: f64) -> Vec<f64> {
        (0..n).map(|i| sd * (i as f64 * 1.7).sin() * 1.41).collect()
    }

    #[test]
    fn jittered_identical_samples_are_equivalent() {
        let a: Vec<f64> = (0..100).map(|i| 0.3 + 0.001 * i as f64).collect();
        let b: Vec<f64> = a
            .iter()
            .zip(jitter(100, 1e-6))
            .map(|(x, j)| x + j)
            .collect();
        let r = tost_paired(&a, &b, DEFAULT_DELTA, DEFAULT_ALPHA).unwrap();
        assert!(r.equivalent && !r.zero_variance);
    }

    #[test]
    fn large_shift_is_not_equivalent() {
        let a: Vec<f64> = (0..60).map(|i| 0.5 + 0.01 * (i % 7) as f64).collect();
        let b: Vec<f64> = a
            .iter()
            .zip(jitter(60, 0.02))
            .map(|(x, j)| x - 0.2 + j)
            .collect();
        let r = tost_paired(&a, &b, DEFAULT_DELTA, DEFAULT_ALPHA).unwrap();
        assert!(!r.equivalent);
    }

    #[test]
    fn swapping_samples_mirrors_the_tests() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).cos()).collect();
        let b: Vec<f64> = a
            .iter()
            .zip(jitter(30, 0.03))
            .map(|(x, j)| x + 0.01 + j)
            .collect();
        let ab = tost_paired(&a, &b, 0.05, 0.05).unwrap();
        let ba = tost_paired(&b, &a, 0.05, 0.05).unwrap();
        assert_eq!(ab.equivalent, ba.equivalent);
        assert!((ab.p_lower - ba.p_upper).abs() < 1e-12);
        assert!((ab.p_upper - ba.p_lower).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_uses_the_mean() {
        let a = [0.5; 10];
        let b = [0.49; 10];
        let r = tost_paired(&a, &b, 0.05, 0.05).unwrap();
        assert!(r.zero_variance && r.equivalent);
        let far = tost_paired(&a, &[0.3; 10], 0.05, 0.05).unwrap();
        assert!(far.zero_variance && !far.equivalent);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(tost_paired(&[1.0], &[1.0], 0.05, 0.05).is_err());
        assert!(tost_paired(&[1.0, 2.0], &[1.0], 0.05, 0.05).is_err());
        assert!(tost_paired(&[1.0, 2.0], &[1.0, 2.5], 0.0, 0.05).is_err());
    }
}
