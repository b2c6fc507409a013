//! Majority-class baseline and the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialBaseline {
    pub predictions: Vec<i8>,
    pub errors: Vec<f64>,
}

impl TrivialBaseline {
    pub fn mean_error(&self) -> f64 {
        if self.errors.is_empty() {
            return 0.0;
        }
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }
}

/// Predict each attribute's majority training class (ties go to `+1`) and
/// measure the error on the test rows.
pub fn trivial_baseline(train: &[Vec<i8>], test: &[Vec<i8>]) -> Result<TrivialBaseline> {
    let m = train.first().ok_or(Error::EmptyDataset)?.len();
    if let Some(r) = train.iter().chain(test).find(|r| r.len() != m) {
        return Err(Error::Dimension {
            expected: m,
            actual: r.len(),
        });
    }
    let predictions: Vec<i8> = (0..m)
        .map(|j| {
            let positive = train.iter().filter(|r| r[j] > 0).count();
            if 2 * positive >= train.len() {
                1
            } else {
                -1
            }
        })
        .collect();
    let errors = predictions
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if test.is_empty() {
                return 0.0;
            }
            test.iter().filter(|r| r[j] != p).count() as f64 / test.len() as f64
        })
        .collect();
    Ok(TrivialBaseline { predictions, errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Two-sided paired t-test on `a - b`.
///
/// With zero variance in the differences the statistic is 0 (p = 1) for a
/// zero mean and infinite (p = 0) otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config("a paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Config(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(col: &[i8]) -> Vec<Vec<i8>> {
        col.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn majority_and_ties() {
        let train = rows(&[1, 1, 1, -1, -1]);
        let test = rows(&[1, 1, 1, 1, 1, 1, 1, -1, -1, -1]);
        let b = trivial_baseline(&train, &test).unwrap();
        assert_eq!(b.predictions, vec![1]);
        assert!((b.errors[0] - 0.3).abs() < 1e-12);

        let b = trivial_baseline(&rows(&[1, -1]), &rows(&[-1])).unwrap();
        assert_eq!(b.predictions, vec![1]);
        assert_eq!(b.errors, vec![1.0]);

        let b = trivial_baseline(&rows(&[-1, -1]), &rows(&[-1, -1])).unwrap();
        assert_eq!(b.errors, vec![0.0]);
        assert!(trivial_baseline(&[], &[]).is_err());
    }

    #[test]
    fn t_test_edge_cases() {
        let r = paired_t_test(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = paired_t_test(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }
}
