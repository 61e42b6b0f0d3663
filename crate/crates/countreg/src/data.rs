//! Outcome, design matrix, and optional cluster labels.

use crate::{RegressionError, Result};

/// A fitted model's input: non-negative integer outcomes, a design matrix
/// with a leading intercept column, and optional cluster labels for robust
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    /// Row-major, n rows of p values each, first column all ones.
    x: Vec<f64>,
    names: Vec<String>,
    clusters: Option<Vec<u64>>,
}

impl Dataset {
    /// Builds a dataset from named predictor columns; an intercept column is
    /// prepended automatically.
    pub fn new(
        y: Vec<f64>,
        columns: &[(String, Vec<f64>)],
        clusters: Option<Vec<u64>>,
    ) -> Result<Dataset> {
        let n = y.len();
        if n == 0 {
            return Err(RegressionError::InsufficientData("no observations".to_string()));
        }
        for v in &y {
            if !v.is_finite() || *v < 0.0 || (v - v.round()).abs() > 1e-8 {
                return Err(RegressionError::InvalidArgument(format!(
                    "outcomes must be non-negative integers, got {v}"
                )));
            }
        }
        let mut names = vec!["intercept".to_string()];
        for (name, col) in columns {
            if col.len() != n {
                return Err(RegressionError::InvalidArgument(format!(
                    "column {name} has {} values for {n} outcomes",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(RegressionError::InvalidArgument(format!(
                    "column {name} contains non-finite values"
                )));
            }
            names.push(name.clone());
        }
        if let Some(c) = &clusters {
            if c.len() != n {
                return Err(RegressionError::InvalidArgument(format!(
                    "{} cluster labels for {n} outcomes",
                    c.len()
                )));
            }
        }
        let p = columns.len() + 1;
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            x.push(1.0);
            for (_, col) in columns {
                x.push(col[i]);
            }
        }
        Ok(Dataset { y, x, names, clusters })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn clusters(&self) -> Option<&[u64]> {
        self.clusters.as_deref()
    }

    pub fn zero_count(&self) -> usize {
        self.y.iter().filter(|v| **v == 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_with_intercept_first() {
        let d = Dataset::new(
            vec![0.0, 1.0, 2.0],
            &[("likes".to_string(), vec![1.0, 2.0, 3.0])],
            None,
        )
        .unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 2);
        assert_eq!(d.names(), &["intercept".to_string(), "likes".to_string()]);
        assert_eq!(d.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_outcomes_and_shapes() {
        assert!(Dataset::new(vec![], &[], None).is_err());
        assert!(Dataset::new(vec![-1.0], &[], None).is_err());
        assert!(Dataset::new(vec![1.5], &[], None).is_err());
        assert!(Dataset::new(vec![f64::NAN], &[], None).is_err());
        assert!(Dataset::new(
            vec![1.0, 2.0],
            &[("x".to_string(), vec![1.0])],
            None
        )
        .is_err());
        assert!(Dataset::new(vec![1.0, 2.0], &[], Some(vec![1])).is_err());
    }
}
