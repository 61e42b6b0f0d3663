//! Inference beyond point estimates: the boundary-corrected overdispersion
//! test, non-nested fit comparison, information criteria, and
//! cluster-robust covariance.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::fit::{score_rows, FitResult};
use crate::{RegressionError, Result};

pub fn aic(fit: &FitResult) -> f64 {
    2.0 * fit.k as f64 - 2.0 * fit.loglik
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub p: f64,
}

/// Likelihood-ratio test of dispersion alpha = 0 (the restricted fit)
/// against alpha > 0. The null pins alpha to the parameter-space boundary,
/// so the statistic's null distribution is an equal mixture of a point mass
/// at zero and chi-squared with one degree of freedom; the p-value is half
/// the usual tail.
pub fn lrt_overdispersion(restricted: &FitResult, unrestricted: &FitResult) -> Result<LrtResult> {
    if restricted.n != unrestricted.n {
        return Err(RegressionError::InvalidArgument(
            "fits compare different numbers of observations".to_string(),
        ));
    }
    if unrestricted.k != restricted.k + 1 {
        return Err(RegressionError::InvalidArgument(
            "unrestricted fit must add exactly the dispersion parameter".to_string(),
        ));
    }
    let statistic = (2.0 * (unrestricted.loglik - restricted.loglik)).max(0.0);
    let chi = ChiSquared::new(1.0).expect("chi-squared(1)");
    let p = 0.5 * (1.0 - chi.cdf(statistic));
    Ok(LrtResult { statistic, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    pub z: f64,
    /// One-sided p-value for "the first model fits better".
    pub p: f64,
}

/// Vuong's non-nested comparison on per-observation log-likelihoods.
/// Positive z favors `a`. Errors when the two models are observationally
/// identical (zero variance of the pointwise differences).
pub fn vuong(a: &FitResult, b: &FitResult) -> Result<VuongResult> {
    if a.per_obs_loglik.len() != b.per_obs_loglik.len() {
        return Err(RegressionError::InvalidArgument(
            "fits compare different numbers of observations".to_string(),
        ));
    }
    let n = a.per_obs_loglik.len() as f64;
    let m: Vec<f64> = a
        .per_obs_loglik
        .iter()
        .zip(&b.per_obs_loglik)
        .map(|(la, lb)| la - lb)
        .collect();
    let mean = m.iter().sum::<f64>() / n;
    let var = m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-12) {
        return Err(RegressionError::InsufficientData(
            "models are observationally identical; the comparison is undefined".to_string(),
        ));
    }
    let z = n.sqrt() * mean / sd;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(VuongResult { z, p: 1.0 - normal.cdf(z) })
}

/// Cluster-robust (CR1) covariance: the sandwich over cluster-summed
/// scores with the finite-cluster correction
/// (G / (G - 1)) * ((n - 1) / (n - k)).
pub fn clustered_cov(fit: &FitResult, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let clusters = data.clusters().ok_or_else(|| {
        RegressionError::InvalidArgument("dataset has no cluster labels".to_string())
    })?;
    let cov = fit.cov.as_ref().ok_or_else(|| {
        RegressionError::Numerical(
            "model covariance unavailable; cannot form the sandwich".to_string(),
        )
    })?;
    let k = fit.k;
    let n = fit.n;
    if n <= k {
        return Err(RegressionError::InsufficientData(
            "more parameters than observations".to_string(),
        ));
    }
    let scores = score_rows(fit, data);
    let mut by_cluster: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (row, cluster) in scores.iter().zip(clusters) {
        let entry = by_cluster.entry(*cluster).or_insert_with(|| vec![0.0; k]);
        for (e, s) in entry.iter_mut().zip(row) {
            *e += s;
        }
    }
    let g = by_cluster.len();
    if g < 2 {
        return Err(RegressionError::InsufficientData(format!(
            "clustered errors need at least 2 clusters, got {g}"
        )));
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for s in by_cluster.values() {
        for i in 0..k {
            for j in 0..k {
                meat[(i, j)] += s[i] * s[j];
            }
        }
    }
    let bread = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    let correction =
        (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64));
    let sandwich = &bread * meat * &bread * correction;
    Ok((0..k).map(|i| (0..k).map(|j| sandwich[(i, j)]).collect()).collect())
}

pub fn clustered_se(fit: &FitResult, data: &Dataset) -> Result<Vec<f64>> {
    let cov = clustered_cov(fit, data)?;
    Ok((0..fit.k).map(|j| cov[j][j].max(0.0).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::fit::{fit, FitOptions};

    fn dummy_fit(loglik: f64, per_obs: Vec<f64>, k: usize) -> FitResult {
        FitResult {
            family: Family::Poisson,
            names: vec!["intercept".to_string()],
            theta: vec![0.0; k],
            loglik,
            n: per_obs.len(),
            per_obs_loglik: per_obs,
            k,
            converged: true,
            at_boundary: false,
            grad_norm: 0.0,
            iterations: 1,
            cov: None,
        }
    }

    #[test]
    fn aic_is_two_k_minus_two_loglik() {
        let fit = dummy_fit(-100.0, vec![-50.0, -50.0], 3);
        assert_eq!(aic(&fit), 206.0);
    }

    #[test]
    fn lrt_at_zero_statistic_gives_half() {
        let a = dummy_fit(-10.0, vec![-5.0, -5.0], 1);
        let b = dummy_fit(-10.0, vec![-5.0, -5.0], 2);
        let lrt = lrt_overdispersion(&a, &b).unwrap();
        assert_eq!(lrt.statistic, 0.0);
        assert!((lrt.p - 0.5).abs() < 1e-12);
        // a large improvement is overwhelming evidence
        let c = dummy_fit(-2.0, vec![-1.0, -1.0], 2);
        let strong = lrt_overdispersion(&a, &c).unwrap();
        assert!(strong.p < 1e-4);
    }

    #[test]
    fn lrt_never_goes_negative() {
        // numerically the unrestricted fit can sit a hair below the null
        let a = dummy_fit(-10.0, vec![-5.0, -5.0], 1);
        let b = dummy_fit(-10.0 - 1e-12, vec![-5.0, -5.0], 2);
        let lrt = lrt_overdispersion(&a, &b).unwrap();
        assert_eq!(lrt.statistic, 0.0);
        assert!((lrt.p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vuong_rejects_identical_models_and_signs_correctly() {
        let a = dummy_fit(-10.0, vec![-2.0, -3.0, -2.5, -2.5], 1);
        let same = dummy_fit(-10.0, vec![-2.0, -3.0, -2.5, -2.5], 2);
        assert!(vuong(&a, &same).is_err());
        let worse = dummy_fit(-14.0, vec![-3.0, -4.0, -3.4, -3.6], 1);
        let v = vuong(&a, &worse).unwrap();
        assert!(v.z > 0.0);
        assert!(v.p < 0.5);
        let reversed = vuong(&worse, &a).unwrap();
        assert!((reversed.z + v.z).abs() < 1e-12);
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.2), "");
        assert_eq!(stars(f64::NAN), "");
    }

    #[test]
    fn clustered_cov_matches_hand_computed_sandwich() {
        // Poisson intercept-only: score per obs is (y - mu)
        let y = vec![1.0, 3.0, 2.0, 0.0, 4.0, 2.0];
        let clusters = vec![1, 1, 2, 2, 3, 3];
        let data = Dataset::new(y.clone(), &[], Some(clusters.clone())).unwrap();
        let result = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
        let got = clustered_cov(&result, &data).unwrap();

        // independent recomputation with plain loops
        let mu: f64 = y.iter().sum::<f64>() / y.len() as f64;
        let mut cluster_sums = std::collections::BTreeMap::new();
        for (yi, c) in y.iter().zip(&clusters) {
            *cluster_sums.entry(*c).or_insert(0.0) += yi - mu;
        }
        let meat: f64 = cluster_sums.values().map(|s| s * s).sum();
        let info = y.len() as f64 * mu;
        let g = cluster_sums.len() as f64;
        let n = y.len() as f64;
        let expected = (g / (g - 1.0)) * ((n - 1.0) / (n - 1.0)) * meat / (info * info);
        assert!(
            (got[0][0] - expected).abs() < 1e-6 * expected,
            "got {} expected {expected}",
            got[0][0]
        );
    }

    #[test]
    fn clustered_cov_requires_multiple_clusters() {
        let y = vec![1.0, 3.0, 2.0, 0.0];
        let data = Dataset::new(y.clone(), &[], Some(vec![7, 7, 7, 7])).unwrap();
        let result = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
        assert!(clustered_cov(&result, &data).is_err());
        let unlabeled = Dataset::new(y, &[], None).unwrap();
        let r2 = fit(&unlabeled, Family::Poisson, &FitOptions::default()).unwrap();
        assert!(clustered_cov(&r2, &unlabeled).is_err());
    }
}
