//! Model fitting: warm-start ladders, boundary candidates that keep nested
//! families from scoring below their special cases, convergence checks, and
//! model-based covariance from the observed information.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::family::{self, Family};
use crate::optim::{maximize, OptimOptions, OptimResult};
use crate::{RegressionError, Result};

/// Log of the dispersion used when pinning a negative binomial family to
/// its Poisson boundary.
const ALPHA_FLOOR_LN: f64 = -30.0;
/// Inflation intercept that switches a zero-inflated family off.
const INFLATE_OFF: f64 = -35.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub max_iter: u64,
    pub grad_tol: f64,
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 500, grad_tol: 1e-8, rel_tol: 1e-10 }
    }
}

impl FitOptions {
    fn optim(&self) -> OptimOptions {
        OptimOptions { max_iter: self.max_iter, grad_tol: self.grad_tol, rel_tol: self.rel_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub per_obs_loglik: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub converged: bool,
    /// The optimum sits on the parameter-space boundary (dispersion pinned
    /// at zero or inflation switched off); gradients need not vanish there.
    pub at_boundary: bool,
    pub grad_norm: f64,
    pub iterations: u64,
    /// Inverse observed information, row-major; None when the information
    /// matrix was singular (boundary optima usually are).
    pub cov: Option<Vec<Vec<f64>>>,
}

impl FitResult {
    pub fn se(&self) -> Option<Vec<f64>> {
        self.cov.as_ref().map(|c| (0..self.k).map(|j| c[j][j].max(0.0).sqrt()).collect())
    }

    pub fn alpha(&self) -> Option<f64> {
        self.family.has_alpha().then(|| self.theta[self.k - 1].exp())
    }
}

/// One line of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub stars: String,
    /// exp(estimate): multiplicative effect of a unit predictor change.
    pub factor_change: f64,
}

/// Builds the coefficient table from a fit and a standard-error vector
/// (model-based or clustered).
pub fn coef_table(fit: &FitResult, se: &[f64]) -> Result<Vec<CoefRow>> {
    if se.len() != fit.k {
        return Err(RegressionError::InvalidArgument(format!(
            "{} standard errors for {} parameters",
            se.len(),
            fit.k
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(fit
        .names
        .iter()
        .zip(&fit.theta)
        .zip(se)
        .map(|((name, est), se)| {
            let z = if *se > 0.0 { est / se } else { f64::NAN };
            let p = if z.is_finite() { 2.0 * (1.0 - normal.cdf(z.abs())) } else { f64::NAN };
            CoefRow {
                name: name.clone(),
                estimate: *est,
                se: *se,
                z,
                p,
                stars: crate::infer::stars(p).to_string(),
                factor_change: est.exp(),
            }
        })
        .collect())
}

fn validate(data: &Dataset, family: Family) -> Result<()> {
    let k = family.n_params(data.p());
    if data.n() <= k {
        return Err(RegressionError::InsufficientData(format!(
            "{} observations cannot identify {k} parameters",
            data.n()
        )));
    }
    if family.is_truncated() && data.zero_count() > 0 {
        return Err(RegressionError::InvalidArgument(
            "truncated families require strictly positive outcomes".to_string(),
        ));
    }
    if matches!(family, Family::HurdlePoisson | Family::HurdleNegBin | Family::Zip | Family::Zinb)
    {
        let zeros = data.zero_count();
        if zeros == 0 || zeros == data.n() {
            return Err(RegressionError::InsufficientData(
                "zero-aware families need both zero and positive outcomes".to_string(),
            ));
        }
    }
    if data.y().iter().all(|v| *v == 0.0) {
        return Err(RegressionError::InsufficientData("all outcomes are zero".to_string()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Moment starting value for ln(alpha) from marginal mean and variance.
fn moment_ln_alpha(y: &[f64]) -> f64 {
    let m = mean(y);
    let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() - 1).max(1) as f64;
    let alpha = ((var - m) / (m * m)).max(0.01);
    alpha.ln()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn run(family: Family, data: &Dataset, start: Vec<f64>, options: &FitOptions) -> OptimResult {
    maximize(|theta| family::eval(family, data, theta), start, &options.optim())
}

/// Poisson coefficients, used directly and as the root of every warm-start
/// ladder.
fn poisson_start(data: &Dataset) -> Vec<f64> {
    let mut start = vec![0.0; data.p()];
    start[0] = (mean(data.y()) + 1e-8).ln();
    start
}

fn fit_poisson(data: &Dataset, options: &FitOptions) -> OptimResult {
    run(Family::Poisson, data, poisson_start(data), options)
}

/// Restricts the dataset to positive outcomes, for truncated warm starts.
fn positives(data: &Dataset) -> Dataset {
    let keep: Vec<usize> =
        (0..data.n()).filter(|i| data.y()[*i] > 0.0).collect();
    let y: Vec<f64> = keep.iter().map(|i| data.y()[*i]).collect();
    let cols: Vec<(String, Vec<f64>)> = (1..data.p())
        .map(|j| {
            (data.names()[j].clone(), keep.iter().map(|i| data.row(*i)[j]).collect())
        })
        .collect();
    Dataset::new(y, &cols, None).expect("positive subset is well-formed")
}

struct Candidate {
    theta: Vec<f64>,
    loglik: f64,
    grad_norm: f64,
    at_boundary: bool,
    iterations: u64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn optim_candidate(result: OptimResult) -> Candidate {
    Candidate {
        grad_norm: max_abs(&result.grad),
        theta: result.theta,
        loglik: result.loglik,
        at_boundary: false,
        iterations: result.iterations,
    }
}

fn boundary_candidate(family: Family, data: &Dataset, theta: Vec<f64>) -> Candidate {
    let (loglik, grad) = family::eval(family, data, &theta);
    Candidate { theta, loglik, grad_norm: max_abs(&grad), at_boundary: true, iterations: 0 }
}

/// Maximum-likelihood fit of `family` on `data`. Nested families are
/// protected by boundary candidates: a negative binomial fit can never
/// report a worse likelihood than the Poisson fit it nests (up to the
/// floored dispersion), and zero-inflated fits can never fall below their
/// uninflated base.
pub fn fit(data: &Dataset, family: Family, options: &FitOptions) -> Result<FitResult> {
    validate(data, family)?;
    let p = data.p();
    let mut candidates: Vec<Candidate> = Vec::new();
    match family {
        Family::Poisson => {
            candidates.push(optim_candidate(fit_poisson(data, options)));
        }
        Family::NegBin => {
            let pois = fit_poisson(data, options);
            let mut start = pois.theta.clone();
            start.push(moment_ln_alpha(data.y()));
            candidates.push(optim_candidate(run(family, data, start, options)));
            let mut floor = pois.theta;
            floor.push(ALPHA_FLOOR_LN);
            candidates.push(boundary_candidate(family, data, floor));
        }
        Family::TruncatedPoisson => {
            candidates.push(optim_candidate(run(family, data, poisson_start(data), options)));
        }
        Family::TruncatedNegBin => {
            let tp = run(Family::TruncatedPoisson, data, poisson_start(data), options);
            let mut start = tp.theta.clone();
            start.push(moment_ln_alpha(data.y()));
            candidates.push(optim_candidate(run(family, data, start, options)));
            let mut floor = tp.theta;
            floor.push(ALPHA_FLOOR_LN);
            candidates.push(boundary_candidate(family, data, floor));
        }
        Family::Zip => {
            let pois = fit_poisson(data, options);
            let zero_frac = data.zero_count() as f64 / data.n() as f64;
            let mut start = pois.theta.clone();
            start.extend(std::iter::once(logit(zero_frac.clamp(0.05, 0.9))));
            start.extend(vec![0.0; p - 1]);
            candidates.push(optim_candidate(run(family, data, start, options)));
            let mut off = pois.theta;
            off.push(INFLATE_OFF);
            off.extend(vec![0.0; p - 1]);
            candidates.push(boundary_candidate(family, data, off));
        }
        Family::Zinb => {
            let nb = fit(data, Family::NegBin, options)?;
            let zero_frac = data.zero_count() as f64 / data.n() as f64;
            let beta = &nb.theta[..p];
            let ln_alpha = nb.theta[p];
            let mut start = beta.to_vec();
            start.push(logit(zero_frac.clamp(0.05, 0.9)));
            start.extend(vec![0.0; p - 1]);
            start.push(ln_alpha);
            candidates.push(optim_candidate(run(family, data, start, options)));
            let mut off = beta.to_vec();
            off.push(INFLATE_OFF);
            off.extend(vec![0.0; p - 1]);
            off.push(ln_alpha);
            candidates.push(boundary_candidate(family, data, off));
        }
        Family::HurdlePoisson | Family::HurdleNegBin => {
            let pos = positives(data);
            let trunc_family = match family {
                Family::HurdlePoisson => Family::TruncatedPoisson,
                _ => Family::TruncatedNegBin,
            };
            let trunc = fit(&pos, trunc_family, options)?;
            let pos_frac = 1.0 - data.zero_count() as f64 / data.n() as f64;
            let mut start = trunc.theta[..p].to_vec();
            start.push(logit(pos_frac.clamp(0.05, 0.95)));
            start.extend(vec![0.0; p - 1]);
            if family == Family::HurdleNegBin {
                start.push(trunc.theta[p]);
            }
            candidates.push(optim_candidate(run(family, data, start, options)));
        }
    }

    let best = candidates
        .into_iter()
        .filter(|c| c.loglik.is_finite())
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .ok_or_else(|| {
            RegressionError::Numerical(format!(
                "no finite likelihood found for {}",
                family.as_str()
            ))
        })?;

    // boundary optima carry nonzero gradients in the pinned direction by
    // construction; interior optima must actually flatten out. The gradient
    // is a sum over observations, so "flat" scales with n.
    let grad_norm = best.grad_norm;
    let converged = best.at_boundary || grad_norm < 1e-6 * (1.0 + data.n() as f64);
    let (per_obs_loglik, _) = family::per_obs(family, data, &best.theta);
    let k = family.n_params(p);
    let cov = observed_information_inverse(family, data, &best.theta);
    Ok(FitResult {
        family,
        names: family.param_names(data.names()),
        theta: best.theta,
        loglik: best.loglik,
        per_obs_loglik,
        n: data.n(),
        k,
        converged,
        at_boundary: best.at_boundary,
        grad_norm,
        iterations: best.iterations,
        cov,
    })
}

/// Observed information from central finite differences of the analytic
/// gradient, inverted; None when singular or non-finite.
fn observed_information_inverse(
    family: Family,
    data: &Dataset,
    theta: &[f64],
) -> Option<Vec<Vec<f64>>> {
    let k = theta.len();
    let mut hessian = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let h = 1e-5 * (1.0 + theta[j].abs());
        let mut plus = theta.to_vec();
        plus[j] += h;
        let mut minus = theta.to_vec();
        minus[j] -= h;
        let (_, gp) = family::eval(family, data, &plus);
        let (_, gm) = family::eval(family, data, &minus);
        for i in 0..k {
            hessian[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    if hessian.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // observed information is the negated symmetrized Hessian
    let info = -(&hessian + hessian.transpose()) * 0.5;
    let inv = info.try_inverse()?;
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((0..k).map(|i| (0..k).map(|j| inv[(i, j)]).collect()).collect())
}

/// Per-observation score rows at the fitted parameters, for robust
/// covariance assembly.
pub(crate) fn score_rows(fit: &FitResult, data: &Dataset) -> Vec<Vec<f64>> {
    family::per_obs(fit.family, data, &fit.theta).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(y: Vec<f64>) -> Dataset {
        Dataset::new(y, &[], None).unwrap()
    }

    #[test]
    fn poisson_intercept_mle_is_log_mean() {
        let data = intercept_only(vec![0.0, 1.0, 2.0, 3.0, 6.0, 0.0, 2.0, 4.0]);
        let fit = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let ybar = mean(data.y());
        assert!((fit.theta[0] - ybar.ln()).abs() < 1e-7, "{}", fit.theta[0]);
        // closed-form likelihood at the optimum
        let expected: f64 = data
            .y()
            .iter()
            .map(|y| y * ybar.ln() - ybar - statrs::function::gamma::ln_gamma(y + 1.0))
            .sum();
        assert!((fit.loglik - expected).abs() < 1e-8);
        let se = fit.se().unwrap();
        // Fisher information of the Poisson intercept is n * ybar
        assert!((se[0] - 1.0 / (data.n() as f64 * ybar).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn negbin_intercept_mle_matches_sample_mean() {
        // clearly overdispersed
        let data = intercept_only(vec![
            0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 5.0, 9.0, 14.0, 0.0, 1.0, 7.0, 0.0, 2.0, 20.0,
        ]);
        let fit = fit(&data, Family::NegBin, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(!fit.at_boundary);
        // mean equation of NB2 with only an intercept: mu-hat = ybar
        assert!((fit.theta[0] - mean(data.y()).ln()).abs() < 1e-6);
        assert!(fit.alpha().unwrap() > 0.2);
    }

    #[test]
    fn negbin_on_equidispersed_data_nests_poisson() {
        let y = vec![2.0, 3.0, 1.0, 2.0, 4.0, 3.0, 2.0, 1.0, 3.0, 2.0, 2.0, 3.0];
        let data = intercept_only(y);
        let pois = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
        let nb = fit(&data, Family::NegBin, &FitOptions::default()).unwrap();
        assert!(
            nb.loglik >= pois.loglik - 1e-9,
            "negbin {} below poisson {}",
            nb.loglik,
            pois.loglik
        );
    }

    #[test]
    fn zip_and_zinb_never_fall_below_their_base() {
        let y = vec![0.0, 0.0, 1.0, 2.0, 3.0, 1.0, 0.0, 2.0, 4.0, 1.0, 0.0, 2.0];
        let data = intercept_only(y);
        let pois = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
        let nb = fit(&data, Family::NegBin, &FitOptions::default()).unwrap();
        let zip = fit(&data, Family::Zip, &FitOptions::default()).unwrap();
        let zinb = fit(&data, Family::Zinb, &FitOptions::default()).unwrap();
        assert!(zip.loglik >= pois.loglik - 1e-9);
        assert!(zinb.loglik >= nb.loglik - 1e-9);
    }

    #[test]
    fn truncated_poisson_matches_mean_identity() {
        let data = intercept_only(vec![1.0, 1.0, 2.0, 1.0, 3.0, 2.0, 1.0, 4.0, 2.0, 1.0]);
        let fit = fit(&data, Family::TruncatedPoisson, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let mu = fit.theta[0].exp();
        // E[y | y > 0] = mu / (1 - e^-mu)
        let implied = mu / (1.0 - (-mu).exp());
        assert!((implied - mean(data.y())).abs() < 1e-6, "implied {implied}");
    }

    #[test]
    fn zip_intercept_fit_reproduces_mean_and_zero_fraction() {
        // heavy excess zeros over a Poisson(2) positive regime
        let y = vec![
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 3.0, 1.0, 2.0, 4.0, 1.0, 3.0,
            2.0, 1.0, 2.0,
        ];
        let data = intercept_only(y);
        let fit = fit(&data, Family::Zip, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let mu = fit.theta[0].exp();
        let pi = 1.0 / (1.0 + (-fit.theta[1]).exp());
        let n = data.n() as f64;
        // intercept-only ZIP maximum likelihood matches both moments exactly
        let zero_frac = data.zero_count() as f64 / n;
        assert!(((1.0 - pi) * mu - mean(data.y())).abs() < 1e-6);
        assert!((pi + (1.0 - pi) * (-mu).exp() - zero_frac).abs() < 1e-6);
    }

    #[test]
    fn hurdle_fits_both_parts() {
        let y = vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 1.0, 2.0, 1.0, 4.0, 0.0, 2.0];
        let data = intercept_only(y.clone());
        let fit = fit(&data, Family::HurdlePoisson, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        // hurdle part recovers the positive fraction
        let pi = 1.0 / (1.0 + (-fit.theta[1]).exp());
        let pos_frac = y.iter().filter(|v| **v > 0.0).count() as f64 / y.len() as f64;
        assert!((pi - pos_frac).abs() < 1e-6);
        // count part solves the truncated mean identity on the positives
        let mu = fit.theta[0].exp();
        let pos_mean =
            y.iter().filter(|v| **v > 0.0).sum::<f64>() / y.iter().filter(|v| **v > 0.0).count() as f64;
        assert!((mu / (1.0 - (-mu).exp()) - pos_mean).abs() < 1e-6);
    }

    #[test]
    fn validation_rejects_degenerate_inputs() {
        let zeros = intercept_only(vec![0.0, 0.0, 0.0, 0.0]);
        assert!(fit(&zeros, Family::Poisson, &FitOptions::default()).is_err());
        let with_zero = intercept_only(vec![0.0, 1.0, 2.0, 3.0]);
        assert!(fit(&with_zero, Family::TruncatedPoisson, &FitOptions::default()).is_err());
        let no_zero = intercept_only(vec![1.0, 1.0, 2.0, 3.0]);
        assert!(fit(&no_zero, Family::Zip, &FitOptions::default()).is_err());
        let tiny = intercept_only(vec![1.0, 2.0]);
        assert!(fit(&tiny, Family::Zinb, &FitOptions::default()).is_err());
    }

    #[test]
    fn coefficient_table_reports_stars_and_factor_change() {
        let data = intercept_only(vec![2.0, 3.0, 1.0, 2.0, 4.0, 3.0, 2.0, 1.0, 3.0, 2.0]);
        let result = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
        let table = coef_table(&result, &result.se().unwrap()).unwrap();
        assert_eq!(table.len(), 1);
        let row = &table[0];
        assert_eq!(row.name, "intercept");
        assert!((row.factor_change - row.estimate.exp()).abs() < 1e-12);
        assert!(row.p < 0.001);
        assert_eq!(row.stars, "***");
    }
}
