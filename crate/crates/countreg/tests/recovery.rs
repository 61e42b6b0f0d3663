//! Parameter recovery on synthetic data with known generating processes.
//! Tolerances are frozen for the fixed seeds used here.

use remixtree_countreg::{
    clustered_cov, fit, select_model, Dataset, Family, FitOptions, RegressionError,
};
use remixtree_sim::Stream;

fn covariate(stream: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| stream.normal()).collect()
}

fn poisson_data(seed: u64, n: usize, b0: f64, b1: f64) -> Dataset {
    let mut stream = Stream::new(seed);
    let x = covariate(&mut stream, n);
    let y: Vec<f64> = x
        .iter()
        .map(|xi| stream.poisson((b0 + b1 * xi).exp()) as f64)
        .collect();
    Dataset::new(y, &[("x".to_string(), x)], None).unwrap()
}

fn negbin_data(seed: u64, n: usize, b0: f64, b1: f64, alpha: f64) -> Dataset {
    let mut stream = Stream::new(seed);
    let x = covariate(&mut stream, n);
    let y: Vec<f64> = x
        .iter()
        .map(|xi| stream.neg_binomial((b0 + b1 * xi).exp(), alpha) as f64)
        .collect();
    Dataset::new(y, &[("x".to_string(), x)], None).unwrap()
}

fn zinb_data(seed: u64, n: usize, b0: f64, b1: f64, pi: f64, alpha: f64) -> Dataset {
    let mut stream = Stream::new(seed);
    let x = covariate(&mut stream, n);
    let y: Vec<f64> = x
        .iter()
        .map(|xi| {
            if stream.bernoulli(pi) {
                0.0
            } else {
                stream.neg_binomial((b0 + b1 * xi).exp(), alpha) as f64
            }
        })
        .collect();
    Dataset::new(y, &[("x".to_string(), x)], None).unwrap()
}

#[test]
fn poisson_slope_recovery_within_three_se() {
    let data = poisson_data(41, 2000, 0.8, 0.5);
    let result = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
    assert!(result.converged);
    let se = result.se().unwrap();
    assert!((result.theta[0] - 0.8).abs() < 3.0 * se[0], "b0 {}", result.theta[0]);
    assert!((result.theta[1] - 0.5).abs() < 3.0 * se[1], "b1 {}", result.theta[1]);
    // n = 2000 pins the slope down tightly
    assert!((result.theta[1] - 0.5).abs() < 0.05);
}

#[test]
fn negbin_recovers_coefficients_and_dispersion() {
    let data = negbin_data(42, 2000, 1.0, -0.4, 0.8);
    let result = fit(&data, Family::NegBin, &FitOptions::default()).unwrap();
    assert!(result.converged);
    assert!(!result.at_boundary);
    assert!((result.theta[0] - 1.0).abs() < 0.1, "b0 {}", result.theta[0]);
    assert!((result.theta[1] + 0.4).abs() < 0.1, "b1 {}", result.theta[1]);
    let alpha = result.alpha().unwrap();
    assert!((alpha - 0.8).abs() < 0.2, "alpha {alpha}");
}

#[test]
fn zinb_recovers_inflation_and_count_parts() {
    let data = zinb_data(43, 4000, 1.2, 0.6, 0.35, 0.5);
    let result = fit(&data, Family::Zinb, &FitOptions::default()).unwrap();
    assert!(result.converged);
    // theta layout: [b0, b1, inflate intercept, inflate slope, ln alpha]
    assert!((result.theta[0] - 1.2).abs() < 0.15, "b0 {}", result.theta[0]);
    assert!((result.theta[1] - 0.6).abs() < 0.15, "b1 {}", result.theta[1]);
    let pi = 1.0 / (1.0 + (-result.theta[2]).exp());
    assert!((pi - 0.35).abs() < 0.05, "pi {pi}");
    // constant inflation: the inflation slope should be near zero
    assert!(result.theta[3].abs() < 0.3, "inflate slope {}", result.theta[3]);
    let alpha = result.alpha().unwrap();
    assert!((alpha - 0.5).abs() < 0.25, "alpha {alpha}");
}

#[test]
fn selection_keeps_poisson_on_poisson_data() {
    let data = poisson_data(44, 1500, 0.6, 0.3);
    let selection = select_model(&data, &FitOptions::default()).unwrap();
    assert_eq!(selection.base, Family::Poisson);
    assert_eq!(selection.winner, Family::Poisson);
}

#[test]
fn selection_moves_to_negbin_on_overdispersed_data() {
    let data = negbin_data(45, 1500, 1.0, 0.4, 1.0);
    let selection = select_model(&data, &FitOptions::default()).unwrap();
    assert_eq!(selection.base, Family::NegBin);
    assert!(selection.lrt.p < 1e-6);
    // no planted inflation, so the winner keeps the base dispersion core
    assert!(matches!(selection.winner, Family::NegBin | Family::HurdleNegBin | Family::Zinb));
}

#[test]
fn selection_detects_planted_zero_inflation() {
    let data = zinb_data(46, 4000, 1.2, 0.6, 0.35, 0.5);
    let selection = select_model(&data, &FitOptions::default()).unwrap();
    assert_eq!(selection.base, Family::NegBin);
    // a zero-heavy family must displace the plain negative binomial
    assert!(selection.winner != Family::NegBin, "trace: {:?}", selection.trace);
    assert!(selection.winner != Family::Poisson);
    let winner_aic = selection
        .aic
        .iter()
        .find(|e| e.family == selection.winner)
        .unwrap()
        .aic;
    let nb_aic = selection.aic.iter().find(|e| e.family == Family::NegBin);
    if let Some(nb) = nb_aic {
        assert!(winner_aic <= nb.aic);
    }
}

#[test]
fn likelihood_ordering_across_nested_families_on_real_draws() {
    let data = zinb_data(47, 800, 0.8, 0.3, 0.25, 0.6);
    let opts = FitOptions::default();
    let pois = fit(&data, Family::Poisson, &opts).unwrap();
    let nb = fit(&data, Family::NegBin, &opts).unwrap();
    let zip = fit(&data, Family::Zip, &opts).unwrap();
    let zinb = fit(&data, Family::Zinb, &opts).unwrap();
    assert!(nb.loglik >= pois.loglik - 1e-9);
    assert!(zip.loglik >= pois.loglik - 1e-9);
    assert!(zinb.loglik >= nb.loglik - 1e-9);
    assert!(zinb.loglik >= zip.loglik - 1e-9);
}

#[test]
fn clustered_errors_grow_under_cluster_correlation() {
    // clusters share a random intercept, inducing within-cluster correlation
    let mut stream = Stream::new(48);
    let n_clusters = 40usize;
    let per = 25usize;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut clusters = Vec::new();
    for c in 0..n_clusters {
        let shift = 0.8 * stream.normal();
        for _ in 0..per {
            let xi = stream.normal();
            x.push(xi);
            y.push(stream.poisson((0.5 + 0.4 * xi + shift).exp()) as f64);
            clusters.push(c as u64);
        }
    }
    let data = Dataset::new(y, &[("x".to_string(), x)], Some(clusters)).unwrap();
    let result = fit(&data, Family::Poisson, &FitOptions::default()).unwrap();
    let plain_se = result.se().unwrap();
    let robust = clustered_cov(&result, &data).unwrap();
    let robust_se: Vec<f64> = (0..2).map(|j| robust[j][j].sqrt()).collect();
    // ignoring the shared shifts understates intercept uncertainty badly
    assert!(robust_se[0] > 1.5 * plain_se[0], "{robust_se:?} vs {plain_se:?}");
}

#[test]
fn hurdle_matches_zero_fraction_on_synthetic_draws() {
    let data = zinb_data(49, 1200, 1.0, 0.4, 0.3, 0.4);
    let result = fit(&data, Family::HurdleNegBin, &FitOptions::default()).unwrap();
    assert!(result.converged);
    let p = data.names().len();
    // the binary-part score equation forces the mean predicted positive
    // probability to equal the observed positive fraction at the optimum
    let mean_prob: f64 = (0..data.n())
        .map(|i| {
            let eta: f64 =
                data.row(i).iter().zip(&result.theta[p..2 * p]).map(|(x, g)| x * g).sum();
            1.0 / (1.0 + (-eta).exp())
        })
        .sum::<f64>()
        / data.n() as f64;
    let pos_frac = 1.0 - data.zero_count() as f64 / data.n() as f64;
    assert!((mean_prob - pos_frac).abs() < 1e-6, "mean {mean_prob} observed {pos_frac}");
}

#[test]
fn truncated_fit_rejects_zero_outcomes() {
    let data = poisson_data(50, 400, 0.8, 0.5);
    assert!(data.zero_count() > 0);
    let err = fit(&data, Family::TruncatedPoisson, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, RegressionError::InvalidArgument(_)));
}
