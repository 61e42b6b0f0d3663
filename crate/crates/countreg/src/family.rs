//! Log-likelihoods and analytic scores, per observation, for every
//! supported family. All gradients here are checked against finite
//! differences of the log-likelihood in the test suite.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    NegBin,
    Zip,
    Zinb,
    HurdlePoisson,
    HurdleNegBin,
    TruncatedPoisson,
    TruncatedNegBin,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegBin => "negbin",
            Family::Zip => "zip",
            Family::Zinb => "zinb",
            Family::HurdlePoisson => "hurdle_poisson",
            Family::HurdleNegBin => "hurdle_negbin",
            Family::TruncatedPoisson => "truncated_poisson",
            Family::TruncatedNegBin => "truncated_negbin",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "poisson" => Some(Family::Poisson),
            "negbin" => Some(Family::NegBin),
            "zip" => Some(Family::Zip),
            "zinb" => Some(Family::Zinb),
            "hurdle_poisson" => Some(Family::HurdlePoisson),
            "hurdle_negbin" => Some(Family::HurdleNegBin),
            "truncated_poisson" => Some(Family::TruncatedPoisson),
            "truncated_negbin" => Some(Family::TruncatedNegBin),
            _ => None,
        }
    }

    pub fn has_alpha(self) -> bool {
        matches!(self, Family::NegBin | Family::Zinb | Family::HurdleNegBin | Family::TruncatedNegBin)
    }

    /// Whether the parameter vector carries a second linear part (the
    /// inflation or hurdle-crossing model) over the same design.
    pub fn has_second_part(self) -> bool {
        matches!(self, Family::Zip | Family::Zinb | Family::HurdlePoisson | Family::HurdleNegBin)
    }

    /// Positive outcomes only (no zeros in the support).
    pub fn is_truncated(self) -> bool {
        matches!(self, Family::TruncatedPoisson | Family::TruncatedNegBin)
    }

    /// Parameter count for a design with p columns.
    pub fn n_params(self, p: usize) -> usize {
        p + if self.has_second_part() { p } else { 0 } + if self.has_alpha() { 1 } else { 0 }
    }

    pub fn param_names(self, design_names: &[String]) -> Vec<String> {
        let mut out = design_names.to_vec();
        if self.has_second_part() {
            let prefix = match self {
                Family::Zip | Family::Zinb => "inflate",
                _ => "hurdle",
            };
            out.extend(design_names.iter().map(|n| format!("{prefix}:{n}")));
        }
        if self.has_alpha() {
            out.push("ln_alpha".to_string());
        }
        out
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln Gamma(y + r) - ln Gamma(r), computed as a product over integer steps
/// when y is a small integer so it stays exact for very large r.
fn ln_gamma_ratio(y: f64, r: f64) -> f64 {
    if y <= 64.0 {
        let mut total = 0.0;
        let mut j = 0.0;
        while j < y - 0.5 {
            total += (r + j).ln();
            j += 1.0;
        }
        total
    } else {
        ln_gamma(y + r) - ln_gamma(r)
    }
}

/// digamma(y + r) - digamma(r), same integer-stepping trick.
fn digamma_diff(y: f64, r: f64) -> f64 {
    if y <= 64.0 {
        let mut total = 0.0;
        let mut j = 0.0;
        while j < y - 0.5 {
            total += 1.0 / (r + j);
            j += 1.0;
        }
        total
    } else {
        digamma(y + r) - digamma(r)
    }
}

/// NB2 pieces for one observation at (y, mu, r): log-density, d/dmu scale
/// factor (score wrt beta is factor * mu * x, already folded to (y-mu)r/(r+mu)),
/// and d/dr.
struct NbParts {
    ll: f64,
    beta_factor: f64,
    dr: f64,
}

fn nb_parts(y: f64, mu: f64, r: f64) -> NbParts {
    // ln(r + mu) = ln r + ln1p(mu / r) stays accurate for huge r
    let ln1p_mu_r = (mu / r).ln_1p();
    let ll = ln_gamma_ratio(y, r) - ln_gamma(y + 1.0) - r * ln1p_mu_r
        + y * (mu.ln() - r.ln() - ln1p_mu_r);
    let beta_factor = (y - mu) * r / (r + mu);
    let dr = digamma_diff(y, r) - ln1p_mu_r + 1.0 - (y + r) / (r + mu);
    NbParts { ll, beta_factor, dr }
}

/// NB2 probability of zero on the log scale: r ln(r / (r + mu)).
fn nb_ln_p0(mu: f64, r: f64) -> f64 {
    -r * (mu / r).ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Walks every observation, passing its log-likelihood and score vector to
/// the visitor, and returns the total log-likelihood. The score buffer is
/// zeroed before each observation. A non-finite observation short-circuits
/// to negative infinity.
pub(crate) fn visit<F>(family: Family, data: &Dataset, theta: &[f64], mut visitor: F) -> f64
where
    F: FnMut(usize, f64, &[f64]),
{
    let p = data.p();
    let k = family.n_params(p);
    debug_assert_eq!(theta.len(), k);
    let beta = &theta[..p];
    let gamma = if family.has_second_part() { &theta[p..2 * p] } else { &[] as &[f64] };
    let r = if family.has_alpha() { (-theta[k - 1]).exp() } else { f64::INFINITY };
    let mut score = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..data.n() {
        let x = data.row(i);
        let y = data.y()[i];
        for s in score.iter_mut() {
            *s = 0.0;
        }
        let eta = dot(beta, x);
        let mu = eta.exp();
        let ll = match family {
            Family::Poisson => {
                let ll = y * eta - mu - ln_gamma(y + 1.0);
                let g = y - mu;
                for (s, xj) in score[..p].iter_mut().zip(x) {
                    *s = g * xj;
                }
                ll
            }
            Family::NegBin => {
                let parts = nb_parts(y, mu, r);
                for (s, xj) in score[..p].iter_mut().zip(x) {
                    *s = parts.beta_factor * xj;
                }
                score[k - 1] = -r * parts.dr;
                parts.ll
            }
            Family::TruncatedPoisson => {
                // support y >= 1: subtract ln(1 - e^-mu)
                let ll = y * eta - mu - ln_gamma(y + 1.0) - (-(-mu).exp_m1()).ln();
                let g = y - mu - mu / mu.exp_m1();
                for (s, xj) in score[..p].iter_mut().zip(x) {
                    *s = g * xj;
                }
                ll
            }
            Family::TruncatedNegBin => {
                let parts = nb_parts(y, mu, r);
                let ln_p0 = nb_ln_p0(mu, r);
                let ll = parts.ll - (-(ln_p0).exp_m1()).ln();
                // P0 / (1 - P0) without cancellation
                let odds0 = 1.0 / (-ln_p0).exp_m1();
                let g = parts.beta_factor - odds0 * r * mu / (r + mu);
                for (s, xj) in score[..p].iter_mut().zip(x) {
                    *s = g * xj;
                }
                let l = ln_p0 / r;
                score[k - 1] = -r * (parts.dr + odds0 * (l + mu / (r + mu)));
                ll
            }
            Family::Zip | Family::Zinb => {
                let eta_z = dot(gamma, x);
                let pi = sigmoid(eta_z);
                let ln_pi = -softplus(-eta_z);
                let ln_1m_pi = -softplus(eta_z);
                let ln_p0 = if family == Family::Zip { -mu } else { nb_ln_p0(mu, r) };
                if y == 0.0 {
                    let ll = log_sum_exp(ln_pi, ln_1m_pi + ln_p0);
                    // posterior weight of the inflation component
                    let w = sigmoid(eta_z - ln_p0);
                    let g_beta = if family == Family::Zip {
                        -(1.0 - w) * mu
                    } else {
                        -(1.0 - w) * r * mu / (r + mu)
                    };
                    for j in 0..p {
                        score[j] = g_beta * x[j];
                        score[p + j] = (w - pi) * x[j];
                    }
                    if family == Family::Zinb {
                        let l = ln_p0 / r;
                        score[k - 1] = -r * (1.0 - w) * (l + mu / (r + mu));
                    }
                    ll
                } else {
                    let (ll_count, g_beta, dr) = if family == Family::Zip {
                        (y * eta - mu - ln_gamma(y + 1.0), y - mu, 0.0)
                    } else {
                        let parts = nb_parts(y, mu, r);
                        (parts.ll, parts.beta_factor, parts.dr)
                    };
                    for j in 0..p {
                        score[j] = g_beta * x[j];
                        score[p + j] = -pi * x[j];
                    }
                    if family == Family::Zinb {
                        score[k - 1] = -r * dr;
                    }
                    ln_1m_pi + ll_count
                }
            }
            Family::HurdlePoisson | Family::HurdleNegBin => {
                let eta_z = dot(gamma, x);
                let pi = sigmoid(eta_z);
                // the hurdle-crossing part models P(y > 0)
                let z = if y > 0.0 { 1.0 } else { 0.0 };
                let ll_bin = if z > 0.0 { -softplus(-eta_z) } else { -softplus(eta_z) };
                for j in 0..p {
                    score[p + j] = (z - pi) * x[j];
                }
                if y == 0.0 {
                    ll_bin
                } else if family == Family::HurdlePoisson {
                    let ll = y * eta - mu - ln_gamma(y + 1.0) - (-(-mu).exp_m1()).ln();
                    let g = y - mu - mu / mu.exp_m1();
                    for (s, xj) in score[..p].iter_mut().zip(x) {
                        *s = g * xj;
                    }
                    ll_bin + ll
                } else {
                    let parts = nb_parts(y, mu, r);
                    let ln_p0 = nb_ln_p0(mu, r);
                    let odds0 = 1.0 / (-ln_p0).exp_m1();
                    let g = parts.beta_factor - odds0 * r * mu / (r + mu);
                    for (s, xj) in score[..p].iter_mut().zip(x) {
                        *s = g * xj;
                    }
                    let l = ln_p0 / r;
                    score[k - 1] = -r * (parts.dr + odds0 * (l + mu / (r + mu)));
                    ll_bin + parts.ll - (-(ln_p0).exp_m1()).ln()
                }
            }
        };
        if !ll.is_finite() {
            visitor(i, f64::NEG_INFINITY, &score);
            return f64::NEG_INFINITY;
        }
        total += ll;
        visitor(i, ll, &score);
    }
    total
}

/// Total log-likelihood and its gradient at `theta`. The gradient is exact
/// (summed per-observation scores), which external checks can compare
/// against finite differences of the returned log-likelihood.
pub fn eval(family: Family, data: &Dataset, theta: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; theta.len()];
    let ll = visit(family, data, theta, |_, _, score| {
        for (g, s) in grad.iter_mut().zip(score) {
            *g += s;
        }
    });
    (ll, grad)
}

/// Per-observation log-likelihood and score rows.
pub(crate) fn per_obs(
    family: Family,
    data: &Dataset,
    theta: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut lls = Vec::with_capacity(data.n());
    let mut scores = Vec::with_capacity(data.n());
    visit(family, data, theta, |_, ll, score| {
        lls.push(ll);
        scores.push(score.to_vec());
    });
    (lls, scores)
}
