//! Family selection: an overdispersion test picks the dispersion core,
//! zero-heavy alternatives are admitted only when they beat that base in a
//! pointwise fit comparison, and the information criterion settles the
//! survivors. Every decision lands in a readable trace.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::family::Family;
use crate::fit::{fit, FitOptions, FitResult};
use crate::infer::{aic, lrt_overdispersion, vuong, LrtResult};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongEntry {
    pub family: Family,
    pub z: f64,
    pub p: f64,
    /// Whether the alternative significantly outperformed the base.
    pub preferred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub family: Family,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub winner: Family,
    pub base: Family,
    pub lrt: LrtResult,
    pub vuong: Vec<VuongEntry>,
    pub aic: Vec<AicEntry>,
    pub trace: Vec<String>,
    pub fits: Vec<FitResult>,
}

impl SelectionResult {
    pub fn winner_fit(&self) -> &FitResult {
        self.fits
            .iter()
            .find(|f| f.family == self.winner)
            .expect("winner fit is always retained")
    }

    pub fn fit_for(&self, family: Family) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.family == family)
    }
}

/// Runs the full selection protocol at significance level 0.05.
pub fn select_model(data: &Dataset, options: &FitOptions) -> Result<SelectionResult> {
    let mut trace = Vec::new();
    let poisson = fit(data, Family::Poisson, options)?;
    let negbin = fit(data, Family::NegBin, options)?;
    let lrt = lrt_overdispersion(&poisson, &negbin)?;
    let base = if lrt.p < 0.05 { Family::NegBin } else { Family::Poisson };
    trace.push(format!(
        "overdispersion: boundary LRT statistic {:.4}, p {:.4} -> base {}",
        lrt.statistic,
        lrt.p,
        base.as_str()
    ));

    let mut fits = vec![poisson, negbin];
    let alternatives: &[Family] = match base {
        Family::Poisson => &[Family::HurdlePoisson, Family::Zip],
        _ => &[Family::HurdleNegBin, Family::Zinb],
    };

    let mut vuong_entries = Vec::new();
    let mut candidates = vec![base];
    if data.zero_count() == 0 {
        trace.push("no zero outcomes: zero-heavy alternatives skipped".to_string());
    } else {
        for alt in alternatives {
            let alt_fit = match fit(data, *alt, options) {
                Ok(f) => f,
                Err(e) => {
                    trace.push(format!("{}: fit failed ({e}); skipped", alt.as_str()));
                    continue;
                }
            };
            let base_fit = fits.iter().find(|f| f.family == base).expect("base fitted");
            match vuong(&alt_fit, base_fit) {
                Ok(v) => {
                    let preferred = v.p < 0.05;
                    trace.push(format!(
                        "{} vs {}: vuong z {:.4}, p {:.4} -> {}",
                        alt.as_str(),
                        base.as_str(),
                        v.z,
                        v.p,
                        if preferred { "kept" } else { "dropped" }
                    ));
                    vuong_entries.push(VuongEntry {
                        family: *alt,
                        z: v.z,
                        p: v.p,
                        preferred,
                    });
                    if preferred {
                        candidates.push(*alt);
                    }
                }
                Err(e) => {
                    trace.push(format!(
                        "{} vs {}: comparison undefined ({e}); dropped",
                        alt.as_str(),
                        base.as_str()
                    ));
                }
            }
            fits.push(alt_fit);
        }
    }

    let mut aic_entries: Vec<AicEntry> = candidates
        .iter()
        .map(|family| AicEntry {
            family: *family,
            aic: aic(fits.iter().find(|f| f.family == *family).expect("candidate fitted")),
        })
        .collect();
    aic_entries.sort_by(|a, b| a.aic.total_cmp(&b.aic).then(a.family.cmp(&b.family)));
    let winner = aic_entries[0].family;
    trace.push(format!(
        "information criterion over {{{}}} -> {}",
        aic_entries
            .iter()
            .map(|e| format!("{} {:.2}", e.family.as_str(), e.aic))
            .collect::<Vec<_>>()
            .join(", "),
        winner.as_str()
    ));
    Ok(SelectionResult { winner, base, lrt, vuong: vuong_entries, aic: aic_entries, trace, fits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidispersed_data_selects_poisson() {
        let y = vec![
            2.0, 3.0, 1.0, 2.0, 4.0, 3.0, 2.0, 1.0, 3.0, 2.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 2.0,
            0.0, 3.0, 2.0, 1.0, 4.0, 2.0, 3.0, 2.0, 2.0, 1.0, 3.0, 2.0, 4.0,
        ];
        let data = Dataset::new(y, &[], None).unwrap();
        let selection = select_model(&data, &FitOptions::default()).unwrap();
        assert_eq!(selection.base, Family::Poisson);
        assert_eq!(selection.winner, Family::Poisson);
        assert!(selection.lrt.p >= 0.05);
        assert!(!selection.trace.is_empty());
        assert!(selection.winner_fit().converged);
    }

    #[test]
    fn zero_free_data_skips_zero_alternatives() {
        let y = vec![2.0, 3.0, 1.0, 2.0, 4.0, 3.0, 2.0, 1.0, 3.0, 2.0, 5.0, 3.0];
        let data = Dataset::new(y, &[], None).unwrap();
        let selection = select_model(&data, &FitOptions::default()).unwrap();
        assert!(selection.vuong.is_empty());
        assert!(selection
            .trace
            .iter()
            .any(|line| line.contains("zero-heavy alternatives skipped")));
    }
}
