//! The pipeline configuration file: one JSON document with optional
//! sections per stage. Unknown keys are rejected so typos fail loudly.
//! Command-line flags override config values, which override defaults.

use std::path::Path;

use serde::Deserialize;

use remixtree_core::ingest::FilterConfig;
use remixtree_core::miner::MinerConfig;
use remixtree_core::profile::ProfileConfig;
use remixtree_core::synth::SynthConfig;
use remixtree_countreg::FitOptions;

use crate::error::Result;
use crate::io::read_json;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub filters: Option<FilterConfig>,
    pub miner: Option<MinerSection>,
    pub fit: Option<FitSection>,
    pub profiler: Option<ProfileConfig>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerSection {
    pub min_occurrences: Option<u64>,
    pub min_lift: Option<f64>,
    pub minsup: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub protocol: Option<String>,
    pub corr_threshold: Option<f64>,
    pub optimizer: Option<FitOptions>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
        match path {
            Some(p) => read_json(p),
            None => Ok(PipelineConfig::default()),
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        self.filters.clone().unwrap_or_default()
    }

    /// Miner settings with per-flag overrides applied on top of the config
    /// section and the stock defaults.
    pub fn miner_config(
        &self,
        min_occ: Option<u64>,
        min_lift: Option<f64>,
        minsup: Option<f64>,
    ) -> MinerConfig {
        let section = self.miner.clone().unwrap_or_default();
        let base = MinerConfig::default();
        MinerConfig {
            min_occurrences: min_occ.or(section.min_occurrences).unwrap_or(base.min_occurrences),
            min_lift: min_lift.or(section.min_lift).unwrap_or(base.min_lift),
            minsup: minsup.or(section.minsup),
        }
    }

    pub fn profile_config(&self) -> ProfileConfig {
        self.profiler.clone().unwrap_or_default()
    }

    pub fn fit_protocol(&self, flag: Option<String>) -> String {
        flag.or_else(|| self.fit.as_ref().and_then(|f| f.protocol.clone()))
            .unwrap_or_else(|| "auto".to_string())
    }

    pub fn corr_threshold(&self, flag: Option<f64>) -> f64 {
        flag.or_else(|| self.fit.as_ref().and_then(|f| f.corr_threshold)).unwrap_or(0.7)
    }

    pub fn fit_options(&self) -> FitOptions {
        self.fit.as_ref().and_then(|f| f.optimizer).unwrap_or_default()
    }
}
