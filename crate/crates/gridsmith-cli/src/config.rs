//! Pipeline configuration: a TOML file with flat, documented keys. Every
//! key can be overridden by the matching command-line flag; the default
//! config path comes from `--config`, then `GRIDSMITH_CONFIG`, then
//! `./gridsmith.toml` when present.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// System power base in MVA (default 100).
    pub base_mva: Option<f64>,
    /// Seed for every randomized stage.
    pub seed: Option<u64>,
    #[serde(default)]
    pub reduction: ReductionSection,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub opf: OpfSection,
    #[serde(default)]
    pub pf: PfSection,
    #[serde(default)]
    pub diagnosis: DiagnosisSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    pub z_small: Option<f64>,
    pub b_small: Option<f64>,
    pub xr_high: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub reference_csv: Option<PathBuf>,
    pub xr_max: Option<f64>,
    pub norm_rate_min: Option<f64>,
    pub theta_delta_deg: Option<f64>,
    pub xfmr_min_mva: Option<f64>,
    pub xfmr_max_mva: Option<f64>,
    pub repair_margin: Option<f64>,
    /// Pinned fit coefficients; both set means no fitting is needed.
    pub a: Option<f64>,
    pub k: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub reference_csv: Option<PathBuf>,
    pub n_trees: Option<usize>,
    pub smote_k: Option<usize>,
    pub basslink_mainland_gen: Option<usize>,
    pub basslink_tasmania_gen: Option<usize>,
    pub var_compensator_filter: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpfSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Slack penalty in currency/MWh; omitted means 1e4 x max cost.
    pub penalty: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub enforce_q_limits: Option<bool>,
    pub flat_start: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisSection {
    pub opf_slack_tol: Option<f64>,
    pub pf_mismatch_tol: Option<f64>,
}

impl PipelineConfig {
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<PipelineConfig> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os("GRIDSMITH_CONFIG").map(PathBuf::from))
            .or_else(|| {
                let default = PathBuf::from("gridsmith.toml");
                default.exists().then_some(default)
            });
        match path {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
            None => Ok(PipelineConfig::default()),
        }
    }

    pub fn base_mva(&self, flag: Option<f64>) -> f64 {
        flag.or(self.base_mva).unwrap_or(100.0)
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(42)
    }
}
