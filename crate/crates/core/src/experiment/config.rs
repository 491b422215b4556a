use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionConfig, AttributionMethod};
use crate::corpus::{CorpusFormat, DriftSpec};
use crate::error::{Error, Result};
use crate::faithfulness::DEFAULT_RATIOS;
use crate::model::TrainConfig;
use crate::rationale::selective::SelectiveConfig;
use crate::seed;
use crate::splitter::SplitSpec;

/// Where the corpus comes from: a line-delimited file or the drift
/// generator. Exactly one must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: CorpusFormat,
    pub synthetic: Option<DriftSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreshStage {
    pub enabled: bool,
    /// Attribution method that picks the rationale tokens.
    pub method: AttributionMethod,
    pub ratio: f64,
}

impl Default for FreshStage {
    fn default() -> Self {
        FreshStage {
            enabled: true,
            method: AttributionMethod::ScaledAttention,
            ratio: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardKumaStage {
    pub enabled: bool,
    pub target_rate: f64,
    pub lr_lambda: f64,
    pub model: SelectiveConfig,
}

impl Default for HardKumaStage {
    fn default() -> Self {
        HardKumaStage {
            enabled: true,
            target_rate: 0.2,
            lr_lambda: 5e-3,
            model: SelectiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraStage {
    pub enabled: bool,
    /// Tokens each sequence may select, as a fraction of its length.
    pub budget: f64,
    pub model: SelectiveConfig,
}

impl Default for SpectraStage {
    fn default() -> Self {
        SpectraStage {
            enabled: true,
            budget: 0.2,
            model: SelectiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub top_n: usize,
    /// Bandwidth of the timestamp density in days; `None` picks Silverman's rule.
    pub density_bandwidth_days: Option<f64>,
    pub density_points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            top_n: 10,
            density_bandwidth_days: None,
            density_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset label written to result tables.
    #[serde(default = "default_name")]
    pub name: String,
    pub corpus: CorpusSource,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub model: TrainConfig,
    #[serde(default)]
    pub attribution: AttributionConfig,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Test examples per split scored by the attribution stages; all when unset.
    #[serde(default)]
    pub max_eval_examples: Option<usize>,
    #[serde(default)]
    pub fresh: FreshStage,
    #[serde(default)]
    pub hardkuma: HardKumaStage,
    #[serde(default)]
    pub spectra: SpectraStage,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_name() -> String {
    "corpus".into()
}

fn default_ratios() -> Vec<f64> {
    DEFAULT_RATIOS.to_vec()
}

fn default_methods() -> Vec<String> {
    AttributionMethod::ALL
        .iter()
        .filter(|m| **m != AttributionMethod::Random)
        .map(|m| m.name().to_string())
        .collect()
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A config over a generated drifted corpus with every other field at
    /// its default.
    pub fn synthetic(spec: DriftSpec, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            name: "synthetic".into(),
            corpus: CorpusSource {
                path: None,
                format: CorpusFormat::Jsonl,
                synthetic: Some(spec),
            },
            split: SplitSpec::default(),
            model: TrainConfig::default(),
            attribution: AttributionConfig::default(),
            ratios: default_ratios(),
            methods: default_methods(),
            seeds: default_seeds(),
            max_eval_examples: None,
            fresh: FreshStage::default(),
            hardkuma: HardKumaStage::default(),
            spectra: SpectraStage::default(),
            report: ReportConfig::default(),
            output_dir: output_dir.into(),
        }
    }

    /// Parses TOML. Relative corpus paths resolve against `base`.
    pub fn from_toml(raw: &str, base: Option<&Path>) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        if let (Some(base), Some(path)) = (base, config.corpus.path.as_mut()) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&raw, path.parent())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Parsed methods, in config order.
    pub fn parsed_methods(&self) -> Result<Vec<AttributionMethod>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(p), None) => {
                if !p.is_file() {
                    return Err(Error::Config(format!("corpus file {} does not exist", p.display())));
                }
            }
            (None, Some(spec)) => spec.validate()?,
            _ => return Err(Error::Config("give exactly one of corpus.path and corpus.synthetic".into())),
        }
        self.split.validate()?;
        self.model.validate()?;
        self.attribution.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be non-empty".into()));
        }
        let methods = self.parsed_methods()?;
        if methods.contains(&AttributionMethod::Random) {
            return Err(Error::Config("random is the built-in baseline; do not list it".into()));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::Config("ratios must be non-empty and lie in (0, 1]".into()));
        }
        if !(self.fresh.ratio > 0.0 && self.fresh.ratio <= 1.0) {
            return Err(Error::Config("fresh.ratio must lie in (0, 1]".into()));
        }
        if self.fresh.method == AttributionMethod::Random {
            return Err(Error::Config("fresh.method must be an attribution method".into()));
        }
        if !(self.hardkuma.target_rate > 0.0 && self.hardkuma.target_rate < 1.0) || self.hardkuma.lr_lambda < 0.0 {
            return Err(Error::Config("hardkuma.target_rate must lie in (0, 1) and lr_lambda >= 0".into()));
        }
        if !(self.spectra.budget > 0.0 && self.spectra.budget <= 1.0) {
            return Err(Error::Config("spectra.budget must lie in (0, 1]".into()));
        }
        if self.max_eval_examples == Some(0) {
            return Err(Error::Config("max_eval_examples must be positive".into()));
        }
        if self.report.density_points < 2 || matches!(self.report.density_bandwidth_days, Some(b) if b <= 0.0) {
            return Err(Error::Config("report density settings must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        seed::sha256_hex(&json)[..16].to_string()
    }

    /// Declared departures from the reference protocol, echoed into every
    /// output table.
    pub fn deviations(&self) -> Vec<&'static str> {
        let mut d = vec!["clamped_norm_scores", "spectra_budget_projection"];
        if self.max_eval_examples.is_some() {
            d.push("eval_subsample");
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::synthetic(DriftSpec::new(200, 500, 3, 0.5, 1), "out")
    }

    #[test]
    fn toml_round_trip() {
        let c = config();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap(), None).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = config();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![0];
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_method_is_rejected() {
        let mut c = config();
        c.methods.push("saliency".into());
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn minimal_toml() {
        let raw = r#"
            [corpus.synthetic]
            vocab_size = 100
            n_examples = 300
            n_classes = 2
            drift_date = "2013-06-01"
            swap_fraction = 0.5
            seed = 3
        "#;
        let c = ExperimentConfig::from_toml(raw, None).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.ratios, DEFAULT_RATIOS.to_vec());
        assert_eq!(c.methods.len(), 8);
    }

    #[test]
    fn missing_corpus_file_fails_validation() {
        let mut c = config();
        c.corpus.synthetic = None;
        c.corpus.path = Some("/nonexistent/corpus.jsonl".into());
        assert!(c.validate().is_err());
    }
}
