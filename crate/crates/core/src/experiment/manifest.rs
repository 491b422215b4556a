use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Split,
    Train,
    Attribute,
    Faithfulness,
    Fresh,
    Hardkuma,
    Spectra,
    Agreement,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Split,
        Stage::Train,
        Stage::Attribute,
        Stage::Faithfulness,
        Stage::Fresh,
        Stage::Hardkuma,
        Stage::Spectra,
        Stage::Agreement,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Attribute => "attribute",
            Stage::Faithfulness => "faithfulness",
            Stage::Fresh => "fresh",
            Stage::Hardkuma => "hardkuma",
            Stage::Spectra => "spectra",
            Stage::Agreement => "agreement",
            Stage::Report => "report",
        }
    }

    /// Stages that must be complete before this one runs.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Split => &[],
            Stage::Train => &[Stage::Split],
            Stage::Attribute => &[Stage::Train],
            Stage::Faithfulness => &[Stage::Attribute],
            Stage::Fresh | Stage::Hardkuma | Stage::Spectra => &[Stage::Train],
            Stage::Agreement => &[Stage::Fresh],
            Stage::Report => &[Stage::Faithfulness, Stage::Fresh, Stage::Hardkuma, Stage::Spectra, Stage::Agreement],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub config_hash: String,
    /// Paths relative to the output directory.
    pub artifacts: Vec<PathBuf>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        RunManifest {
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stages: BTreeMap::new(),
        }
    }

    /// Reads the manifest in `dir`, or starts a fresh one. A manifest from
    /// another config is discarded whole.
    pub fn open(dir: &Path, config_hash: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config_hash));
        }
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: RunManifest = serde_json::from_str(&raw)?;
        if m.config_hash != config_hash {
            log::info!("config changed ({} -> {config_hash}); recomputing all stages", m.config_hash);
            return Ok(Self::new(config_hash));
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Complete (or deliberately skipped) under this config, with every
    /// artifact still on disk.
    pub fn is_done(&self, stage: Stage, dir: &Path) -> bool {
        self.stages.get(&stage).is_some_and(|r| {
            r.config_hash == self.config_hash
                && matches!(r.status, StageStatus::Complete | StageStatus::Skipped)
                && r.artifacts.iter().all(|a| dir.join(a).exists())
        })
    }

    pub fn invalidate_from(&mut self, stage: Stage) {
        let mut dirty = vec![stage];
        while let Some(s) = dirty.pop() {
            if self.stages.remove(&s).is_some() || s == stage {
                dirty.extend(Stage::ALL.into_iter().filter(|d| d.prerequisites().contains(&s)));
            }
        }
    }

    /// Hex digest of the manifest contents.
    pub fn digest(&self) -> String {
        crate::seed::sha256_hex(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(hash: &str, artifacts: Vec<PathBuf>) -> StageRecord {
        let now = Utc::now();
        StageRecord {
            status: StageStatus::Complete,
            config_hash: hash.into(),
            artifacts,
            started: now,
            finished: now,
            error: None,
        }
    }

    #[test]
    fn done_requires_hash_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x").unwrap();
        let mut m = RunManifest::new("h1");
        m.stages.insert(Stage::Split, record("h1", vec!["a.csv".into()]));
        m.stages.insert(Stage::Train, record("h1", vec!["missing.json".into()]));
        m.stages.insert(Stage::Attribute, record("h0", vec![]));
        assert!(m.is_done(Stage::Split, dir.path()));
        assert!(!m.is_done(Stage::Train, dir.path()));
        assert!(!m.is_done(Stage::Attribute, dir.path()));
    }

    #[test]
    fn reopening_with_another_hash_starts_over() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("h1");
        m.stages.insert(Stage::Split, record("h1", vec![]));
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::open(dir.path(), "h1").unwrap(), m);
        assert!(RunManifest::open(dir.path(), "h2").unwrap().stages.is_empty());
    }

    #[test]
    fn invalidation_reaches_dependents() {
        let mut m = RunManifest::new("h");
        for s in Stage::ALL {
            m.stages.insert(s, record("h", vec![]));
        }
        m.invalidate_from(Stage::Fresh);
        let left: Vec<Stage> = m.stages.keys().copied().collect();
        assert_eq!(
            left,
            vec![Stage::Split, Stage::Train, Stage::Attribute, Stage::Faithfulness, Stage::Hardkuma, Stage::Spectra]
        );
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
    }
}
