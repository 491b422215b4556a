//! Rationales and the select-then-predict models that produce them.

pub mod fresh;
pub mod kuma;
pub mod lstm;
pub mod retention;
pub mod selective;
pub mod spectra;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RationaleSource {
    Fresh,
    Hardkuma,
    Spectra,
    Topk,
}

impl RationaleSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RationaleSource::Fresh => "fresh",
            RationaleSource::Hardkuma => "hardkuma",
            RationaleSource::Spectra => "spectra",
            RationaleSource::Topk => "topk",
        }
    }
}

/// A selected subset of token positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    /// Sorted, unique positions.
    pub indices: Vec<usize>,
    pub source: RationaleSource,
    /// Per-position gate values; `indices` is its support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_mask: Option<Vec<f64>>,
}

impl Rationale {
    pub fn new(mut indices: Vec<usize>, source: RationaleSource) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Rationale {
            indices,
            source,
            soft_mask: None,
        }
    }

    pub fn empty(source: RationaleSource) -> Self {
        Rationale::new(Vec::new(), source)
    }

    pub fn all(len: usize, source: RationaleSource) -> Self {
        Rationale::new((0..len).collect(), source)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self, length: usize) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= length) {
            return Err(Error::Bounds { index: bad, length });
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("rationale indices must be sorted and unique".into()));
        }
        if let Some(mask) = &self.soft_mask {
            if mask.len() != length || mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
                return Err(Error::Config("soft mask must hold one value in [0, 1] per token".into()));
            }
            let support: Vec<usize> = (0..length).filter(|&i| mask[i] > 0.0).collect();
            if support != self.indices {
                return Err(Error::Config("rationale indices must equal the soft-mask support".into()));
            }
        }
        Ok(())
    }
}

/// One line of a rationale manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleRecord {
    pub id: String,
    /// Surface tokens of the encoded input, so manifests can be read without
    /// the vocabulary that produced them.
    pub tokens: Vec<String>,
    pub indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_mask: Option<Vec<f64>>,
    pub source: RationaleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

impl RationaleRecord {
    pub fn selected_tokens(&self) -> impl Iterator<Item = &str> {
        self.indices.iter().filter_map(|&i| self.tokens.get(i).map(String::as_str))
    }
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[RationaleRecord]) -> Result<()> {
    crate::io::write_jsonl(path, records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<RationaleRecord>> {
    crate::io::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_and_dedups() {
        let r = Rationale::new(vec![3, 1, 3, 0], RationaleSource::Topk);
        assert_eq!(r.indices, vec![0, 1, 3]);
        assert!(r.validate(4).is_ok());
        assert!(matches!(r.validate(3), Err(Error::Bounds { index: 3, length: 3 })));
    }

    #[test]
    fn soft_mask_support_must_match() {
        let mut r = Rationale::new(vec![1], RationaleSource::Spectra);
        r.soft_mask = Some(vec![0.0, 0.4, 0.0]);
        assert!(r.validate(3).is_ok());
        r.soft_mask = Some(vec![0.2, 0.4, 0.0]);
        assert!(r.validate(3).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let records = vec![RationaleRecord {
            id: "a".into(),
            tokens: vec!["x".into(), "y".into()],
            indices: vec![1],
            soft_mask: Some(vec![0.0, 0.75]),
            source: RationaleSource::Spectra,
            ratio: None,
            budget: Some(1),
        }];
        write_manifest(&path, &records).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), records);
        assert_eq!(records[0].selected_tokens().collect::<Vec<_>>(), vec!["y"]);
    }
}
