//! Output tables. Every CSV starts with one `#` provenance line carrying the
//! config hash and the declared deviations.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub deviations: Vec<String>,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# config_hash={}; deviations={}", self.config_hash, self.deviations.join(","))
    }

    pub fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix("# ")?;
        let mut hash = None;
        let mut deviations = Vec::new();
        for part in body.split("; ") {
            if let Some(h) = part.strip_prefix("config_hash=") {
                hash = Some(h.to_string());
            } else if let Some(d) = part.strip_prefix("deviations=") {
                deviations = d.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
            }
        }
        Some(Provenance {
            config_hash: hash?,
            deviations,
        })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Serde(format!("{}: {e}", path.display()))
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, provenance: &Provenance, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = provenance.line().into_bytes();
    buf.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Option<Provenance>, Vec<T>)> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let provenance = raw.lines().next().and_then(Provenance::parse);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(raw.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok((provenance, rows))
}

/// One (dataset, split, method, seed) faithfulness result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub split: String,
    pub method: String,
    pub seed: u64,
    pub aopc_norm_suff: f64,
    pub aopc_norm_comp: f64,
    pub ratio_suff: Option<f64>,
    pub ratio_comp: Option<f64>,
    pub n: usize,
    /// `|`-separated.
    pub flags: String,
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummaryRow {
    pub dataset: String,
    pub split: String,
    pub method: String,
    pub n_seeds: usize,
    pub aopc_norm_suff_mean: f64,
    pub aopc_norm_suff_std: f64,
    pub aopc_norm_comp_mean: f64,
    pub aopc_norm_comp_std: f64,
    pub ratio_suff_mean: Option<f64>,
    pub ratio_suff_std: Option<f64>,
    pub ratio_comp_mean: Option<f64>,
    pub ratio_comp_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub dataset: String,
    /// `fulltext`, `fresh`, `hardkuma` or `spectra`.
    pub model: String,
    pub split: String,
    pub seed: u64,
    pub macro_f1: f64,
    /// Fraction of tokens kept by the extractor, for rationale models.
    pub selection_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummaryRow {
    pub dataset: String,
    pub model: String,
    pub split: String,
    pub n_seeds: usize,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    /// Mean minus the full-text mean on the same split.
    pub retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub split: String,
    pub extractor: String,
    pub seed: u64,
    pub agreement_macro_f1: f64,
    pub n: usize,
    /// Rows (full-text class) joined by `;`, cells by spaces.
    pub confusion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFrequencyRow {
    pub split: String,
    pub source: String,
    pub rank: usize,
    pub token: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub split: String,
    pub date: String,
    /// Days since 1970-01-01.
    pub day: f64,
    /// Per day.
    pub density: f64,
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_SUMMARY_CSV: &str = "results_summary.csv";
pub const SPLIT_STATS_CSV: &str = "split_stats.csv";
pub const DENSITY_CSV: &str = "density.csv";
pub const PERFORMANCE_CSV: &str = "performance.csv";
pub const PERFORMANCE_SUMMARY_CSV: &str = "performance_summary.csv";
pub const AGREEMENT_CSV: &str = "agreement.csv";
pub const TOKEN_FREQUENCY_CSV: &str = "token_frequency.csv";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let prov = Provenance {
            config_hash: "abc".into(),
            deviations: vec!["x".into(), "y".into()],
        };
        let rows = vec![ResultRow {
            dataset: "d".into(),
            split: "syn".into(),
            method: "lime".into(),
            seed: 1,
            aopc_norm_suff: 0.25,
            aopc_norm_comp: 0.1,
            ratio_suff: None,
            ratio_comp: Some(1.5),
            n: 3,
            flags: "a|b".into(),
        }];
        write_csv(&path, &prov, &rows).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(raw.starts_with("# config_hash=abc; deviations=x,y\ndataset,split,method,seed,"));
        let (p, back): (_, Vec<ResultRow>) = read_csv(&path).unwrap();
        assert_eq!(p, Some(prov));
        assert_eq!(back, rows);
    }
}
