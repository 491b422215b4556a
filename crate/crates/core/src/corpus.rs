//! Timestamped classification corpora: the canonical line-delimited reader
//! and writer, plus a generator for synthetic corpora with planted drift.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampedExample {
    pub id: String,
    pub text: String,
    pub label: usize,
    pub timestamp: DateTime<Utc>,
}

impl TimestampedExample {
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub label_names: Vec<String>,
    pub examples: Vec<TimestampedExample>,
}

impl Corpus {
    /// Builds a corpus and checks its invariants.
    pub fn new(
        name: impl Into<String>,
        label_names: Vec<String>,
        examples: Vec<TimestampedExample>,
    ) -> Result<Self> {
        let corpus = Corpus {
            name: name.into(),
            label_names,
            examples,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let n_classes = self.label_names.len();
        let mut labels = BTreeSet::new();
        let mut stamps = BTreeSet::new();
        for ex in &self.examples {
            if ex.label >= n_classes {
                return Err(Error::InvalidCorpus(format!(
                    "example {} has label {} but only {} classes",
                    ex.id, ex.label, n_classes
                )));
            }
            if ex.text.trim().is_empty() {
                return Err(Error::InvalidCorpus(format!("example {} has empty text", ex.id)));
            }
            labels.insert(ex.label);
            stamps.insert(ex.timestamp);
        }
        if labels.len() < 2 {
            return Err(Error::InvalidCorpus("fewer than 2 distinct labels".into()));
        }
        if stamps.len() < 2 {
            return Err(Error::InvalidCorpus("fewer than 2 distinct timestamps".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

/// Parses an ISO-8601 date or date-time. Naive date-times are taken as UTC.
pub fn parse_timestamp(value: &str) -> Option<DateTime<Utc>> {
    let value = value.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(value) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(value, fmt) {
            return Some(naive.and_utc());
        }
    }
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|n| n.and_utc())
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&name, &raw),
    }
}

/// Parses line-delimited records. Labels are mapped to dense indices in
/// order of first appearance.
pub fn parse_jsonl(name: &str, raw: &str) -> Result<Corpus> {
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut label_names = Vec::new();
    let mut examples = Vec::new();

    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "record is not an object".into(),
        })?;
        let text = match obj.get("text") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(Error::Schema(format!("line {line_no}: missing string field `text`"))),
        };
        let label_name = match obj.get("label") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) if n.is_i64() || n.is_u64() => n.to_string(),
            _ => {
                return Err(Error::Schema(format!(
                    "line {line_no}: missing or non-string/integer field `label`"
                )))
            }
        };
        let ts_raw = match obj.get("timestamp") {
            Some(Value::String(s)) => s.clone(),
            _ => {
                return Err(Error::Schema(format!(
                    "line {line_no}: missing string field `timestamp`"
                )))
            }
        };
        let timestamp = parse_timestamp(&ts_raw).ok_or(Error::Timestamp {
            line: line_no,
            value: ts_raw,
        })?;
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => line_no.to_string(),
        };
        let next = label_index.len();
        let label = *label_index.entry(label_name.clone()).or_insert_with(|| {
            label_names.push(label_name);
            next
        });
        examples.push(TimestampedExample {
            id,
            text,
            label,
            timestamp,
        });
    }
    if examples.is_empty() {
        return Err(Error::Schema("corpus file contains no records".into()));
    }
    Corpus::new(name, label_names, examples)
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
    timestamp: String,
}

pub fn write_examples(
    path: impl AsRef<Path>,
    examples: &[TimestampedExample],
    label_names: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in examples {
        let rec = RecordOut {
            id: &ex.id,
            text: &ex.text,
            label: &label_names[ex.label],
            timestamp: format_timestamp(&ex.timestamp),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_examples(path, &corpus.examples, &corpus.label_names)
}

/// Loads a split file against a known label space, so label indices agree
/// with the corpus the split came from even if some class is absent.
pub fn load_examples(path: impl AsRef<Path>, label_names: &[String]) -> Result<Vec<TimestampedExample>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let get = |k: &str| value.get(k).and_then(Value::as_str);
        let label_name = match value.get("label") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(Error::Schema(format!("line {}: missing `label`", i + 1))),
        };
        let label = *index
            .get(label_name.as_str())
            .ok_or_else(|| Error::Schema(format!("line {}: unknown label {label_name:?}", i + 1)))?;
        let ts_raw = get("timestamp")
            .ok_or_else(|| Error::Schema(format!("line {}: missing `timestamp`", i + 1)))?;
        let timestamp = parse_timestamp(ts_raw).ok_or(Error::Timestamp {
            line: i + 1,
            value: ts_raw.to_string(),
        })?;
        out.push(TimestampedExample {
            id: get("id").unwrap_or_default().to_string(),
            text: get("text")
                .ok_or_else(|| Error::Schema(format!("line {}: missing `text`", i + 1)))?
                .to_string(),
            label,
            timestamp,
        });
    }
    Ok(out)
}

/// Parameters of a synthetic corpus with planted concept drift.
///
/// Each class owns a disjoint block of indicative tokens. After
/// `drift_date`, a `swap_fraction` of every class block moves to the next
/// class (class `c` tokens start indicating `(c + 1) % n_classes`). Swapped
/// tokens are rare before the drift and common after it, scaled by
/// `swapped_boost`, which models vocabulary whose usage shifts over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub vocab_size: usize,
    pub n_examples: usize,
    pub n_classes: usize,
    pub drift_date: NaiveDate,
    pub swap_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_end")]
    pub end_date: NaiveDate,
    /// Probability that a token is drawn from the indicative pool.
    #[serde(default = "default_signal_rate")]
    pub signal_rate: f64,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_boost")]
    pub swapped_boost: f64,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).unwrap()
}
fn default_end() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 12, 31).unwrap()
}
fn default_signal_rate() -> f64 {
    0.25
}
fn default_min_len() -> usize {
    12
}
fn default_max_len() -> usize {
    24
}
fn default_boost() -> f64 {
    4.0
}

impl DriftSpec {
    /// A spec with default span 2010-01-01..2014-12-31 and drift at the
    /// 80% point of the span.
    pub fn new(vocab_size: usize, n_examples: usize, n_classes: usize, swap_fraction: f64, seed: u64) -> Self {
        let start = default_start();
        let end = default_end();
        let span = (end - start).num_days();
        DriftSpec {
            vocab_size,
            n_examples,
            n_classes,
            drift_date: start + Duration::days(span * 4 / 5),
            swap_fraction,
            seed,
            start_date: start,
            end_date: end,
            signal_rate: default_signal_rate(),
            min_len: default_min_len(),
            max_len: default_max_len(),
            swapped_boost: default_boost(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.n_examples == 0 {
            return Err(Error::InfeasibleSpec("vocab_size and n_examples must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InfeasibleSpec("need at least 2 classes".into()));
        }
        if self.n_classes > self.vocab_size / 4 {
            return Err(Error::InfeasibleSpec(format!(
                "{} classes need a vocabulary of at least {} tokens",
                self.n_classes,
                self.n_classes * 4
            )));
        }
        if !(0.0..=1.0).contains(&self.swap_fraction) {
            return Err(Error::InfeasibleSpec("swap_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.signal_rate) {
            return Err(Error::InfeasibleSpec("signal_rate must lie in [0, 1]".into()));
        }
        if self.start_date >= self.end_date
            || self.drift_date < self.start_date
            || self.drift_date > self.end_date
        {
            return Err(Error::InfeasibleSpec("drift_date must lie inside the generated span".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InfeasibleSpec("invalid length range".into()));
        }
        if self.swapped_boost < 1.0 {
            return Err(Error::InfeasibleSpec("swapped_boost must be >= 1".into()));
        }
        Ok(())
    }
}

/// Token roles of a drifted corpus, recoverable from its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftVocabulary {
    /// `indicative[c]` are the pre-drift indicative tokens of class `c`.
    pub indicative: Vec<Vec<String>>,
    /// Positions within each class block that swap at the drift date.
    pub swapped_positions: Vec<usize>,
    pub noise: Vec<String>,
}

impl DriftVocabulary {
    pub fn from_spec(spec: &DriftSpec) -> Result<Self> {
        spec.validate()?;
        let per_class = spec.vocab_size / (2 * spec.n_classes);
        let token = |i: usize| format!("tok{i:04}");
        let indicative: Vec<Vec<String>> = (0..spec.n_classes)
            .map(|c| (0..per_class).map(|j| token(c * per_class + j)).collect())
            .collect();
        let noise = (spec.n_classes * per_class..spec.vocab_size).map(token).collect();
        let n_swap = (spec.swap_fraction * per_class as f64).round() as usize;
        let mut positions: Vec<usize> = (0..per_class).collect();
        positions.shuffle(&mut seed::rng_for(spec.seed, &["drift-swap"]));
        let mut swapped_positions = positions[..n_swap].to_vec();
        swapped_positions.sort_unstable();
        Ok(DriftVocabulary {
            indicative,
            swapped_positions,
            noise,
        })
    }

    /// Tokens that indicate a different class after the drift date.
    pub fn post_drift_tokens(&self) -> Vec<String> {
        self.indicative
            .iter()
            .flat_map(|block| self.swapped_positions.iter().map(move |&j| block[j].clone()))
            .collect()
    }

    /// Weighted indicative pool of `class` before or after the drift.
    fn pool(&self, class: usize, post_drift: bool, boost: f64) -> Vec<(&str, f64)> {
        let n_classes = self.indicative.len();
        let per_class = self.indicative[0].len();
        let mut pool = Vec::with_capacity(per_class);
        for j in 0..per_class {
            let swapped = self.swapped_positions.binary_search(&j).is_ok();
            if !swapped {
                pool.push((self.indicative[class][j].as_str(), 1.0));
            } else if post_drift {
                let source = (class + n_classes - 1) % n_classes;
                pool.push((self.indicative[source][j].as_str(), boost));
            } else {
                pool.push((self.indicative[class][j].as_str(), 1.0 / boost));
            }
        }
        pool
    }
}

fn draw_weighted<'a, R: Rng>(rng: &mut R, pool: &[(&'a str, f64)], total: f64) -> &'a str {
    let mut target = rng.random::<f64>() * total;
    for (tok, w) in pool {
        if target < *w {
            return tok;
        }
        target -= w;
    }
    pool[pool.len() - 1].0
}

pub fn generate_drifted_corpus(spec: &DriftSpec) -> Result<Corpus> {
    let vocab = DriftVocabulary::from_spec(spec)?;
    let mut rng = seed::rng_for(spec.seed, &["drift-corpus"]);
    let span = (spec.end_date - spec.start_date).num_days();

    let pools: Vec<[(Vec<(&str, f64)>, f64); 2]> = (0..spec.n_classes)
        .map(|c| {
            let pre = vocab.pool(c, false, spec.swapped_boost);
            let post = vocab.pool(c, true, spec.swapped_boost);
            let pre_total = pre.iter().map(|p| p.1).sum();
            let post_total = post.iter().map(|p| p.1).sum();
            [(pre, pre_total), (post, post_total)]
        })
        .collect();

    let mut rows: Vec<(NaiveDate, usize, String)> = Vec::with_capacity(spec.n_examples);
    for _ in 0..spec.n_examples {
        let day = spec.start_date + Duration::days(rng.random_range(0..=span));
        let label = rng.random_range(0..spec.n_classes);
        let post = day > spec.drift_date;
        let (pool, total) = &pools[label][post as usize];
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            if rng.random::<f64>() < spec.signal_rate {
                words.push(draw_weighted(&mut rng, pool, *total));
            } else {
                words.push(vocab.noise[rng.random_range(0..vocab.noise.len())].as_str());
            }
        }
        rows.push((day, label, words.join(" ")));
    }
    // chronological file order; the sort is stable so equal days keep draw order
    rows.sort_by_key(|r| r.0);

    let examples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (day, label, text))| TimestampedExample {
            id: format!("ex{i:06}"),
            text,
            label,
            timestamp: day.and_hms_opt(0, 0, 0).unwrap().and_utc(),
        })
        .collect();
    let label_names = (0..spec.n_classes).map(|c| format!("class{c}")).collect();
    Corpus::new(format!("drift-s{}", spec.swap_fraction), label_names, examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_appearance_label_mapping() {
        let raw = r#"{"text":"good","label":"pos","timestamp":"2008-02-20"}
{"text":"bad","label":"neg","timestamp":"2008-02-21"}
{"text":"fine","label":"pos","timestamp":"2008-02-22"}"#;
        let c = parse_jsonl("t", raw).unwrap();
        assert_eq!(c.label_names, vec!["pos", "neg"]);
        assert_eq!(c.examples.iter().map(|e| e.label).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert_eq!(c.examples[0].day(), NaiveDate::from_ymd_opt(2008, 2, 20).unwrap());
        assert_eq!(c.examples[0].id, "1");
    }

    #[test]
    fn integer_labels_and_datetimes() {
        let raw = r#"{"id":"a","text":"x","label":3,"timestamp":"2004-08-18T10:20:30Z"}
{"id":"b","text":"y","label":1,"timestamp":"2004-08-19 01:02:03"}"#;
        let c = parse_jsonl("t", raw).unwrap();
        assert_eq!(c.label_names, vec!["3", "1"]);
        assert_eq!(format_timestamp(&c.examples[0].timestamp), "2004-08-18T10:20:30Z");
    }

    #[test]
    fn error_paths() {
        assert!(matches!(parse_jsonl("t", ""), Err(Error::Schema(_))));
        let bad = "{\"text\":\"a\",\"label\":\"x\",\"timestamp\":\"2008-01-01\"}\nnot json";
        assert!(matches!(parse_jsonl("t", bad), Err(Error::Parse { line: 2, .. })));
        let no_label = r#"{"text":"a","timestamp":"2008-01-01"}"#;
        assert!(matches!(parse_jsonl("t", no_label), Err(Error::Schema(_))));
        let bad_ts = r#"{"text":"a","label":"x","timestamp":"yesterday"}"#;
        match parse_jsonl("t", bad_ts) {
            Err(Error::Timestamp { line, value }) => {
                assert_eq!(line, 1);
                assert_eq!(value, "yesterday");
            }
            other => panic!("unexpected {other:?}"),
        }
        let one_label = "{\"text\":\"a\",\"label\":\"x\",\"timestamp\":\"2008-01-01\"}\n{\"text\":\"b\",\"label\":\"x\",\"timestamp\":\"2008-01-02\"}";
        assert!(matches!(parse_jsonl("t", one_label), Err(Error::InvalidCorpus(_))));
        let blank = "{\"text\":\"  \",\"label\":\"x\",\"timestamp\":\"2008-01-01\"}";
        assert!(matches!(parse_jsonl("t", blank), Err(Error::InvalidCorpus(_))));
    }

    #[test]
    fn drift_spec_feasibility() {
        let spec = DriftSpec::new(12, 10, 4, 0.5, 1);
        assert!(matches!(generate_drifted_corpus(&spec), Err(Error::InfeasibleSpec(_))));
        let mut spec = DriftSpec::new(100, 10, 2, 0.5, 1);
        spec.drift_date = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        assert!(generate_drifted_corpus(&spec).is_err());
        spec = DriftSpec::new(100, 10, 2, 1.5, 1);
        assert!(generate_drifted_corpus(&spec).is_err());
    }

    #[test]
    fn drifted_corpus_is_deterministic() {
        let spec = DriftSpec::new(100, 300, 3, 0.5, 9);
        let a = generate_drifted_corpus(&spec).unwrap();
        let b = generate_drifted_corpus(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert!(a.examples.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn swapped_tokens_change_class() {
        let spec = DriftSpec::new(40, 10, 2, 1.0, 3);
        let vocab = DriftVocabulary::from_spec(&spec).unwrap();
        assert_eq!(vocab.swapped_positions.len(), 10);
        let post = vocab.pool(0, true, spec.swapped_boost);
        assert!(post.iter().all(|(t, _)| vocab.indicative[1].iter().any(|x| x == t)));
    }
}
