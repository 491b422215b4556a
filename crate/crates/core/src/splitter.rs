//! Chronological train/dev/Syn/Asy1/Asy2 splits.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TimestampedExample};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Quantile,
    YearBalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub strategy: SplitStrategy,
    /// train, dev, syn, asy1, asy2
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 5],
    #[serde(default = "default_asy_years")]
    pub n_asy_years: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_fractions() -> [f64; 5] {
    [0.6, 0.1, 0.1, 0.1, 0.1]
}

fn default_asy_years() -> usize {
    2
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            strategy: SplitStrategy::Quantile,
            fractions: default_fractions(),
            n_asy_years: default_asy_years(),
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::Config("split fractions must be positive".into()));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        if self.n_asy_years < 1 {
            return Err(Error::Config("n_asy_years must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Syn,
    Asy1,
    Asy2,
}

impl SplitName {
    pub const ALL: [SplitName; 5] = [
        SplitName::Train,
        SplitName::Dev,
        SplitName::Syn,
        SplitName::Asy1,
        SplitName::Asy2,
    ];
    pub const TEST: [SplitName; 3] = [SplitName::Syn, SplitName::Asy1, SplitName::Asy2];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Syn => "syn",
            SplitName::Asy1 => "asy1",
            SplitName::Asy2 => "asy2",
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: Vec<TimestampedExample>,
    pub dev: Vec<TimestampedExample>,
    pub syn_test: Vec<TimestampedExample>,
    pub asy1_test: Vec<TimestampedExample>,
    pub asy2_test: Vec<TimestampedExample>,
}

impl SplitBundle {
    pub fn get(&self, name: SplitName) -> &[TimestampedExample] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Syn => &self.syn_test,
            SplitName::Asy1 => &self.asy1_test,
            SplitName::Asy2 => &self.asy2_test,
        }
    }

    pub fn parts(&self) -> impl Iterator<Item = (SplitName, &[TimestampedExample])> {
        SplitName::ALL.into_iter().map(move |n| (n, self.get(n)))
    }

    pub fn counts(&self) -> [usize; 5] {
        SplitName::ALL.map(|n| self.get(n).len())
    }

    /// (start, end, span days) of one split, `None` when it is empty.
    pub fn span(&self, name: SplitName) -> Option<(NaiveDate, NaiveDate, i64)> {
        let part = self.get(name);
        let start = part.iter().map(|e| e.day()).min()?;
        let end = part.iter().map(|e| e.day()).max()?;
        Some((start, end, (end - start).num_days()))
    }
}

fn round_count(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction).round() as usize
}

/// Randomly partitions `block` into train/dev/syn with the first three
/// fractions renormalized; syn takes the rounding remainder.
fn partition_block(
    block: Vec<TimestampedExample>,
    fractions: &[f64; 5],
    seed_value: u64,
) -> (Vec<TimestampedExample>, Vec<TimestampedExample>, Vec<TimestampedExample>) {
    let n = block.len();
    let total = fractions[0] + fractions[1] + fractions[2];
    let n_train = round_count(n, fractions[0] / total).min(n);
    let n_dev = round_count(n, fractions[1] / total).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng_for(seed_value, &["split-partition"]));
    let mut assignment = vec![2u8; n];
    for &i in &order[..n_train] {
        assignment[i] = 0;
    }
    for &i in &order[n_train..n_train + n_dev] {
        assignment[i] = 1;
    }
    let (mut train, mut dev, mut syn) = (Vec::new(), Vec::new(), Vec::new());
    for (ex, a) in block.into_iter().zip(assignment) {
        match a {
            0 => train.push(ex),
            1 => dev.push(ex),
            _ => syn.push(ex),
        }
    }
    (train, dev, syn)
}

/// Examples in chronological order; same-day ties keep input order.
fn chronological(corpus: &Corpus) -> Vec<TimestampedExample> {
    let mut sorted = corpus.examples.clone();
    sorted.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
    sorted
}

pub fn chronological_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitBundle> {
    spec.validate()?;
    let first = corpus.examples.first().map(|e| e.timestamp);
    if corpus.examples.iter().all(|e| Some(e.timestamp) == first) {
        return Err(Error::DegenerateSpan("all timestamps are identical".into()));
    }
    match spec.strategy {
        SplitStrategy::Quantile => quantile_split(corpus, spec),
        SplitStrategy::YearBalanced => year_balanced_split(corpus, spec),
    }
}

fn quantile_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitBundle> {
    let n = corpus.len();
    if n < 10 {
        return Err(Error::InfeasibleSplit(format!("quantile split needs >= 10 examples, got {n}")));
    }
    let mut sorted = chronological(corpus);
    let n_asy2 = round_count(n, spec.fractions[4]).max(1);
    let n_asy1 = round_count(n, spec.fractions[3]).max(1);
    if n_asy1 + n_asy2 + 3 > n {
        return Err(Error::InfeasibleSplit("too few examples for the asynchronous blocks".into()));
    }
    let asy2 = sorted.split_off(n - n_asy2);
    let asy1 = sorted.split_off(sorted.len() - n_asy1);
    let (train, dev, syn) = partition_block(sorted, &spec.fractions, spec.seed);
    Ok(SplitBundle {
        train,
        dev,
        syn_test: syn,
        asy1_test: asy1,
        asy2_test: asy2,
    })
}

fn year_balanced_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitBundle> {
    let mut by_year: BTreeMap<i32, Vec<TimestampedExample>> = BTreeMap::new();
    for ex in chronological(corpus) {
        by_year.entry(ex.timestamp.year()).or_default().push(ex);
    }
    if by_year.len() < spec.n_asy_years + 1 {
        return Err(Error::InfeasibleSplit(format!(
            "year-balanced split needs >= {} distinct years, got {}",
            spec.n_asy_years + 1,
            by_year.len()
        )));
    }
    let per_year = by_year.values().map(Vec::len).min().unwrap_or(0);

    let mut years: Vec<Vec<TimestampedExample>> = Vec::with_capacity(by_year.len());
    for (year, examples) in by_year {
        let mut idx: Vec<usize> = (0..examples.len()).collect();
        idx.shuffle(&mut seed::rng_for(spec.seed, &["split-year", &year.to_string()]));
        let mut keep = idx[..per_year].to_vec();
        keep.sort_unstable();
        years.push(keep.into_iter().map(|i| examples[i].clone()).collect());
    }

    let asy2 = years.pop().unwrap_or_default();
    let mut asy1 = Vec::new();
    for year in years.drain(years.len() - (spec.n_asy_years - 1)..) {
        asy1.extend(year);
    }
    let pooled: Vec<TimestampedExample> = years.into_iter().flatten().collect();
    let (train, dev, syn) = partition_block(pooled, &spec.fractions, spec.seed);
    Ok(SplitBundle {
        train,
        dev,
        syn_test: syn,
        asy1_test: asy1,
        asy2_test: asy2,
    })
}

/// One row of the split statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStatsRow {
    pub split: SplitName,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub span_days: Option<i64>,
    pub median: Option<NaiveDate>,
    pub iqr_days: Option<i64>,
    pub count: usize,
}

/// Linear-interpolation percentile over sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn stats_for(split: SplitName, examples: &[TimestampedExample]) -> SplitStatsRow {
    if examples.is_empty() {
        return SplitStatsRow {
            split,
            start: None,
            end: None,
            span_days: None,
            median: None,
            iqr_days: None,
            count: 0,
        };
    }
    let mut days: Vec<i32> = examples.iter().map(|e| e.day().num_days_from_ce()).collect();
    days.sort_unstable();
    let values: Vec<f64> = days.iter().map(|&d| d as f64).collect();
    let to_date = |d: f64| NaiveDate::from_num_days_from_ce_opt(d.round() as i32);
    let start = to_date(values[0]);
    let end = to_date(values[values.len() - 1]);
    SplitStatsRow {
        split,
        start,
        end,
        span_days: Some((days[days.len() - 1] - days[0]) as i64),
        median: to_date(percentile(&values, 0.5)),
        iqr_days: Some((percentile(&values, 0.75) - percentile(&values, 0.25)).round() as i64),
        count: examples.len(),
    }
}

pub fn split_stats(bundle: &SplitBundle) -> Vec<SplitStatsRow> {
    bundle.parts().map(|(name, part)| stats_for(name, part)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn daily(n: usize, start: NaiveDate) -> Corpus {
        let examples = (0..n)
            .map(|i| TimestampedExample {
                id: format!("e{i}"),
                text: format!("t{i}"),
                label: i % 2,
                timestamp: (start + Duration::days(i as i64)).and_hms_opt(0, 0, 0).unwrap().and_utc(),
            })
            .collect();
        Corpus::new("daily", vec!["a".into(), "b".into()], examples).unwrap()
    }

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn ten_daily_examples() {
        let c = daily(10, ymd(2020, 1, 1));
        let b = chronological_split(&c, &SplitSpec::default()).unwrap();
        assert_eq!(b.asy2_test.len(), 1);
        assert_eq!(b.asy2_test[0].id, "e9");
        assert_eq!(b.asy1_test[0].id, "e8");
        assert_eq!([b.train.len(), b.dev.len(), b.syn_test.len()], [6, 1, 1]);
    }

    #[test]
    fn large_corpus_counts() {
        // 169,623 examples: only counts matter, so reuse a cheap daily corpus
        let c = daily(169_623, ymd(1900, 1, 1));
        let b = chronological_split(&c, &SplitSpec::default()).unwrap();
        assert_eq!(b.train.len(), 101_774);
        assert_eq!(b.syn_test.len(), 16_963);
        assert_eq!(b.asy1_test.len(), 16_962);
        assert_eq!(b.asy2_test.len(), 16_962);
        assert_eq!(b.counts().iter().sum::<usize>(), 169_623);
    }

    #[test]
    fn too_small_or_degenerate() {
        let c = daily(9, ymd(2020, 1, 1));
        assert!(matches!(
            chronological_split(&c, &SplitSpec::default()),
            Err(Error::InfeasibleSplit(_))
        ));
        let mut c = daily(20, ymd(2020, 1, 1));
        let ts = c.examples[0].timestamp;
        for e in &mut c.examples {
            e.timestamp = ts;
        }
        assert!(matches!(
            chronological_split(&c, &SplitSpec::default()),
            Err(Error::DegenerateSpan(_))
        ));
        let bad = SplitSpec {
            fractions: [0.5, 0.1, 0.1, 0.1, 0.1],
            ..SplitSpec::default()
        };
        assert!(chronological_split(&daily(20, ymd(2020, 1, 1)), &bad).is_err());
    }

    #[test]
    fn stats_span_and_single() {
        let ex = |d: NaiveDate| TimestampedExample {
            id: "x".into(),
            text: "x".into(),
            label: 0,
            timestamp: d.and_hms_opt(0, 0, 0).unwrap().and_utc(),
        };
        let row = stats_for(SplitName::Train, &[ex(ymd(2004, 8, 18)), ex(ymd(2006, 12, 20))]);
        assert_eq!(row.span_days, Some(854));
        let single = stats_for(SplitName::Syn, &[ex(ymd(2007, 3, 1))]);
        assert_eq!(single.span_days, Some(0));
        assert_eq!(single.iqr_days, Some(0));
        assert_eq!(single.median, Some(ymd(2007, 3, 1)));
        let empty = stats_for(SplitName::Asy1, &[]);
        assert_eq!(empty.count, 0);
        assert!(empty.start.is_none());
    }

    #[test]
    fn uniform_daily_iqr() {
        // oracle: for days 0..99 the quartiles are 24.75 and 74.25
        let c = daily(100, ymd(2020, 1, 1));
        let row = stats_for(SplitName::Train, &c.examples);
        let expected = (0.75f64 * 99.0 - 0.25 * 99.0).round() as i64;
        assert!((row.iqr_days.unwrap() - 50).abs() <= 1);
        assert_eq!(row.iqr_days.unwrap(), expected);
    }

    #[test]
    fn year_balanced_equalizes_years() {
        let mut examples = Vec::new();
        let sizes = [(2004, 40), (2005, 55), (2006, 31), (2007, 60), (2008, 33)];
        for (year, n) in sizes {
            for i in 0..n {
                examples.push(TimestampedExample {
                    id: format!("{year}-{i}"),
                    text: "x".into(),
                    label: i % 2,
                    timestamp: (ymd(year, 1, 1) + Duration::days(i as i64 * 3))
                        .and_hms_opt(0, 0, 0)
                        .unwrap()
                        .and_utc(),
                });
            }
        }
        let c = Corpus::new("news", vec!["a".into(), "b".into()], examples).unwrap();
        let spec = SplitSpec {
            strategy: SplitStrategy::YearBalanced,
            ..SplitSpec::default()
        };
        let b = chronological_split(&c, &spec).unwrap();
        assert_eq!(b.asy1_test.len(), 31);
        assert_eq!(b.asy2_test.len(), 31);
        assert!(b.asy1_test.iter().all(|e| e.timestamp.year() == 2007));
        assert!(b.asy2_test.iter().all(|e| e.timestamp.year() == 2008));
        let pooled = b.train.len() + b.dev.len() + b.syn_test.len();
        assert_eq!(pooled, 93);
        for year in 2004..=2006 {
            let count = [&b.train, &b.dev, &b.syn_test]
                .iter()
                .flat_map(|s| s.iter())
                .filter(|e| e.timestamp.year() == year)
                .count();
            assert_eq!(count, 31);
        }
    }
}
