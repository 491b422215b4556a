//! Corpora with planted class-determining tokens, for checking that
//! extractors and rationale models find what was put there.

use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TimestampedExample};
use crate::error::{Error, Result};
use crate::seed;

/// How the signal positions determine the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRule {
    /// Every signal position carries a token of the label's class.
    #[default]
    ClassToken,
    /// Two classes; each signal position carries one of two types and the
    /// label is the parity of the second type's count, so no single signal
    /// token decides the label.
    Parity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_examples: usize,
    pub n_classes: usize,
    /// Tokens per example.
    pub length: usize,
    /// Positions per example that carry a signal token of the label.
    pub signal_positions: usize,
    pub signal_types_per_class: usize,
    pub noise_types: usize,
    #[serde(default)]
    pub rule: SignalRule,
    pub seed: u64,
}

impl PlantedSpec {
    /// 20 token types, 2 of which determine the class through their parity
    /// at 2 of 10 positions per example.
    pub fn gate_task(n_examples: usize, seed: u64) -> Self {
        PlantedSpec {
            n_examples,
            n_classes: 2,
            length: 10,
            signal_positions: 2,
            signal_types_per_class: 1,
            noise_types: 18,
            rule: SignalRule::Parity,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_examples == 0 || self.n_classes < 2 || self.length == 0 || self.signal_types_per_class == 0 {
            return Err(Error::InfeasibleSpec("planted corpus dimensions must be positive".into()));
        }
        if self.signal_positions == 0 || self.signal_positions > self.length {
            return Err(Error::InfeasibleSpec("signal positions must lie in 1..=length".into()));
        }
        if self.rule == SignalRule::Parity && (self.n_classes != 2 || self.signal_types_per_class != 1) {
            return Err(Error::InfeasibleSpec("parity rule needs 2 classes with one type each".into()));
        }
        if self.noise_types == 0 && self.signal_positions < self.length {
            return Err(Error::InfeasibleSpec("noise positions need noise tokens".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// Determinative token types, grouped by class under the class-token
    /// rule; under the parity rule group `k` holds the `k`-th type.
    pub signal_tokens: Vec<Vec<String>>,
}

impl PlantedCorpus {
    pub fn signal_set(&self) -> BTreeSet<&str> {
        self.signal_tokens.iter().flatten().map(String::as_str).collect()
    }

    pub fn is_signal(&self, token: &str) -> bool {
        self.signal_tokens.iter().flatten().any(|t| t == token)
    }
}

pub fn signal_token(class: usize, k: usize) -> String {
    format!("sig{class}x{k}")
}

pub fn noise_token(k: usize) -> String {
    format!("noise{k:03}")
}

/// Balanced labels; one example per day from 2015-01-01.
pub fn planted_corpus(spec: &PlantedSpec) -> Result<PlantedCorpus> {
    spec.validate()?;
    let mut rng = seed::rng_for(spec.seed, &["planted"]);
    let signal_tokens: Vec<Vec<String>> = (0..spec.n_classes)
        .map(|c| (0..spec.signal_types_per_class).map(|k| signal_token(c, k)).collect())
        .collect();
    let start = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
    let mut examples = Vec::with_capacity(spec.n_examples);
    let mut positions: Vec<usize> = (0..spec.length).collect();
    for i in 0..spec.n_examples {
        let label = i % spec.n_classes;
        positions.shuffle(&mut rng);
        let mut tokens: Vec<String> = (0..spec.length)
            .map(|_| noise_token(rng.random_range(0..spec.noise_types.max(1))))
            .collect();
        match spec.rule {
            SignalRule::ClassToken => {
                for &p in &positions[..spec.signal_positions] {
                    tokens[p] = signal_tokens[label][rng.random_range(0..spec.signal_types_per_class)].clone();
                }
            }
            SignalRule::Parity => {
                let (last, rest) = positions[..spec.signal_positions].split_last().expect("at least one signal position");
                let mut ones = 0;
                for &p in rest {
                    let k = rng.random_range(0..2);
                    ones += k;
                    tokens[p] = signal_tokens[k][0].clone();
                }
                tokens[*last] = signal_tokens[(label + ones) % 2][0].clone();
            }
        }
        examples.push(TimestampedExample {
            id: format!("p{i:06}"),
            text: tokens.join(" "),
            label,
            timestamp: start + Duration::days(i as i64),
        });
    }
    let label_names = (0..spec.n_classes).map(|c| format!("class{c}")).collect();
    let corpus = Corpus::new("planted", label_names, examples)?;
    Ok(PlantedCorpus { corpus, signal_tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_task_shape() {
        let p = planted_corpus(&PlantedSpec::gate_task(50, 1)).unwrap();
        let mut types = BTreeSet::new();
        for ex in &p.corpus.examples {
            let toks: Vec<&str> = ex.text.split(' ').collect();
            assert_eq!(toks.len(), 10);
            assert_eq!(toks.iter().filter(|t| p.is_signal(t)).count(), 2);
            let ones = toks.iter().filter(|t| **t == signal_token(1, 0)).count();
            assert_eq!(ones % 2, ex.label);
            types.extend(toks.iter().map(|t| t.to_string()));
        }
        assert!(types.len() <= 20);
        assert_eq!(p.signal_set().len(), 2);
    }

    #[test]
    fn class_token_rule() {
        let spec = PlantedSpec {
            rule: SignalRule::ClassToken,
            signal_types_per_class: 3,
            n_classes: 3,
            ..PlantedSpec::gate_task(30, 2)
        };
        let p = planted_corpus(&spec).unwrap();
        for ex in &p.corpus.examples {
            let own: Vec<&str> = ex.text.split(' ').filter(|t| p.is_signal(t)).collect();
            assert_eq!(own.len(), 2);
            assert!(own.iter().all(|t| p.signal_tokens[ex.label].iter().any(|s| s == t)));
        }
    }

    #[test]
    fn deterministic() {
        let spec = PlantedSpec::gate_task(30, 9);
        assert_eq!(planted_corpus(&spec).unwrap(), planted_corpus(&spec).unwrap());
    }
}
