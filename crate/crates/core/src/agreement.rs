//! How well a rationale-trained classifier reproduces the full-text
//! model's predictions, scoring those predictions as gold labels.

use serde::{Deserialize, Serialize};

use crate::corpus::TimestampedExample;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::TextClassifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub split: String,
    pub extractor_method: String,
    pub macro_f1_vs_fulltext: f64,
    pub n: usize,
    /// `confusion[fulltext][layperson]`.
    pub confusion: Vec<Vec<usize>>,
}

impl AgreementRecord {
    /// Confusion matrix as rows joined by `;`, cells by a space.
    pub fn confusion_string(&self) -> String {
        self.confusion
            .iter()
            .map(|row| row.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Agreement of two prediction sequences, the first treated as gold.
pub fn agreement_from_predictions(
    fulltext: &[usize],
    layperson: &[usize],
    n_classes: usize,
    split: &str,
    extractor_method: &str,
) -> Result<AgreementRecord> {
    if fulltext.is_empty() {
        return Err(Error::Empty("agreement needs at least one example".into()));
    }
    let confusion = metrics::confusion_matrix(fulltext, layperson, n_classes)?;
    Ok(AgreementRecord {
        split: split.to_string(),
        extractor_method: extractor_method.to_string(),
        macro_f1_vs_fulltext: metrics::macro_f1_from_confusion(&confusion),
        n: fulltext.len(),
        confusion,
    })
}

/// Dataset labels are ignored; the full-text predictions are the targets.
pub fn layperson_agreement<L, F>(
    layperson: &L,
    fulltext: &F,
    test: &[TimestampedExample],
    split: &str,
    extractor_method: &str,
) -> Result<AgreementRecord>
where
    L: TextClassifier + ?Sized,
    F: TextClassifier + ?Sized,
{
    if layperson.n_labels() != fulltext.n_labels() {
        return Err(Error::LabelSpace(layperson.n_labels(), fulltext.n_labels()));
    }
    let mut gold = Vec::with_capacity(test.len());
    let mut pred = Vec::with_capacity(test.len());
    for ex in test {
        gold.push(fulltext.classify(&ex.id, &ex.text)?.predicted_class);
        pred.push(layperson.classify(&ex.id, &ex.text)?.predicted_class);
    }
    agreement_from_predictions(&gold, &pred, fulltext.n_labels(), split, extractor_method)
}

/// Monte-Carlo estimate of the macro-F1 (percent) a uniform random
/// predictor scores against `n` gold labels spread evenly over
/// `n_classes` classes.
pub fn simulated_random_agreement(n_classes: usize, n: usize, trials: usize, seed_value: u64) -> f64 {
    use rand::Rng;
    let mut rng = crate::seed::rng_for(seed_value, &["agreement-sim"]);
    let gold: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    let mut total = 0.0;
    for _ in 0..trials {
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        total += metrics::macro_f1(&gold, &pred, n_classes).expect("labels in range");
    }
    total / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_agreement_is_perfect() {
        let p = vec![0, 1, 2, 1, 0];
        let r = agreement_from_predictions(&p, &p, 3, "syn", "scaled_attention").unwrap();
        assert_eq!(r.macro_f1_vs_fulltext, 100.0);
        assert_eq!(r.n, 5);
        let rows: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(rows, vec![2, 2, 1]);
        assert_eq!(r.confusion_string(), "2 0 0;0 2 0;0 0 1");
    }

    #[test]
    fn invariant_to_consistent_relabeling() {
        let a = vec![0, 1, 2, 1, 0, 2, 2];
        let b = vec![0, 2, 2, 1, 1, 2, 0];
        let perm = [2, 0, 1];
        let pa: Vec<usize> = a.iter().map(|&x| perm[x]).collect();
        let pb: Vec<usize> = b.iter().map(|&x| perm[x]).collect();
        let r1 = agreement_from_predictions(&a, &b, 3, "s", "m").unwrap();
        let r2 = agreement_from_predictions(&pa, &pb, 3, "s", "m").unwrap();
        assert!((r1.macro_f1_vs_fulltext - r2.macro_f1_vs_fulltext).abs() < 1e-12);
    }
}
