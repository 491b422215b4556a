use serde::{Deserialize, Serialize};

use crate::corpus::TimestampedExample;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::TextClassifier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub macro_f1_selective: f64,
    pub macro_f1_fulltext: f64,
    /// Selective minus full-text, in F1 points.
    pub retention: f64,
}

/// Macro-F1 (percent) of `model` against gold labels.
pub fn macro_f1_on<M: TextClassifier + ?Sized>(model: &M, test: &[TimestampedExample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test split".into()));
    }
    let mut gold = Vec::with_capacity(test.len());
    let mut pred = Vec::with_capacity(test.len());
    for ex in test {
        gold.push(ex.label);
        pred.push(model.classify(&ex.id, &ex.text)?.predicted_class);
    }
    metrics::macro_f1(&gold, &pred, model.n_labels())
}

pub fn performance_retention<S, F>(selective: &S, fulltext: &F, test: &[TimestampedExample]) -> Result<Retention>
where
    S: TextClassifier + ?Sized,
    F: TextClassifier + ?Sized,
{
    if selective.n_labels() != fulltext.n_labels() {
        return Err(Error::LabelSpace(selective.n_labels(), fulltext.n_labels()));
    }
    let s = macro_f1_on(selective, test)?;
    let f = macro_f1_on(fulltext, test)?;
    Ok(Retention {
        macro_f1_selective: s,
        macro_f1_fulltext: f,
        retention: s - f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prediction;
    use chrono::{TimeZone, Utc};

    struct Constant(usize);

    impl TextClassifier for Constant {
        fn n_labels(&self) -> usize {
            2
        }
        fn classify(&self, _id: &str, _text: &str) -> Result<Prediction> {
            let mut p = vec![0.0; 2];
            p[self.0] = 1.0;
            Ok(Prediction::from_probabilities(p, None))
        }
    }

    fn balanced(n: usize) -> Vec<TimestampedExample> {
        (0..n)
            .map(|i| TimestampedExample {
                id: i.to_string(),
                text: "t".into(),
                label: i % 2,
                timestamp: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            })
            .collect()
    }

    #[test]
    fn identical_models_retain_everything() {
        let r = performance_retention(&Constant(1), &Constant(1), &balanced(10)).unwrap();
        assert_eq!(r.retention, 0.0);
    }

    #[test]
    fn constant_predictor_scores_a_third() {
        let r = performance_retention(&Constant(0), &Constant(1), &balanced(10)).unwrap();
        assert!((r.macro_f1_selective - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(matches!(
            performance_retention(&Constant(0), &Constant(0), &[]),
            Err(Error::Empty(_))
        ));
    }
}
