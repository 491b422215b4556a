//! Two-stage select-then-predict: a post-hoc attribution method picks the
//! top tokens of a trained support model, then a new classifier is trained
//! on those tokens alone.

use super::{Rationale, RationaleRecord, RationaleSource};
use crate::attribution::{attribute, top_k_rationale_with, AttributionConfig, AttributionMethod};
use crate::corpus::TimestampedExample;
use crate::error::{Error, Result};
use crate::model::{
    masked_input, train_on_encoded, AttentionClassifier, Classifier, EncodedInput, LabeledInput, MaskMode,
    Prediction, Predictor, TextClassifier, TrainConfig, TrainingCurve, Vocabulary,
};

/// Fraction of examples whose extraction may fail before training aborts.
pub const MAX_SKIP_FRACTION: f64 = 0.01;

pub trait RationaleExtractor {
    fn extract(&self, id: &str, input: &EncodedInput) -> Result<Rationale>;

    /// Ratio recorded in manifests, when the extractor has one.
    fn ratio(&self) -> Option<f64> {
        None
    }
}

impl<F: Fn(&str, &EncodedInput) -> Result<Rationale>> RationaleExtractor for F {
    fn extract(&self, id: &str, input: &EncodedInput) -> Result<Rationale> {
        self(id, input)
    }
}

/// Top-`ratio` tokens of `method` on the support model, explaining its
/// predicted class.
pub struct MethodExtractor<'a, C: Classifier + ?Sized> {
    pub model: &'a C,
    pub method: AttributionMethod,
    pub ratio: f64,
    pub config: &'a AttributionConfig,
}

impl<C: Classifier + ?Sized> RationaleExtractor for MethodExtractor<'_, C> {
    fn extract(&self, id: &str, input: &EncodedInput) -> Result<Rationale> {
        let target = self.model.predict(input).predicted_class;
        let map = attribute(self.model, input, self.method, target, self.config, id)?;
        let mut r = top_k_rationale_with(&map, self.ratio, self.config.rank_by_absolute);
        r.source = RationaleSource::Fresh;
        Ok(r)
    }

    fn ratio(&self) -> Option<f64> {
        Some(self.ratio)
    }
}

pub struct FreshOutput {
    pub classifier: AttentionClassifier,
    pub curve: TrainingCurve,
    pub train_manifest: Vec<RationaleRecord>,
    pub dev_manifest: Vec<RationaleRecord>,
    pub skipped: Vec<String>,
}

pub fn record_for<E: RationaleExtractor + ?Sized>(
    vocab: &Vocabulary,
    id: &str,
    input: &EncodedInput,
    rationale: &Rationale,
    extractor: &E,
) -> RationaleRecord {
    RationaleRecord {
        id: id.to_string(),
        tokens: input.token_ids.iter().map(|&t| vocab.token(t).to_string()).collect(),
        indices: rationale.indices.clone(),
        soft_mask: rationale.soft_mask.clone(),
        source: rationale.source,
        ratio: extractor.ratio(),
        budget: None,
    }
}

/// Extracts a rationale for every example and returns the keep-only inputs.
/// Failing examples are skipped and reported by id.
pub fn extract_all<E: RationaleExtractor + ?Sized>(
    vocab: &Vocabulary,
    examples: &[TimestampedExample],
    extractor: &E,
    max_length: usize,
) -> (Vec<LabeledInput>, Vec<RationaleRecord>, Vec<String>) {
    let mut inputs = Vec::with_capacity(examples.len());
    let mut records = Vec::with_capacity(examples.len());
    let mut skipped = Vec::new();
    for ex in examples {
        let full = vocab.encode(&ex.text, max_length);
        let kept = extractor
            .extract(&ex.id, &full)
            .and_then(|r| masked_input(&full, &r, MaskMode::KeepOnly).map(|m| (r, m)));
        match kept {
            Ok((r, input)) => {
                records.push(record_for(vocab, &ex.id, &full, &r, extractor));
                inputs.push(LabeledInput { input, label: ex.label });
            }
            Err(e) => {
                log::warn!("fresh: skipping {}: {e}", ex.id);
                skipped.push(ex.id.clone());
            }
        }
    }
    (inputs, records, skipped)
}

/// Trains a classifier on rationale-only inputs. The rationale positions
/// index the support model's encoding, so the new classifier shares its
/// vocabulary.
pub fn train_fresh<E: RationaleExtractor + ?Sized>(
    vocab: &Vocabulary,
    n_classes: usize,
    train: &[TimestampedExample],
    dev: &[TimestampedExample],
    extractor: &E,
    config: &TrainConfig,
) -> Result<FreshOutput> {
    let (train_in, train_manifest, mut skipped) = extract_all(vocab, train, extractor, config.max_length);
    let (dev_in, dev_manifest, dev_skipped) = extract_all(vocab, dev, extractor, config.max_length);
    skipped.extend(dev_skipped);
    let total = train.len() + dev.len();
    if skipped.len() as f64 > MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::Stage {
            stage: "fresh".into(),
            message: format!("{} of {total} examples failed rationale extraction", skipped.len()),
        });
    }
    let (classifier, curve) = train_on_encoded(vocab.clone(), n_classes, &train_in, &dev_in, config)?;
    Ok(FreshOutput {
        classifier,
        curve,
        train_manifest,
        dev_manifest,
        skipped,
    })
}

/// A trained rationale classifier paired with the extractor that feeds it.
pub struct FreshModel<'a, E: RationaleExtractor + ?Sized> {
    pub classifier: &'a AttentionClassifier,
    pub extractor: &'a E,
}

impl<E: RationaleExtractor + ?Sized> FreshModel<'_, E> {
    pub fn rationale_input(&self, id: &str, input: &EncodedInput) -> Result<EncodedInput> {
        let r = self.extractor.extract(id, input)?;
        masked_input(input, &r, MaskMode::KeepOnly)
    }
}

impl<E: RationaleExtractor + ?Sized> TextClassifier for FreshModel<'_, E> {
    fn n_labels(&self) -> usize {
        self.classifier.n_classes()
    }

    fn classify(&self, id: &str, text: &str) -> Result<Prediction> {
        let full = self.classifier.encode(text);
        let input = self.rationale_input(id, &full).map_err(|e| e.for_example(id))?;
        Ok(self.classifier.predict(&input))
    }
}
