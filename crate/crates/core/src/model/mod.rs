//! The classifier contract consumed by attribution, faithfulness and
//! select-then-predict code, and the built-in attention classifier.

mod attention;
pub mod reference;
mod tokenizer;
pub(crate) mod train;

pub use attention::{AttentionClassifier, AttentionParams, ModelSnapshot, SNAPSHOT_VERSION};
pub use tokenizer::{tokenize, Vocabulary, UNK};
pub use train::{
    evaluate_loss, train_classifier, train_on_encoded, Adam, CurvePoint, LabeledInput, TrainConfig,
    TrainingCurve,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::rationale::Rationale;

/// Per-position embedding vectors.
pub type Embeddings = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub token_ids: Vec<usize>,
    /// `true` marks a visible position; hidden positions carry the mask token.
    pub mask: Vec<bool>,
}

impl EncodedInput {
    pub fn new(token_ids: Vec<usize>) -> Self {
        let mask = vec![true; token_ids.len()];
        EncodedInput { token_ids, mask }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn visible_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn n_visible(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn with_mask(&self, mask: Vec<bool>) -> Self {
        debug_assert_eq!(mask.len(), self.len());
        EncodedInput {
            token_ids: self.token_ids.clone(),
            mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    /// Attention per position (zero on masked positions), when exposed.
    pub attention: Option<Vec<f64>>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f64>, attention: Option<Vec<f64>>) -> Self {
        let predicted_class = numeric::argmax(&probabilities);
        Prediction {
            probabilities,
            predicted_class,
            attention,
        }
    }
}

/// Which scalar the gradient-based methods explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientTarget {
    #[default]
    Probability,
    Logit,
}

/// Anything that maps an encoded input to class probabilities.
pub trait Predictor {
    fn n_classes(&self) -> usize;
    fn predict(&self, input: &EncodedInput) -> Prediction;
}

/// Classifies raw text with the model's own tokenizer. Lets models with
/// different vocabularies be compared on the same examples.
pub trait TextClassifier {
    fn n_labels(&self) -> usize;
    fn classify(&self, id: &str, text: &str) -> Result<Prediction>;
}

/// Differentiable classifier over token embeddings.
///
/// Masked positions carry the zero embedding and are excluded from
/// attention pooling; `visible` mirrors [`EncodedInput::mask`].
pub trait Classifier: Predictor {
    fn embedding_dim(&self) -> usize;

    /// Embedding vectors of the input; masked positions are zero.
    fn embed(&self, input: &EncodedInput) -> Embeddings;

    fn forward(&self, embeddings: &[Vec<f64>], visible: &[bool]) -> Prediction;

    /// The explained scalar for `target` and its gradient with respect to
    /// every embedding vector (zero on masked positions).
    fn output_gradient(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> (f64, Embeddings);

    fn output(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> f64 {
        self.output_gradient(embeddings, visible, target).0
    }

    /// Normalized attention over positions, if the model has any.
    fn attention(&self, _embeddings: &[Vec<f64>], _visible: &[bool]) -> Option<Vec<f64>> {
        None
    }

    /// Derivative of the explained scalar with respect to each attention
    /// weight, holding the other weights fixed.
    fn attention_gradient(&self, _embeddings: &[Vec<f64>], _visible: &[bool], _target: usize) -> Option<Vec<f64>> {
        None
    }

    /// DeepLift multipliers of the explained scalar for `input` against
    /// `reference`, such that sum_i <m_i, x_i - r_i> = f(x) - f(r).
    ///
    /// The default treats the whole network as one nonlinear block, where
    /// the rescale multiplier is the gradient averaged over the segment
    /// from reference to input.
    fn deeplift_multipliers(
        &self,
        input: &[Vec<f64>],
        reference: &[Vec<f64>],
        visible: &[bool],
        target: usize,
    ) -> Embeddings {
        let (nodes, weights) = numeric::gauss_legendre_unit(24);
        let mut avg: Embeddings = input.iter().map(|v| vec![0.0; v.len()]).collect();
        for (t, w) in nodes.iter().zip(&weights) {
            let point = interpolate(reference, input, *t);
            let (_, grad) = self.output_gradient(&point, visible, target);
            for (a, g) in avg.iter_mut().zip(&grad) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += w * y;
                }
            }
        }
        avg
    }
}

/// reference + t * (input - reference), per position.
pub fn interpolate(reference: &[Vec<f64>], input: &[Vec<f64>], t: f64) -> Embeddings {
    reference
        .iter()
        .zip(input)
        .map(|(r, x)| r.iter().zip(x).map(|(r, x)| r + t * (x - r)).collect())
        .collect()
}

pub fn zero_embeddings(length: usize, dim: usize) -> Embeddings {
    vec![vec![0.0; dim]; length]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Only rationale tokens stay visible.
    KeepOnly,
    /// Rationale tokens are hidden.
    Remove,
}

/// Visibility mask after applying a rationale.
pub fn masked_input(input: &EncodedInput, rationale: &Rationale, mode: MaskMode) -> Result<EncodedInput> {
    let len = input.len();
    let mut selected = vec![false; len];
    for &i in &rationale.indices {
        if i >= len {
            return Err(Error::Bounds { index: i, length: len });
        }
        selected[i] = true;
    }
    let mask = input
        .mask
        .iter()
        .zip(&selected)
        .map(|(&visible, &sel)| match mode {
            MaskMode::KeepOnly => visible && sel,
            MaskMode::Remove => visible && !sel,
        })
        .collect();
    Ok(input.with_mask(mask))
}

pub fn predict_masked<P: Predictor + ?Sized>(
    model: &P,
    input: &EncodedInput,
    rationale: &Rationale,
    mode: MaskMode,
) -> Result<Prediction> {
    Ok(model.predict(&masked_input(input, rationale, mode)?))
}

/// Gradient of the explained scalar with respect to each token embedding.
pub fn embedding_gradient<C: Classifier + ?Sized>(model: &C, input: &EncodedInput, target: usize) -> Result<Embeddings> {
    if target >= model.n_classes() {
        return Err(Error::Bounds {
            index: target,
            length: model.n_classes(),
        });
    }
    let emb = model.embed(input);
    Ok(model.output_gradient(&emb, &input.mask, target).1)
}
