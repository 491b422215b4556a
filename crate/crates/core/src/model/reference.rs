//! Closed-form models with known attributions. They implement the same
//! contract as the built-in classifier and serve as oracles in tests and
//! benchmarks.

use super::{Classifier, EncodedInput, Embeddings, Prediction, Predictor};
use crate::numeric::{self, dot};

/// Logits linear in the token embeddings with position-specific weights:
/// `z_c = sum_i <w[c][i], e_i> + bias[c]`. The explained scalar is the
/// target logit, so every gradient method is exact on it.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalLinear {
    /// `table[token]` embedding vectors.
    pub table: Vec<Vec<f64>>,
    /// `weights[class][position]` weight vectors.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub bias: Vec<f64>,
}

impl PositionalLinear {
    fn logits(&self, emb: &[Vec<f64>], visible: &[bool]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                b + emb
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| visible[*i])
                    .map(|(i, e)| dot(&w[i], e))
                    .sum::<f64>()
            })
            .collect()
    }
}

impl Predictor for PositionalLinear {
    fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn predict(&self, input: &EncodedInput) -> Prediction {
        self.forward(&self.embed(input), &input.mask)
    }
}

impl Classifier for PositionalLinear {
    fn embedding_dim(&self) -> usize {
        self.table[0].len()
    }

    fn embed(&self, input: &EncodedInput) -> Embeddings {
        input
            .token_ids
            .iter()
            .zip(&input.mask)
            .map(|(&t, &v)| if v { self.table[t].clone() } else { vec![0.0; self.embedding_dim()] })
            .collect()
    }

    fn forward(&self, embeddings: &[Vec<f64>], visible: &[bool]) -> Prediction {
        Prediction::from_probabilities(numeric::softmax(&self.logits(embeddings, visible)), None)
    }

    fn output_gradient(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> (f64, Embeddings) {
        let z = self.logits(embeddings, visible)[target];
        let grad = (0..embeddings.len())
            .map(|i| {
                if visible[i] {
                    self.weights[target][i].clone()
                } else {
                    vec![0.0; self.embedding_dim()]
                }
            })
            .collect();
        (z, grad)
    }
}

/// Two-class model whose class-1 probability is linear in token presence:
/// `p1 = base + sum_i coef[i] * present_i`. Each visible token embeds to the
/// scalar 1, so the model is also linear in its embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceLinear {
    pub base: f64,
    pub coefficients: Vec<f64>,
}

impl PresenceLinear {
    fn p1(&self, emb: &[Vec<f64>], visible: &[bool]) -> f64 {
        let s: f64 = emb
            .iter()
            .enumerate()
            .filter(|(i, _)| visible[*i])
            .map(|(i, e)| self.coefficients[i] * e[0])
            .sum();
        self.base + s
    }
}

impl Predictor for PresenceLinear {
    fn n_classes(&self) -> usize {
        2
    }

    fn predict(&self, input: &EncodedInput) -> Prediction {
        self.forward(&self.embed(input), &input.mask)
    }
}

impl Classifier for PresenceLinear {
    fn embedding_dim(&self) -> usize {
        1
    }

    fn embed(&self, input: &EncodedInput) -> Embeddings {
        input.mask.iter().map(|&v| vec![if v { 1.0 } else { 0.0 }]).collect()
    }

    fn forward(&self, embeddings: &[Vec<f64>], visible: &[bool]) -> Prediction {
        let p1 = self.p1(embeddings, visible);
        Prediction::from_probabilities(vec![1.0 - p1, p1], None)
    }

    fn output_gradient(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> (f64, Embeddings) {
        let p1 = self.p1(embeddings, visible);
        let sign = if target == 1 { 1.0 } else { -1.0 };
        let grad = (0..embeddings.len())
            .map(|i| vec![if visible[i] { sign * self.coefficients[i] } else { 0.0 }])
            .collect();
        (if target == 1 { p1 } else { 1.0 - p1 }, grad)
    }
}

/// Wraps a closure over the visibility mask as a predictor.
pub struct MaskFn<F> {
    pub n_classes: usize,
    pub f: F,
}

impl<F: Fn(&[bool]) -> Vec<f64>> Predictor for MaskFn<F> {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict(&self, input: &EncodedInput) -> Prediction {
        Prediction::from_probabilities((self.f)(&input.mask), None)
    }
}
