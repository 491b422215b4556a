use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AttentionClassifier, AttentionParams, EncodedInput, GradientTarget, Predictor, Vocabulary};
use crate::corpus::TimestampedExample;
use crate::error::{Error, Result};
use crate::metrics;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_length: usize,
    pub batch_size: usize,
    pub gradient_target: GradientTarget,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            learning_rate: 5e-3,
            seed: 0,
            embedding_dim: 32,
            hidden_dim: 32,
            max_length: 64,
            batch_size: 16,
            gradient_target: GradientTarget::Probability,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.embedding_dim == 0
            || self.hidden_dim == 0
            || self.max_length == 0
            || self.batch_size == 0
            || self.grad_clip <= 0.0
        {
            return Err(Error::Config("training hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInput {
    pub input: EncodedInput,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
    pub best_epoch: usize,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_loss,dev_macro_f1\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.epoch, p.train_loss, p.dev_loss, p.dev_macro_f1);
        }
        out
    }
}

/// Adam over a flat parameter buffer.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Scales `grads` so its L2 norm is at most `max_norm`.
pub(crate) fn clip_norm(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

/// Mean cross-entropy and macro-F1 (percent) on a labeled set.
pub fn evaluate_loss(model: &AttentionClassifier, data: &[LabeledInput]) -> (f64, f64) {
    if data.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mut loss = 0.0;
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    for ex in data {
        loss += model.loss_and_grad(&ex.input, ex.label, None);
        gold.push(ex.label);
        pred.push(model.predict(&ex.input).predicted_class);
    }
    let f1 = metrics::macro_f1(&gold, &pred, model.n_classes()).unwrap_or(0.0);
    (loss / data.len() as f64, f1)
}

/// Trains the attention classifier on pre-encoded inputs (masks are
/// honored, so rationale-only training goes through here too). Returns the
/// snapshot with the lowest dev loss, epoch 0 being the initialization.
pub fn train_on_encoded(
    vocab: Vocabulary,
    n_classes: usize,
    train: &[LabeledInput],
    dev: &[LabeledInput],
    config: &TrainConfig,
) -> Result<(AttentionClassifier, TrainingCurve)> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("train and dev sets must be non-empty".into()));
    }
    if let Some(bad) = train.iter().chain(dev).find(|e| e.label >= n_classes) {
        return Err(Error::LabelSpace(bad.label + 1, n_classes));
    }
    let mut model = AttentionClassifier::init(
        vocab,
        n_classes,
        config.embedding_dim,
        config.hidden_dim,
        config.max_length,
        &mut seed::rng_for(config.seed, &["train-init"]),
    );
    model.target = config.gradient_target;
    let mut order_rng = seed::rng_for(config.seed, &["train-order"]);

    let mut curve = TrainingCurve::default();
    let (train_loss, _) = evaluate_loss(&model, train);
    let (dev_loss, dev_f1) = evaluate_loss(&model, dev);
    curve.points.push(CurvePoint {
        epoch: 0,
        train_loss,
        dev_loss,
        dev_macro_f1: dev_f1,
    });
    let mut best = (dev_loss, model.params.clone());

    let n_params = model.params.data.len();
    let mut adam = Adam::new(config.learning_rate, n_params);
    let mut grads = AttentionParams::zeros(
        model.params.vocab_size,
        model.params.dim,
        model.params.hidden,
        n_classes,
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(config.batch_size) {
            grads.data.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                model.loss_and_grad(&train[i].input, train[i].label, Some(&mut grads));
            }
            let scale = 1.0 / batch.len() as f64;
            grads.data.iter_mut().for_each(|g| *g *= scale);
            clip_norm(&mut grads.data, config.grad_clip);
            adam.step(&mut model.params.data, &grads.data);
        }
        let (train_loss, _) = evaluate_loss(&model, train);
        let (dev_loss, dev_f1) = evaluate_loss(&model, dev);
        if !train_loss.is_finite() || !dev_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite loss (train {train_loss}, dev {dev_loss})"),
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.4} dev {dev_loss:.4} f1 {dev_f1:.2}");
        curve.points.push(CurvePoint {
            epoch,
            train_loss,
            dev_loss,
            dev_macro_f1: dev_f1,
        });
        if dev_loss < best.0 {
            best = (dev_loss, model.params.clone());
            curve.best_epoch = epoch;
        }
    }
    model.params = best.1;
    Ok((model, curve))
}

/// Builds the vocabulary from the training texts and trains a full-text
/// classifier.
pub fn train_classifier(
    train: &[TimestampedExample],
    dev: &[TimestampedExample],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<(AttentionClassifier, TrainingCurve)> {
    let vocab = Vocabulary::build(train.iter().map(|e| e.text.as_str()));
    let encode = |xs: &[TimestampedExample]| -> Vec<LabeledInput> {
        xs.iter()
            .map(|e| LabeledInput {
                input: vocab.encode(&e.text, config.max_length),
                label: e.label,
            })
            .collect()
    };
    let train_enc = encode(train);
    let dev_enc = encode(dev);
    train_on_encoded(vocab, n_classes, &train_enc, &dev_enc, config)
}
