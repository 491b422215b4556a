//! Post-hoc feature attribution: attention, scaled attention, InputXGrad,
//! Integrated Gradients, GradientSHAP, LIME, DeepLift, DeepLiftSHAP and a
//! random baseline. All methods return one score per visible token.

mod lime;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interpolate, zero_embeddings, Classifier, EncodedInput, Embeddings};
use crate::numeric::dot;
use crate::rationale::{Rationale, RationaleSource};
use crate::seed;

pub use lime::lime_attr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    Attention,
    ScaledAttention,
    InputXGrad,
    IntegratedGradients,
    GradientShap,
    Lime,
    Deeplift,
    DeepliftShap,
    Random,
}

impl AttributionMethod {
    pub const ALL: [AttributionMethod; 9] = [
        AttributionMethod::Attention,
        AttributionMethod::ScaledAttention,
        AttributionMethod::InputXGrad,
        AttributionMethod::IntegratedGradients,
        AttributionMethod::GradientShap,
        AttributionMethod::Lime,
        AttributionMethod::Deeplift,
        AttributionMethod::DeepliftShap,
        AttributionMethod::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttributionMethod::Attention => "attention",
            AttributionMethod::ScaledAttention => "scaled_attention",
            AttributionMethod::InputXGrad => "input_x_grad",
            AttributionMethod::IntegratedGradients => "integrated_gradients",
            AttributionMethod::GradientShap => "gradient_shap",
            AttributionMethod::Lime => "lime",
            AttributionMethod::Deeplift => "deeplift",
            AttributionMethod::DeepliftShap => "deeplift_shap",
            AttributionMethod::Random => "random",
        }
    }

    pub fn is_seeded(self) -> bool {
        matches!(
            self,
            AttributionMethod::GradientShap
                | AttributionMethod::Lime
                | AttributionMethod::DeepliftShap
                | AttributionMethod::Random
        )
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttributionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AttributionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attribution method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    ZeroEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub ig_steps: usize,
    pub gshap_samples: usize,
    pub gshap_noise: f64,
    pub lime_samples: usize,
    /// `None` means 0.75 * sqrt(L).
    pub lime_kernel_width: Option<f64>,
    pub lime_ridge: f64,
    pub dlshap_baselines: usize,
    pub dlshap_noise: f64,
    pub baseline: Baseline,
    pub seed: u64,
    /// Rank tokens by |score| instead of the signed score.
    pub rank_by_absolute: bool,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            ig_steps: 64,
            gshap_samples: 32,
            gshap_noise: 0.09,
            lime_samples: 1000,
            lime_kernel_width: None,
            lime_ridge: 1.0,
            dlshap_baselines: 8,
            dlshap_noise: 0.09,
            baseline: Baseline::ZeroEmbedding,
            seed: 0,
            rank_by_absolute: false,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ig_steps < 2 {
            return Err(Error::Config("ig_steps must be at least 2".into()));
        }
        if self.gshap_samples == 0 || self.lime_samples == 0 || self.dlshap_baselines == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.gshap_noise < 0.0 || self.dlshap_noise < 0.0 || self.lime_ridge < 0.0 {
            return Err(Error::Config("noise levels and ridge must be non-negative".into()));
        }
        if matches!(self.lime_kernel_width, Some(w) if w <= 0.0) {
            return Err(Error::Config("lime_kernel_width must be positive".into()));
        }
        Ok(())
    }

    fn metadata(&self, method: AttributionMethod) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match method {
            AttributionMethod::IntegratedGradients => {
                m.insert("ig_steps".into(), self.ig_steps as f64);
            }
            AttributionMethod::GradientShap => {
                m.insert("gshap_samples".into(), self.gshap_samples as f64);
                m.insert("gshap_noise".into(), self.gshap_noise);
            }
            AttributionMethod::Lime => {
                m.insert("lime_samples".into(), self.lime_samples as f64);
                m.insert("lime_ridge".into(), self.lime_ridge);
            }
            AttributionMethod::DeepliftShap => {
                m.insert("dlshap_baselines".into(), self.dlshap_baselines as f64);
                m.insert("dlshap_noise".into(), self.dlshap_noise);
            }
            _ => {}
        }
        if method.is_seeded() {
            m.insert("seed".into(), self.seed as f64);
        }
        m
    }
}

/// Importance scores for the visible tokens of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    /// Visible positions, ascending.
    pub positions: Vec<usize>,
    /// `scores[j]` belongs to `positions[j]`.
    pub scores: Vec<f64>,
    pub method: AttributionMethod,
    pub target_class: usize,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

impl AttributionMap {
    fn from_positions(input: &EncodedInput, per_position: &[f64], method: AttributionMethod, target: usize) -> Result<Self> {
        let positions = input.visible_positions();
        let scores: Vec<f64> = positions.iter().map(|&i| per_position[i]).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("{method} produced a non-finite score")));
        }
        Ok(AttributionMap {
            positions,
            scores,
            method,
            target_class: target,
            metadata: BTreeMap::new(),
        })
    }

    fn with_metadata(mut self, config: &AttributionConfig) -> Self {
        self.metadata = config.metadata(self.method);
        self
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn check_target<C: Classifier + ?Sized>(model: &C, target: usize) -> Result<()> {
    if target >= model.n_classes() {
        return Err(Error::Bounds {
            index: target,
            length: model.n_classes(),
        });
    }
    Ok(())
}

fn token_dots(a: &Embeddings, b: &Embeddings) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| dot(x, y)).collect()
}

pub fn attention_attr<C: Classifier + ?Sized>(model: &C, input: &EncodedInput) -> Result<AttributionMap> {
    let emb = model.embed(input);
    let attention = model
        .attention(&emb, &input.mask)
        .ok_or_else(|| Error::UnsupportedMethod("attention".into()))?;
    let target = model.forward(&emb, &input.mask).predicted_class;
    AttributionMap::from_positions(input, &attention, AttributionMethod::Attention, target)
}

pub fn scaled_attention_attr<C: Classifier + ?Sized>(model: &C, input: &EncodedInput, target: usize) -> Result<AttributionMap> {
    check_target(model, target)?;
    let emb = model.embed(input);
    let unsupported = || Error::UnsupportedMethod("scaled_attention".into());
    let attention = model.attention(&emb, &input.mask).ok_or_else(unsupported)?;
    let grad = model
        .attention_gradient(&emb, &input.mask, target)
        .ok_or_else(unsupported)?;
    let scores: Vec<f64> = attention.iter().zip(&grad).map(|(a, g)| a * g).collect();
    AttributionMap::from_positions(input, &scores, AttributionMethod::ScaledAttention, target)
}

pub fn input_x_grad<C: Classifier + ?Sized>(model: &C, input: &EncodedInput, target: usize) -> Result<AttributionMap> {
    check_target(model, target)?;
    let emb = model.embed(input);
    let (_, grad) = model.output_gradient(&emb, &input.mask, target);
    AttributionMap::from_positions(input, &token_dots(&emb, &grad), AttributionMethod::InputXGrad, target)
}

fn baseline_for(config: &AttributionConfig, len: usize, dim: usize) -> Embeddings {
    match config.baseline {
        Baseline::ZeroEmbedding => zero_embeddings(len, dim),
    }
}

/// Midpoint Riemann sum of gradients along the straight path from the
/// baseline to the input.
pub fn integrated_gradients<C: Classifier + ?Sized>(
    model: &C,
    input: &EncodedInput,
    target: usize,
    config: &AttributionConfig,
) -> Result<AttributionMap> {
    check_target(model, target)?;
    if config.ig_steps < 2 {
        return Err(Error::Config("ig_steps must be at least 2".into()));
    }
    let emb = model.embed(input);
    let base = baseline_for(config, emb.len(), model.embedding_dim());
    let mut avg = zero_embeddings(emb.len(), model.embedding_dim());
    let n = config.ig_steps as f64;
    for k in 0..config.ig_steps {
        let t = (k as f64 + 0.5) / n;
        let point = interpolate(&base, &emb, t);
        let (_, grad) = model.output_gradient(&point, &input.mask, target);
        for (a, g) in avg.iter_mut().zip(&grad) {
            for (x, y) in a.iter_mut().zip(g) {
                *x += y / n;
            }
        }
    }
    let delta: Embeddings = emb
        .iter()
        .zip(&base)
        .map(|(x, b)| x.iter().zip(b).map(|(x, b)| x - b).collect())
        .collect();
    Ok(
        AttributionMap::from_positions(input, &token_dots(&delta, &avg), AttributionMethod::IntegratedGradients, target)?
            .with_metadata(config),
    )
}

pub fn gradient_shap<C: Classifier + ?Sized>(
    model: &C,
    input: &EncodedInput,
    target: usize,
    config: &AttributionConfig,
    key: &str,
) -> Result<AttributionMap> {
    check_target(model, target)?;
    if config.gshap_samples == 0 {
        return Err(Error::Config("gshap_samples must be positive".into()));
    }
    let mut rng = seed::rng_for(config.seed, &["gradient_shap", key]);
    let noise = Normal::new(0.0, config.gshap_noise).map_err(|e| Error::Config(e.to_string()))?;
    let emb = model.embed(input);
    let base = baseline_for(config, emb.len(), model.embedding_dim());
    let mut scores = vec![0.0; emb.len()];
    let n = config.gshap_samples as f64;
    for _ in 0..config.gshap_samples {
        let u: f64 = rng.random();
        let point: Embeddings = emb
            .iter()
            .zip(&base)
            .enumerate()
            .map(|(i, (x, b))| {
                x.iter()
                    .zip(b)
                    .map(|(x, b)| {
                        let noisy = if input.mask[i] { x + noise.sample(&mut rng) } else { *x };
                        b + u * (noisy - b)
                    })
                    .collect()
            })
            .collect();
        let (_, grad) = model.output_gradient(&point, &input.mask, target);
        for i in 0..emb.len() {
            let d: Vec<f64> = emb[i].iter().zip(&base[i]).map(|(x, b)| x - b).collect();
            scores[i] += dot(&grad[i], &d) / n;
        }
    }
    Ok(AttributionMap::from_positions(input, &scores, AttributionMethod::GradientShap, target)?.with_metadata(config))
}

fn deeplift_scores<C: Classifier + ?Sized>(
    model: &C,
    emb: &Embeddings,
    reference: &Embeddings,
    visible: &[bool],
    target: usize,
) -> Vec<f64> {
    let mult = model.deeplift_multipliers(emb, reference, visible, target);
    let delta: Embeddings = emb
        .iter()
        .zip(reference)
        .map(|(x, r)| x.iter().zip(r).map(|(x, r)| x - r).collect())
        .collect();
    token_dots(&mult, &delta)
}

/// Rescale-rule DeepLift against the zero-embedding reference.
pub fn deeplift<C: Classifier + ?Sized>(model: &C, input: &EncodedInput, target: usize) -> Result<AttributionMap> {
    check_target(model, target)?;
    let emb = model.embed(input);
    let reference = zero_embeddings(emb.len(), model.embedding_dim());
    let scores = deeplift_scores(model, &emb, &reference, &input.mask, target);
    AttributionMap::from_positions(input, &scores, AttributionMethod::Deeplift, target)
}

/// Draws the DeepLiftSHAP baseline distribution: Gaussian perturbations of
/// the zero embedding.
pub fn sample_baselines(config: &AttributionConfig, len: usize, dim: usize, key: &str) -> Result<Vec<Embeddings>> {
    let mut rng = seed::rng_for(config.seed, &["deeplift_shap", key]);
    let noise = Normal::new(0.0, config.dlshap_noise).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..config.dlshap_baselines)
        .map(|_| {
            (0..len)
                .map(|_| (0..dim).map(|_| noise.sample(&mut rng)).collect())
                .collect()
        })
        .collect())
}

/// Mean DeepLift attribution over the given baselines.
pub fn deeplift_shap<C: Classifier + ?Sized>(
    model: &C,
    input: &EncodedInput,
    target: usize,
    baselines: &[Embeddings],
) -> Result<AttributionMap> {
    check_target(model, target)?;
    if baselines.is_empty() {
        return Err(Error::Config("deeplift_shap needs at least one baseline".into()));
    }
    let emb = model.embed(input);
    let mut scores = vec![0.0; emb.len()];
    for b in baselines {
        if b.len() != emb.len() {
            return Err(Error::Config("baseline length differs from input".into()));
        }
        // masked positions keep the mask token (zero) whatever the baseline
        let b: Embeddings = b
            .iter()
            .zip(&input.mask)
            .map(|(row, &v)| if v { row.clone() } else { vec![0.0; row.len()] })
            .collect();
        for (s, d) in scores.iter_mut().zip(deeplift_scores(model, &emb, &b, &input.mask, target)) {
            *s += d / baselines.len() as f64;
        }
    }
    AttributionMap::from_positions(input, &scores, AttributionMethod::DeepliftShap, target)
}

/// i.i.d. Uniform(0, 1) scores, keyed by `(seed, key)`.
pub fn random_attr(input: &EncodedInput, seed_value: u64, key: &str) -> AttributionMap {
    let mut rng = seed::rng_for(seed_value, &["random", key]);
    let positions = input.visible_positions();
    let scores = positions.iter().map(|_| rng.random::<f64>()).collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("seed".into(), seed_value as f64);
    AttributionMap {
        positions,
        scores,
        method: AttributionMethod::Random,
        target_class: 0,
        metadata,
    }
}

/// Runs `method` on one input. `key` identifies the example and keys the
/// random streams of seeded methods, so results do not depend on the order
/// examples are processed in.
pub fn attribute<C: Classifier + ?Sized>(
    model: &C,
    input: &EncodedInput,
    method: AttributionMethod,
    target: usize,
    config: &AttributionConfig,
    key: &str,
) -> Result<AttributionMap> {
    let map = match method {
        AttributionMethod::Attention => {
            let mut m = attention_attr(model, input)?;
            m.target_class = target;
            m
        }
        AttributionMethod::ScaledAttention => scaled_attention_attr(model, input, target)?,
        AttributionMethod::InputXGrad => input_x_grad(model, input, target)?,
        AttributionMethod::IntegratedGradients => integrated_gradients(model, input, target, config)?,
        AttributionMethod::GradientShap => gradient_shap(model, input, target, config, key)?,
        AttributionMethod::Lime => lime_attr(model, input, target, config, key)?,
        AttributionMethod::Deeplift => deeplift(model, input, target)?,
        AttributionMethod::DeepliftShap => {
            let baselines = sample_baselines(config, input.len(), model.embedding_dim(), key)?;
            deeplift_shap(model, input, target, &baselines)?
        }
        AttributionMethod::Random => {
            let mut m = random_attr(input, config.seed, key);
            m.target_class = target;
            m
        }
    };
    Ok(map.with_metadata(config))
}

/// Rationale size for `ratio` of `n_visible` tokens: round half up, at
/// least one token.
pub fn rationale_size(ratio: f64, n_visible: usize) -> usize {
    if n_visible == 0 {
        return 0;
    }
    let k = (ratio * n_visible as f64 + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, n_visible)
}

/// Positions of the `k` highest-scoring tokens; ties go to the lower index.
pub fn top_k_rationale(map: &AttributionMap, ratio: f64) -> Rationale {
    top_k_rationale_with(map, ratio, false)
}

pub fn top_k_rationale_with(map: &AttributionMap, ratio: f64, absolute: bool) -> Rationale {
    let k = rationale_size(ratio, map.len());
    let key = |s: f64| if absolute { s.abs() } else { s };
    let mut order: Vec<usize> = (0..map.len()).collect();
    order.sort_by(|&a, &b| {
        key(map.scores[b])
            .total_cmp(&key(map.scores[a]))
            .then(map.positions[a].cmp(&map.positions[b]))
    });
    let mut indices: Vec<usize> = order[..k].iter().map(|&j| map.positions[j]).collect();
    indices.sort_unstable();
    Rationale {
        indices,
        source: RationaleSource::Topk,
        soft_mask: None,
    }
}

#[cfg(test)]
mod tests;
