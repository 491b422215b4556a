//! End-to-end select-then-predict models: a Bi-LSTM extractor produces one
//! gate per token, a Bi-LSTM predictor classifies the gated embeddings.
//!
//! Two gate families share the architecture:
//! - HardKUMA: stochastic stretched Kumaraswamy gates, with the expected
//!   selection rate held to a target by a Lagrange multiplier;
//! - SPECTRA-style: a deterministic budgeted sparse projection of the
//!   extractor scores.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kuma::{kuma_sample_grad, KumaGateParams, DEFAULT_STRETCH};
use super::lstm::{BiLstm, BiLstmCache};
use super::spectra::{project_budget, project_budget_backward, BudgetConstraint, Projection};
use super::{Rationale, RationaleSource};
use crate::corpus::TimestampedExample;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::train::clip_norm;
use crate::model::{Adam, EncodedInput, Prediction, Predictor, TextClassifier, Vocabulary};
use crate::numeric::{self, dot, sigmoid};
use crate::seed;

/// Kumaraswamy shapes are `SHAPE_MIN + (SHAPE_MAX - SHAPE_MIN) * sigmoid(x)`.
/// The bounds keep both point masses below 1, so the expected-L0 gradient
/// never vanishes entirely.
const SHAPE_MIN: f64 = 0.1;
const SHAPE_MAX: f64 = 3.0;

fn shape(pre: f64) -> f64 {
    SHAPE_MIN + (SHAPE_MAX - SHAPE_MIN) * sigmoid(pre)
}

fn shape_grad(pre: f64) -> f64 {
    let s = sigmoid(pre);
    (SHAPE_MAX - SHAPE_MIN) * s * (1.0 - s)
}
/// Dev selection rate may exceed the target by this much for a snapshot to
/// be eligible for model selection.
pub const RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateKind {
    HardKuma { l: f64, r: f64 },
    Spectra { budget_ratio: f64 },
}

impl GateKind {
    pub fn source(&self) -> RationaleSource {
        match self {
            GateKind::HardKuma { .. } => RationaleSource::Hardkuma,
            GateKind::Spectra { .. } => RationaleSource::Spectra,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectiveConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_length: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub stretch_l: f64,
    pub stretch_r: f64,
    /// Epochs trained before the multiplier starts moving. Gates left
    /// unpriced saturate open, so keep this short.
    pub warmup_epochs: usize,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        SelectiveConfig {
            epochs: 20,
            learning_rate: 5e-3,
            seed: 0,
            embedding_dim: 32,
            hidden_dim: 64,
            max_length: 64,
            batch_size: 16,
            grad_clip: 5.0,
            stretch_l: DEFAULT_STRETCH.0,
            stretch_r: DEFAULT_STRETCH.1,
            warmup_epochs: 0,
        }
    }
}

/// Multipliers holding the mean expected L0 at `target_rate`.
///
/// `lambda` prices selecting more than the target; `lambda_lower` prices
/// selecting less, which stops the gates from settling on a smaller subset
/// once the upper constraint is slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub lambda: f64,
    #[serde(default)]
    pub lambda_lower: f64,
    pub target_rate: f64,
    pub lr_lambda: f64,
}

impl LagrangianState {
    pub fn new(target_rate: f64, lr_lambda: f64) -> Self {
        LagrangianState {
            lambda: 0.0,
            lambda_lower: 0.0,
            target_rate,
            lr_lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return Err(Error::Config("target_rate must lie in (0, 1]".into()));
        }
        if self.lambda < 0.0 || self.lambda_lower < 0.0 || self.lr_lambda < 0.0 {
            return Err(Error::Config("multipliers and their step size must be non-negative".into()));
        }
        Ok(())
    }

    /// Projected dual ascent on both sides of the rate constraint.
    pub fn update(&mut self, rate: f64) {
        self.lambda = (self.lambda + self.lr_lambda * (rate - self.target_rate)).max(0.0);
        self.lambda_lower = (self.lambda_lower + self.lr_lambda * (self.target_rate - rate)).max(0.0);
    }

    /// Net weight on the expected L0 in the training loss.
    pub fn penalty(&self) -> f64 {
        self.lambda - self.lambda_lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveCurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    /// Mean P(gate != 0) per token (HardKUMA) or mean mask value (SPECTRA).
    pub dev_expected_rate: f64,
    /// Fraction of tokens in the deterministic support.
    pub dev_selection_rate: f64,
    /// Net multiplier on the expected L0 at the end of the epoch.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectiveCurve {
    pub points: Vec<SelectiveCurvePoint>,
    pub best_epoch: usize,
}

impl SelectiveCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_macro_f1,dev_expected_rate,dev_selection_rate,lambda\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.epoch, p.train_loss, p.dev_macro_f1, p.dev_expected_rate, p.dev_selection_rate, p.lambda
            );
        }
        out
    }

    pub fn best(&self) -> Option<&SelectiveCurvePoint> {
        self.points.iter().find(|p| p.epoch == self.best_epoch)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    vocab: usize,
    dim: usize,
    lstm: BiLstm,
    n_classes: usize,
    head_outputs: usize,
}

impl Layout {
    fn ext(&self) -> usize {
        self.vocab * self.dim
    }
    fn head(&self) -> usize {
        self.ext() + self.lstm.n_params()
    }
    /// Each gate output reads the context vector and the token's own
    /// embedding.
    fn head_width(&self) -> usize {
        self.lstm.output_dim() + self.dim + 1
    }
    fn head_len(&self) -> usize {
        self.head_outputs * self.head_width()
    }
    fn pred(&self) -> usize {
        self.head() + self.head_len()
    }
    fn out(&self) -> usize {
        self.pred() + self.lstm.n_params()
    }
    fn total(&self) -> usize {
        self.out() + self.n_classes * (self.lstm.output_dim() + 1)
    }
}

/// Per-token gate diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateInfo {
    /// P(z != 0) for HardKUMA, the mask value for SPECTRA.
    pub expected_l0: f64,
    /// Deterministic gate value used at test time.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveModel {
    pub kind: GateKind,
    pub vocab: Vocabulary,
    pub n_classes: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_length: usize,
    pub params: Vec<f64>,
}

enum GateMode<'a> {
    Sample(&'a mut ChaCha8Rng),
    Deterministic,
}

struct Run {
    ids: Vec<usize>,
    emb: Vec<Vec<f64>>,
    ext: BiLstmCache,
    head_pre: Vec<Vec<f64>>,
    kuma: Vec<KumaGateParams>,
    gate_grad: Vec<(f64, f64)>,
    projection: Option<Projection>,
    z: Vec<f64>,
    pred: BiLstmCache,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

impl SelectiveModel {
    fn layout(&self) -> Layout {
        Layout {
            vocab: self.vocab.len(),
            dim: self.embedding_dim,
            lstm: BiLstm::new(self.embedding_dim, self.hidden_dim),
            n_classes: self.n_classes,
            head_outputs: match self.kind {
                GateKind::HardKuma { .. } => 2,
                GateKind::Spectra { .. } => 1,
            },
        }
    }

    fn init(kind: GateKind, vocab: Vocabulary, n_classes: usize, config: &SelectiveConfig) -> Self {
        let mut model = SelectiveModel {
            kind,
            vocab,
            n_classes,
            embedding_dim: config.embedding_dim,
            hidden_dim: config.hidden_dim,
            max_length: config.max_length,
            params: Vec::new(),
        };
        let lay = model.layout();
        let mut params = vec![0.0; lay.total()];
        let mut rng = seed::rng_for(config.seed, &["selective-init"]);
        let emb = Normal::new(0.0, 0.3).unwrap();
        for x in params[..lay.ext()].iter_mut() {
            *x = emb.sample(&mut rng);
        }
        lay.lstm.init(&mut params[lay.ext()..lay.head()], &mut rng);
        let small = Normal::new(0.0, 0.1).unwrap();
        for x in params[lay.head()..lay.pred()].iter_mut() {
            *x = small.sample(&mut rng);
        }
        if let GateKind::HardKuma { .. } = kind {
            // a = b = 1 at start: uniform gates, open about 92% of the time
            let width = lay.head_width();
            let unit = ((1.0 - SHAPE_MIN) / (SHAPE_MAX - 1.0)).ln();
            for k in 0..2 {
                params[lay.head() + k * width + width - 1] = unit;
            }
        } else {
            params[lay.head() + lay.head_width() - 1] = 0.5;
        }
        lay.lstm.init(&mut params[lay.pred()..lay.out()], &mut rng);
        let out = Normal::new(0.0, 1.0 / (lay.lstm.output_dim() as f64).sqrt()).unwrap();
        for x in params[lay.out()..].iter_mut() {
            *x = out.sample(&mut rng);
        }
        model.params = params;
        model
    }

    pub fn encode(&self, text: &str) -> EncodedInput {
        self.vocab.encode(text, self.max_length)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SelectiveModel = serde_json::from_str(&raw)?;
        if model.params.len() != model.layout().total() {
            return Err(Error::Serde("parameter buffer does not match layout".into()));
        }
        Ok(model)
    }

    fn stretch(&self) -> (f64, f64) {
        match self.kind {
            GateKind::HardKuma { l, r } => (l, r),
            GateKind::Spectra { .. } => DEFAULT_STRETCH,
        }
    }

    fn run(&self, input: &EncodedInput, mode: GateMode<'_>) -> Run {
        let lay = self.layout();
        let p = &self.params;
        let ids: Vec<usize> = input.visible_positions().iter().map(|&i| input.token_ids[i]).collect();
        let emb: Vec<Vec<f64>> = ids.iter().map(|&t| p[t * lay.dim..(t + 1) * lay.dim].to_vec()).collect();
        let ext = lay.lstm.forward(&p[lay.ext()..lay.head()], &emb);
        let od = lay.lstm.output_dim();
        let width = lay.head_width();
        let head = &p[lay.head()..lay.pred()];
        let head_pre: Vec<Vec<f64>> = ext
            .outputs
            .iter()
            .zip(&emb)
            .map(|(h, e)| {
                (0..lay.head_outputs)
                    .map(|k| {
                        let w = &head[k * width..(k + 1) * width];
                        dot(&w[..od], h) + dot(&w[od..od + lay.dim], e) + w[width - 1]
                    })
                    .collect()
            })
            .collect();

        let mut kuma = Vec::new();
        let mut gate_grad = Vec::new();
        let mut projection = None;
        let z: Vec<f64> = match self.kind {
            GateKind::HardKuma { .. } => {
                let (l, r) = self.stretch();
                kuma = head_pre
                    .iter()
                    .map(|pre| KumaGateParams {
                        a: shape(pre[0]),
                        b: shape(pre[1]),
                        l,
                        r,
                    })
                    .collect();
                match mode {
                    GateMode::Sample(rng) => kuma
                        .iter()
                        .map(|g| {
                            let u = rng.random_range(1e-6..1.0 - 1e-6);
                            let (z, da, db) = kuma_sample_grad(g, u);
                            gate_grad.push((da, db));
                            z
                        })
                        .collect(),
                    GateMode::Deterministic => kuma.iter().map(|g| g.deterministic_gate()).collect(),
                }
            }
            GateKind::Spectra { budget_ratio } => {
                let scores: Vec<f64> = head_pre.iter().map(|v| v[0]).collect();
                let budget = BudgetConstraint::from_ratio(budget_ratio, scores.len());
                let proj = project_budget(&scores, budget.budget as f64);
                let z = proj.mask.clone();
                projection = Some(proj);
                z
            }
        };

        let gated: Vec<Vec<f64>> = emb
            .iter()
            .zip(&z)
            .map(|(e, &g)| e.iter().map(|v| v * g).collect())
            .collect();
        let pred = lay.lstm.forward(&p[lay.pred()..lay.out()], &gated);
        let mut pooled = vec![0.0; od];
        if !pred.outputs.is_empty() {
            let n = pred.outputs.len() as f64;
            for o in &pred.outputs {
                for (x, v) in pooled.iter_mut().zip(o) {
                    *x += v / n;
                }
            }
        }
        let out = &p[lay.out()..];
        let logits: Vec<f64> = (0..self.n_classes)
            .map(|c| dot(&out[c * (od + 1)..c * (od + 1) + od], &pooled) + out[c * (od + 1) + od])
            .collect();
        let probs = numeric::softmax(&logits);
        Run {
            ids,
            emb,
            ext,
            head_pre,
            kuma,
            gate_grad,
            projection,
            z,
            pred,
            pooled,
            probs,
        }
    }

    /// Backprop of `ce_weight * CE + l0_weight * sum_i L0_i` for one sampled
    /// run. Returns the unweighted cross-entropy.
    fn backward(&self, run: &Run, label: usize, ce_weight: f64, l0_weight: f64, grads: &mut [f64]) -> f64 {
        let lay = self.layout();
        let p = &self.params;
        let od = lay.lstm.output_dim();
        let ce = -run.probs[label].max(1e-300).ln();
        let n = run.emb.len();

        let mut dlogits = run.probs.clone();
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= ce_weight);
        let out_off = lay.out();
        let mut dpooled = vec![0.0; od];
        for (c, &g) in dlogits.iter().enumerate() {
            let base = out_off + c * (od + 1);
            for j in 0..od {
                grads[base + j] += g * run.pooled[j];
                dpooled[j] += g * p[base + j];
            }
            grads[base + od] += g;
        }
        if n == 0 {
            return ce;
        }
        let d_pred_out: Vec<Vec<f64>> = (0..n).map(|_| dpooled.iter().map(|v| v / n as f64).collect()).collect();
        let d_gated = {
            let (pre, post) = grads.split_at_mut(lay.out());
            let _ = post;
            lay.lstm
                .backward(&p[lay.pred()..lay.out()], &run.pred, &d_pred_out, &mut pre[lay.pred()..])
        };

        let mut d_emb: Vec<Vec<f64>> = d_gated
            .iter()
            .zip(&run.z)
            .map(|(d, &z)| d.iter().map(|v| v * z).collect())
            .collect();
        let dz: Vec<f64> = d_gated.iter().zip(&run.emb).map(|(d, e)| dot(d, e)).collect();

        // gate -> head pre-activations
        let mut d_head_pre: Vec<Vec<f64>> = vec![vec![0.0; lay.head_outputs]; n];
        match self.kind {
            GateKind::HardKuma { .. } => {
                for i in 0..n {
                    let g = &run.kuma[i];
                    let (dza, dzb) = run.gate_grad[i];
                    let (dla, dlb) = g.expected_l0_grad();
                    let da = dz[i] * dza + l0_weight * dla;
                    let db = dz[i] * dzb + l0_weight * dlb;
                    d_head_pre[i][0] = da * shape_grad(run.head_pre[i][0]);
                    d_head_pre[i][1] = db * shape_grad(run.head_pre[i][1]);
                }
            }
            GateKind::Spectra { .. } => {
                let proj = run.projection.as_ref().expect("spectra run keeps its projection");
                for (i, v) in project_budget_backward(proj, &dz).into_iter().enumerate() {
                    d_head_pre[i][0] = v;
                }
            }
        }

        let width = lay.head_width();
        let head_off = lay.head();
        let mut d_ext_out = vec![vec![0.0; od]; n];
        for i in 0..n {
            for k in 0..lay.head_outputs {
                let d = d_head_pre[i][k];
                if d == 0.0 {
                    continue;
                }
                let base = head_off + k * width;
                for j in 0..od {
                    grads[base + j] += d * run.ext.outputs[i][j];
                    d_ext_out[i][j] += d * p[base + j];
                }
                for j in 0..lay.dim {
                    grads[base + od + j] += d * run.emb[i][j];
                    d_emb[i][j] += d * p[base + od + j];
                }
                grads[base + width - 1] += d;
            }
        }
        let d_ext_in = lay
            .lstm
            .backward(&p[lay.ext()..lay.head()], &run.ext, &d_ext_out, &mut grads[lay.ext()..lay.head()]);
        for (de, dx) in d_emb.iter_mut().zip(&d_ext_in) {
            for (a, b) in de.iter_mut().zip(dx) {
                *a += b;
            }
        }
        for (i, &t) in run.ids.iter().enumerate() {
            for (j, v) in d_emb[i].iter().enumerate() {
                grads[t * lay.dim + j] += v;
            }
        }
        ce
    }

    /// Per-token gate diagnostics for the visible tokens, in order.
    pub fn gates(&self, input: &EncodedInput) -> Vec<GateInfo> {
        let run = self.run(input, GateMode::Deterministic);
        match self.kind {
            GateKind::HardKuma { .. } => run
                .kuma
                .iter()
                .zip(&run.z)
                .map(|(g, &z)| GateInfo {
                    expected_l0: g.expected_l0(),
                    value: z,
                })
                .collect(),
            GateKind::Spectra { .. } => run.z.iter().map(|&z| GateInfo { expected_l0: z, value: z }).collect(),
        }
    }

    /// Deterministic rationale: positions with a non-zero test-time gate.
    pub fn extract(&self, input: &EncodedInput) -> Rationale {
        let visible = input.visible_positions();
        let gates = self.gates(input);
        let mut soft = vec![0.0; input.len()];
        for (&pos, g) in visible.iter().zip(&gates) {
            soft[pos] = g.value;
        }
        let indices = visible
            .iter()
            .zip(&gates)
            .filter(|(_, g)| g.value > 0.0)
            .map(|(&p, _)| p)
            .collect();
        Rationale {
            indices,
            source: self.kind.source(),
            soft_mask: Some(soft),
        }
    }

    /// (macro-F1, mean expected rate, mean deterministic selection rate).
    pub fn evaluate(&self, data: &[(EncodedInput, usize)]) -> (f64, f64, f64) {
        let mut gold = Vec::with_capacity(data.len());
        let mut pred = Vec::with_capacity(data.len());
        let (mut expected, mut selected, mut tokens) = (0.0, 0.0, 0usize);
        for (input, label) in data {
            let run = self.run(input, GateMode::Deterministic);
            gold.push(*label);
            pred.push(numeric::argmax(&run.probs));
            match self.kind {
                GateKind::HardKuma { .. } => expected += run.kuma.iter().map(|g| g.expected_l0()).sum::<f64>(),
                GateKind::Spectra { .. } => expected += run.z.iter().sum::<f64>(),
            }
            selected += run.z.iter().filter(|&&z| z > 0.0).count() as f64;
            tokens += run.z.len();
        }
        let f1 = metrics::macro_f1(&gold, &pred, self.n_classes).unwrap_or(0.0);
        let t = tokens.max(1) as f64;
        (f1, expected / t, selected / t)
    }
}

impl Predictor for SelectiveModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict(&self, input: &EncodedInput) -> Prediction {
        let run = self.run(input, GateMode::Deterministic);
        Prediction::from_probabilities(run.probs, None)
    }
}

impl TextClassifier for SelectiveModel {
    fn n_labels(&self) -> usize {
        self.n_classes
    }

    fn classify(&self, _id: &str, text: &str) -> Result<Prediction> {
        Ok(self.predict(&self.encode(text)))
    }
}

fn encode_all(vocab: &Vocabulary, xs: &[TimestampedExample], max_length: usize) -> Vec<(EncodedInput, usize)> {
    xs.iter().map(|e| (vocab.encode(&e.text, max_length), e.label)).collect()
}

fn train_selective(
    kind: GateKind,
    train: &[TimestampedExample],
    dev: &[TimestampedExample],
    n_classes: usize,
    config: &SelectiveConfig,
    mut lagrangian: Option<LagrangianState>,
) -> Result<(SelectiveModel, SelectiveCurve)> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("train and dev sets must be non-empty".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 || config.learning_rate <= 0.0 {
        return Err(Error::Config("selective training hyperparameters must be positive".into()));
    }
    let vocab = Vocabulary::build(train.iter().map(|e| e.text.as_str()));
    let train_enc = encode_all(&vocab, train, config.max_length);
    let dev_enc = encode_all(&vocab, dev, config.max_length);
    let mut model = SelectiveModel::init(kind, vocab, n_classes, config);
    let mut adam = Adam::new(config.learning_rate, model.params.len());
    let mut order_rng = seed::rng_for(config.seed, &["selective-order"]);
    let mut gate_rng = seed::rng_for(config.seed, &["selective-gates"]);
    let mut grads = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..train_enc.len()).collect();

    let mut curve = SelectiveCurve::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut collapsed_epochs = 0;
    let target = lagrangian.map(|l| l.target_rate);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let runs: Vec<Run> = batch
                .iter()
                .map(|&i| model.run(&train_enc[i].0, GateMode::Sample(&mut gate_rng)))
                .collect();
            let n_tokens: usize = runs.iter().map(|r| r.z.len()).sum();
            let l0_weight = lagrangian.map_or(0.0, |l| l.penalty() / n_tokens.max(1) as f64);
            let ce_weight = 1.0 / batch.len() as f64;
            let mut l0_sum = 0.0;
            for (run, &i) in runs.iter().zip(batch) {
                epoch_loss += model.backward(run, train_enc[i].1, ce_weight, l0_weight, &mut grads);
                l0_sum += run.kuma.iter().map(|g| g.expected_l0()).sum::<f64>();
            }
            clip_norm(&mut grads, config.grad_clip);
            adam.step(&mut model.params, &grads);
            if let Some(l) = lagrangian.as_mut().filter(|_| epoch > config.warmup_epochs) {
                l.update(l0_sum / n_tokens.max(1) as f64);
            }
        }
        let train_loss = epoch_loss / train_enc.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite training loss".into(),
            });
        }
        let (f1, expected_rate, selection_rate) = model.evaluate(&dev_enc);
        let lambda = lagrangian.map_or(0.0, |l| l.penalty());
        log::debug!("{kind:?} epoch {epoch}: loss {train_loss:.4} f1 {f1:.2} rate {expected_rate:.3} lambda {lambda:.4}");
        curve.points.push(SelectiveCurvePoint {
            epoch,
            train_loss,
            dev_macro_f1: f1,
            dev_expected_rate: expected_rate,
            dev_selection_rate: selection_rate,
            lambda,
        });

        if target.is_some() {
            if expected_rate < 1e-3 {
                collapsed_epochs += 1;
                if collapsed_epochs >= 3 {
                    return Err(Error::Collapse(format!(
                        "selection rate below 1e-3 for 3 consecutive epochs (epoch {epoch}, lambda {lambda:.4})"
                    )));
                }
            } else {
                collapsed_epochs = 0;
            }
        }
        let eligible = target.is_none_or(|t| expected_rate <= t + RATE_TOLERANCE);
        if eligible && best.as_ref().is_none_or(|(b, _)| f1 >= *b) {
            best = Some((f1, model.params.clone()));
            curve.best_epoch = epoch;
        }
    }
    match best {
        Some((_, params)) => model.params = params,
        None => curve.best_epoch = config.epochs,
    }
    Ok((model, curve))
}

/// Jointly trains a Kumaraswamy-gated extractor and its predictor.
pub fn train_hardkuma(
    train: &[TimestampedExample],
    dev: &[TimestampedExample],
    n_classes: usize,
    config: &SelectiveConfig,
    lagrangian: LagrangianState,
) -> Result<(SelectiveModel, SelectiveCurve)> {
    lagrangian.validate()?;
    let kind = GateKind::HardKuma {
        l: config.stretch_l,
        r: config.stretch_r,
    };
    KumaGateParams {
        a: 1.0,
        b: 1.0,
        l: config.stretch_l,
        r: config.stretch_r,
    }
    .validate()?;
    train_selective(kind, train, dev, n_classes, config, Some(lagrangian))
}

/// Trains the deterministic budgeted-projection extractor and its
/// predictor; each sequence may select `budget_ratio` of its tokens.
pub fn train_spectra(
    train: &[TimestampedExample],
    dev: &[TimestampedExample],
    n_classes: usize,
    config: &SelectiveConfig,
    budget_ratio: f64,
) -> Result<(SelectiveModel, SelectiveCurve)> {
    if !(budget_ratio > 0.0 && budget_ratio <= 1.0) {
        return Err(Error::Config("budget ratio must lie in (0, 1]".into()));
    }
    train_selective(GateKind::Spectra { budget_ratio }, train, dev, n_classes, config, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn loss(model: &SelectiveModel, input: &EncodedInput, label: usize, l0_weight: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = model.run(input, GateMode::Sample(&mut rng));
        let l0: f64 = run.kuma.iter().map(|g| g.expected_l0()).sum();
        -run.probs[label].ln() + l0_weight * l0
    }

    fn check_gradients(kind: GateKind) {
        let config = SelectiveConfig {
            embedding_dim: 3,
            hidden_dim: 2,
            seed: 5,
            ..Default::default()
        };
        let vocab = Vocabulary::build(["a b c d e"].into_iter());
        let mut model = SelectiveModel::init(kind, vocab, 2, &config);
        let input = model.encode("a c b e d");
        let l0_weight = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = model.run(&input, GateMode::Sample(&mut rng));
        let mut grads = vec![0.0; model.params.len()];
        model.backward(&run, 1, 1.0, l0_weight, &mut grads);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..model.params.len() {
            let orig = model.params[i];
            model.params[i] = orig + h;
            let up = loss(&model, &input, 1, l0_weight);
            model.params[i] = orig - h;
            let down = loss(&model, &input, 1, l0_weight);
            model.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grads[i]).abs() / (1.0 + fd.abs()));
        }
        assert!(worst < 1e-4, "{kind:?}: worst relative gradient error {worst}");
    }

    #[test]
    fn hardkuma_gradients_match_finite_differences() {
        check_gradients(GateKind::HardKuma { l: -0.1, r: 1.1 });
    }

    #[test]
    fn spectra_gradients_match_finite_differences() {
        check_gradients(GateKind::Spectra { budget_ratio: 0.4 });
    }

    #[test]
    fn lagrangian_moves_toward_target() {
        let mut l = LagrangianState::new(0.2, 0.5);
        l.update(0.6);
        assert!((l.penalty() - 0.2).abs() < 1e-12);
        l.update(0.0);
        l.update(0.0);
        assert!(l.penalty() < 0.0);
    }
}
