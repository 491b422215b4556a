//! Embedding layer, additive-attention pooling and a linear softmax head.
//!
//! ```text
//! a_i = W e_i + b        t_i = tanh(a_i)        s_i = u . t_i
//! alpha = softmax(s over visible positions)
//! h = sum_i alpha_i e_i  z = C h + c            p = softmax(z)
//! ```

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Classifier, EncodedInput, Embeddings, GradientTarget, Prediction, Predictor, TextClassifier, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::{self, dot};

pub const SNAPSHOT_VERSION: u32 = 1;

/// Flat parameter buffer with a fixed layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub data: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(vocab_size: usize, dim: usize, hidden: usize, n_classes: usize) -> Self {
        let len = vocab_size * dim + hidden * dim + 2 * hidden + n_classes * dim + n_classes;
        AttentionParams {
            vocab_size,
            dim,
            hidden,
            n_classes,
            data: vec![0.0; len],
        }
    }

    fn off_att_w(&self) -> usize {
        self.vocab_size * self.dim
    }
    fn off_att_b(&self) -> usize {
        self.off_att_w() + self.hidden * self.dim
    }
    fn off_att_u(&self) -> usize {
        self.off_att_b() + self.hidden
    }
    fn off_out_w(&self) -> usize {
        self.off_att_u() + self.hidden
    }
    fn off_out_b(&self) -> usize {
        self.off_out_w() + self.n_classes * self.dim
    }

    pub fn embedding(&self, token: usize) -> &[f64] {
        &self.data[token * self.dim..(token + 1) * self.dim]
    }
    pub fn embedding_mut(&mut self, token: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.data[token * d..(token + 1) * d]
    }
    pub fn att_w_row(&self, k: usize) -> &[f64] {
        let o = self.off_att_w() + k * self.dim;
        &self.data[o..o + self.dim]
    }
    pub fn att_b(&self) -> &[f64] {
        let o = self.off_att_b();
        &self.data[o..o + self.hidden]
    }
    pub fn att_u(&self) -> &[f64] {
        let o = self.off_att_u();
        &self.data[o..o + self.hidden]
    }
    pub fn out_w_row(&self, c: usize) -> &[f64] {
        let o = self.off_out_w() + c * self.dim;
        &self.data[o..o + self.dim]
    }
    pub fn out_b(&self) -> &[f64] {
        let o = self.off_out_b();
        &self.data[o..o + self.n_classes]
    }

    pub fn att_u_mut(&mut self) -> &mut [f64] {
        let o = self.off_att_u();
        let h = self.hidden;
        &mut self.data[o..o + h]
    }
    pub fn att_w_mut(&mut self) -> &mut [f64] {
        let o = self.off_att_w();
        let n = self.hidden * self.dim;
        &mut self.data[o..o + n]
    }
    pub fn out_w_mut(&mut self) -> &mut [f64] {
        let o = self.off_out_w();
        let n = self.n_classes * self.dim;
        &mut self.data[o..o + n]
    }
    pub fn out_b_mut(&mut self) -> &mut [f64] {
        let o = self.off_out_b();
        let n = self.n_classes;
        &mut self.data[o..o + n]
    }
}

/// Intermediate values of one forward pass, visible positions only.
struct Forward {
    vis: Vec<usize>,
    a: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    s: Vec<f64>,
    alpha: Vec<f64>,
    h: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionClassifier {
    pub vocab: Vocabulary,
    pub params: AttentionParams,
    pub target: GradientTarget,
    pub max_length: usize,
}

/// Serialized form of a trained classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub version: u32,
    pub max_length: usize,
    pub target: GradientTarget,
    pub vocab: Vocabulary,
    pub params: AttentionParams,
}

impl AttentionClassifier {
    /// Randomly initialized model.
    pub fn init<R: Rng>(
        vocab: Vocabulary,
        n_classes: usize,
        dim: usize,
        hidden: usize,
        max_length: usize,
        rng: &mut R,
    ) -> Self {
        let mut params = AttentionParams::zeros(vocab.len(), dim, hidden, n_classes);
        let emb = Normal::new(0.0, 0.3).unwrap();
        for i in 0..vocab.len() * dim {
            params.data[i] = emb.sample(rng);
        }
        let w = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).unwrap();
        for x in params.att_w_mut() {
            *x = w.sample(rng);
        }
        let u = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).unwrap();
        for x in params.att_u_mut() {
            *x = u.sample(rng);
        }
        for x in params.out_w_mut() {
            *x = w.sample(rng);
        }
        AttentionClassifier {
            vocab,
            params,
            target: GradientTarget::Probability,
            max_length,
        }
    }

    pub fn encode(&self, text: &str) -> EncodedInput {
        self.vocab.encode(text, self.max_length)
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: SNAPSHOT_VERSION,
            max_length: self.max_length,
            target: self.target,
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_snapshot(s: ModelSnapshot) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::Serde(format!("unsupported snapshot version {}", s.version)));
        }
        if s.params.vocab_size != s.vocab.len() {
            return Err(Error::Serde("vocabulary and embedding table disagree".into()));
        }
        Ok(AttentionClassifier {
            vocab: s.vocab,
            params: s.params,
            target: s.target,
            max_length: s.max_length,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.snapshot())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot(serde_json::from_str(&raw)?)
    }

    fn run(&self, emb: &[Vec<f64>], visible: &[bool]) -> Forward {
        let p = &self.params;
        let vis: Vec<usize> = (0..emb.len()).filter(|&i| visible[i]).collect();
        let mut a = Vec::with_capacity(vis.len());
        let mut t = Vec::with_capacity(vis.len());
        let mut s = Vec::with_capacity(vis.len());
        let u = p.att_u();
        let b = p.att_b();
        for &i in &vis {
            let ai: Vec<f64> = (0..p.hidden).map(|k| dot(p.att_w_row(k), &emb[i]) + b[k]).collect();
            let ti: Vec<f64> = ai.iter().map(|x| x.tanh()).collect();
            s.push(dot(u, &ti));
            a.push(ai);
            t.push(ti);
        }
        let alpha = numeric::softmax(&s);
        let mut h = vec![0.0; p.dim];
        for (j, &i) in vis.iter().enumerate() {
            for (hk, ek) in h.iter_mut().zip(&emb[i]) {
                *hk += alpha[j] * ek;
            }
        }
        let z = self.logits(&h);
        let probs = numeric::softmax(&z);
        Forward {
            vis,
            a,
            t,
            s,
            alpha,
            h,
            z,
            p: probs,
        }
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let p = &self.params;
        (0..p.n_classes).map(|c| dot(p.out_w_row(c), h) + p.out_b()[c]).collect()
    }

    /// d(objective)/dz for the explained scalar.
    fn objective_dz(&self, probs: &[f64], target: usize) -> Vec<f64> {
        match self.target {
            GradientTarget::Logit => (0..probs.len()).map(|c| if c == target { 1.0 } else { 0.0 }).collect(),
            GradientTarget::Probability => (0..probs.len())
                .map(|c| probs[target] * (if c == target { 1.0 } else { 0.0 } - probs[c]))
                .collect(),
        }
    }

    fn objective_value(&self, fwd: &Forward, target: usize) -> f64 {
        match self.target {
            GradientTarget::Logit => fwd.z[target],
            GradientTarget::Probability => fwd.p[target],
        }
    }

    /// Backpropagates `dz` to the embeddings and, optionally, to the flat
    /// parameter gradient buffer. Returns per-position embedding gradients
    /// and the gradient with respect to each visible attention weight.
    fn backward(
        &self,
        emb: &[Vec<f64>],
        fwd: &Forward,
        dz: &[f64],
        mut grads: Option<&mut AttentionParams>,
        token_ids: Option<&[usize]>,
    ) -> (Embeddings, Vec<f64>) {
        let p = &self.params;
        let d = p.dim;
        let mut dh = vec![0.0; d];
        for (c, &g) in dz.iter().enumerate() {
            for (x, w) in dh.iter_mut().zip(p.out_w_row(c)) {
                *x += g * w;
            }
        }
        if let Some(gr) = grads.as_deref_mut() {
            let ow = gr.off_out_w();
            let ob = gr.off_out_b();
            for (c, &g) in dz.iter().enumerate() {
                for (j, hj) in fwd.h.iter().enumerate() {
                    gr.data[ow + c * d + j] += g * hj;
                }
                gr.data[ob + c] += g;
            }
        }

        let mut d_emb: Embeddings = vec![vec![0.0; d]; emb.len()];
        let d_alpha: Vec<f64> = fwd.vis.iter().map(|&i| dot(&dh, &emb[i])).collect();
        let weighted: f64 = fwd.alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        let u = p.att_u();
        for (j, &i) in fwd.vis.iter().enumerate() {
            let alpha = fwd.alpha[j];
            let ds = alpha * (d_alpha[j] - weighted);
            let de = &mut d_emb[i];
            for (x, g) in de.iter_mut().zip(&dh) {
                *x += alpha * g;
            }
            for k in 0..p.hidden {
                let da = u[k] * ds * (1.0 - fwd.t[j][k] * fwd.t[j][k]);
                if da == 0.0 {
                    continue;
                }
                for (x, w) in de.iter_mut().zip(p.att_w_row(k)) {
                    *x += da * w;
                }
                if let Some(gr) = grads.as_deref_mut() {
                    let ow = gr.off_att_w() + k * d;
                    for (jj, e) in emb[i].iter().enumerate() {
                        gr.data[ow + jj] += da * e;
                    }
                    let ob = gr.off_att_b();
                    gr.data[ob + k] += da;
                }
            }
            if let Some(gr) = grads.as_deref_mut() {
                let ou = gr.off_att_u();
                for k in 0..p.hidden {
                    gr.data[ou + k] += ds * fwd.t[j][k];
                }
            }
        }
        if let (Some(gr), Some(ids)) = (grads, token_ids) {
            for &i in &fwd.vis {
                for (x, g) in gr.embedding_mut(ids[i]).iter_mut().zip(&d_emb[i]) {
                    *x += g;
                }
            }
        }
        (d_emb, d_alpha)
    }

    /// Cross-entropy loss of one example; accumulates parameter gradients
    /// into `grads` when given.
    pub(crate) fn loss_and_grad(&self, input: &EncodedInput, label: usize, grads: Option<&mut AttentionParams>) -> f64 {
        let emb = self.embed(input);
        let fwd = self.run(&emb, &input.mask);
        let loss = -fwd.p[label].max(1e-300).ln();
        if let Some(gr) = grads {
            let mut dz = fwd.p.clone();
            dz[label] -= 1.0;
            self.backward(&emb, &fwd, &dz, Some(gr), Some(&input.token_ids));
        }
        loss
    }

    /// The explained scalar when attention is replaced by `alpha` (one weight
    /// per position, masked positions ignored).
    pub fn output_given_attention(&self, emb: &[Vec<f64>], visible: &[bool], alpha: &[f64], target: usize) -> f64 {
        let mut h = vec![0.0; self.params.dim];
        for i in 0..emb.len() {
            if visible[i] {
                for (hk, ek) in h.iter_mut().zip(&emb[i]) {
                    *hk += alpha[i] * ek;
                }
            }
        }
        let z = self.logits(&h);
        match self.target {
            GradientTarget::Logit => z[target],
            GradientTarget::Probability => numeric::softmax(&z)[target],
        }
    }

    fn spread(&self, fwd: &Forward, len: usize, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (j, &i) in fwd.vis.iter().enumerate() {
            out[i] = values[j];
        }
        out
    }
}

impl TextClassifier for AttentionClassifier {
    fn n_labels(&self) -> usize {
        self.params.n_classes
    }

    fn classify(&self, _id: &str, text: &str) -> Result<Prediction> {
        Ok(self.predict(&self.encode(text)))
    }
}

impl Predictor for AttentionClassifier {
    fn n_classes(&self) -> usize {
        self.params.n_classes
    }

    fn predict(&self, input: &EncodedInput) -> Prediction {
        let emb = self.embed(input);
        self.forward(&emb, &input.mask)
    }
}

const QUADRATURE_NODES: usize = 24;

impl Classifier for AttentionClassifier {
    fn embedding_dim(&self) -> usize {
        self.params.dim
    }

    fn embed(&self, input: &EncodedInput) -> Embeddings {
        input
            .token_ids
            .iter()
            .zip(&input.mask)
            .map(|(&id, &visible)| {
                if visible {
                    self.params.embedding(id).to_vec()
                } else {
                    vec![0.0; self.params.dim]
                }
            })
            .collect()
    }

    fn forward(&self, embeddings: &[Vec<f64>], visible: &[bool]) -> Prediction {
        let fwd = self.run(embeddings, visible);
        let attention = self.spread(&fwd, embeddings.len(), &fwd.alpha);
        Prediction::from_probabilities(fwd.p, Some(attention))
    }

    fn output_gradient(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> (f64, Embeddings) {
        let fwd = self.run(embeddings, visible);
        let dz = self.objective_dz(&fwd.p, target);
        let (d_emb, _) = self.backward(embeddings, &fwd, &dz, None, None);
        (self.objective_value(&fwd, target), d_emb)
    }

    fn output(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> f64 {
        let fwd = self.run(embeddings, visible);
        self.objective_value(&fwd, target)
    }

    fn attention(&self, embeddings: &[Vec<f64>], visible: &[bool]) -> Option<Vec<f64>> {
        let fwd = self.run(embeddings, visible);
        Some(self.spread(&fwd, embeddings.len(), &fwd.alpha))
    }

    fn attention_gradient(&self, embeddings: &[Vec<f64>], visible: &[bool], target: usize) -> Option<Vec<f64>> {
        let fwd = self.run(embeddings, visible);
        let dz = self.objective_dz(&fwd.p, target);
        let (_, d_alpha) = self.backward(embeddings, &fwd, &dz, None, None);
        Some(self.spread(&fwd, embeddings.len(), &d_alpha))
    }

    /// Layer-wise rescale rule. Elementwise nonlinearities (tanh) use the
    /// secant slope; the two softmaxes use their Jacobian averaged along the
    /// segment between reference and input activations; the bilinear
    /// pooling term splits its difference exactly through midpoint values.
    fn deeplift_multipliers(
        &self,
        input: &[Vec<f64>],
        reference: &[Vec<f64>],
        visible: &[bool],
        target: usize,
    ) -> Embeddings {
        let p = &self.params;
        let fx = self.run(input, visible);
        let fr = self.run(reference, visible);
        let (nodes, weights) = numeric::gauss_legendre_unit(QUADRATURE_NODES);

        // output block: objective(z)
        let mut m_z = vec![0.0; p.n_classes];
        for (tau, w) in nodes.iter().zip(&weights) {
            let z: Vec<f64> = fr.z.iter().zip(&fx.z).map(|(r, x)| r + tau * (x - r)).collect();
            let probs = numeric::softmax(&z);
            for (m, g) in m_z.iter_mut().zip(self.objective_dz(&probs, target)) {
                *m += w * g;
            }
        }
        let mut m_h = vec![0.0; p.dim];
        for (c, &g) in m_z.iter().enumerate() {
            for (x, wv) in m_h.iter_mut().zip(p.out_w_row(c)) {
                *x += g * wv;
            }
        }

        // pooling h = sum alpha_i e_i
        let mut mult: Embeddings = vec![vec![0.0; p.dim]; input.len()];
        let mut m_alpha = Vec::with_capacity(fx.vis.len());
        for (j, &i) in fx.vis.iter().enumerate() {
            let alpha_mid = 0.5 * (fx.alpha[j] + fr.alpha[j]);
            for (m, g) in mult[i].iter_mut().zip(&m_h) {
                *m += alpha_mid * g;
            }
            let e_mid: Vec<f64> = input[i].iter().zip(&reference[i]).map(|(x, r)| 0.5 * (x + r)).collect();
            m_alpha.push(dot(&e_mid, &m_h));
        }

        // attention softmax
        let mut m_s = vec![0.0; fx.vis.len()];
        for (tau, w) in nodes.iter().zip(&weights) {
            let s: Vec<f64> = fr.s.iter().zip(&fx.s).map(|(r, x)| r + tau * (x - r)).collect();
            let alpha = numeric::softmax(&s);
            let avg: f64 = alpha.iter().zip(&m_alpha).map(|(a, m)| a * m).sum();
            for (j, ms) in m_s.iter_mut().enumerate() {
                *ms += w * alpha[j] * (m_alpha[j] - avg);
            }
        }

        // s = u . tanh(W e + b)
        let u = p.att_u();
        for (j, &i) in fx.vis.iter().enumerate() {
            for k in 0..p.hidden {
                let (ax, ar) = (fx.a[j][k], fr.a[j][k]);
                let slope = if (ax - ar).abs() > 1e-9 {
                    (fx.t[j][k] - fr.t[j][k]) / (ax - ar)
                } else {
                    1.0 - fx.t[j][k] * fx.t[j][k]
                };
                let m_a = u[k] * m_s[j] * slope;
                for (m, wv) in mult[i].iter_mut().zip(p.att_w_row(k)) {
                    *m += m_a * wv;
                }
            }
        }
        mult
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn model(target: GradientTarget) -> AttentionClassifier {
        let vocab = Vocabulary::build(["a b c d e f g h"]);
        let mut m = AttentionClassifier::init(vocab, 3, 5, 4, 16, &mut seed::rng(11));
        for x in m.params.out_w_mut() {
            *x *= 3.0;
        }
        m.target = target;
        m
    }

    #[test]
    fn mean_pool_linear_head_gradient() {
        // with u = 0 attention is uniform and h is the mean embedding
        let mut m = model(GradientTarget::Logit);
        for x in m.params.att_u_mut() {
            *x = 0.0;
        }
        let input = EncodedInput::new(vec![1, 2, 3, 4]);
        let (_, grad) = m.output_gradient(&m.embed(&input), &input.mask, 1);
        let w = m.params.out_w_row(1).to_vec();
        for g in &grad {
            for (x, y) in g.iter().zip(&w) {
                assert!((x - y / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn masked_positions_have_zero_gradient_and_attention() {
        let m = model(GradientTarget::Probability);
        let input = EncodedInput::new(vec![1, 2, 3]).with_mask(vec![true, false, true]);
        let emb = m.embed(&input);
        let (_, grad) = m.output_gradient(&emb, &input.mask, 0);
        assert!(grad[1].iter().all(|&g| g == 0.0));
        let att = m.attention(&emb, &input.mask).unwrap();
        assert_eq!(att[1], 0.0);
        assert!((att.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let all_masked = input.with_mask(vec![false; 3]);
        let emb = m.embed(&all_masked);
        let (_, grad) = m.output_gradient(&emb, &all_masked.mask, 0);
        assert!(grad.iter().flatten().all(|&g| g == 0.0));
        let p = m.predict(&all_masked);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deeplift_sums_to_delta() {
        for target in [GradientTarget::Probability, GradientTarget::Logit] {
            let m = model(target);
            let input = EncodedInput::new(vec![1, 5, 2, 7, 3]);
            let x = m.embed(&input);
            let r = super::super::zero_embeddings(x.len(), 5);
            let mult = m.deeplift_multipliers(&x, &r, &input.mask, 2);
            let total: f64 = mult.iter().zip(&x).map(|(m, e)| dot(m, e)).sum();
            let delta = m.output(&x, &input.mask, 2) - m.output(&r, &input.mask, 2);
            assert!((total - delta).abs() < 1e-10, "{total} vs {delta}");
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let m = model(GradientTarget::Probability);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = AttentionClassifier::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
