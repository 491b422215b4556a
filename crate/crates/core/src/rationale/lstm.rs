//! Bidirectional LSTM over a flat parameter slice, with exact backprop.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::numeric::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub input: usize,
    pub hidden: usize,
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub struct BiLstmCache {
    fwd: Vec<Step>,
    bwd: Vec<Step>,
    /// `[h_forward; h_backward]` per position.
    pub outputs: Vec<Vec<f64>>,
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize) -> Self {
        BiLstm { input, hidden }
    }

    fn cols(&self) -> usize {
        self.input + self.hidden
    }

    fn direction_params(&self) -> usize {
        4 * self.hidden * self.cols() + 4 * self.hidden
    }

    pub fn n_params(&self) -> usize {
        2 * self.direction_params()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
    pub fn init<R: Rng>(&self, params: &mut [f64], rng: &mut R) {
        let k = 1.0 / (self.hidden as f64).sqrt();
        let dist = Uniform::new(-k, k).unwrap();
        let dp = self.direction_params();
        let h = self.hidden;
        for dir in 0..2 {
            let p = &mut params[dir * dp..(dir + 1) * dp];
            let nw = 4 * h * self.cols();
            for x in p[..nw].iter_mut() {
                *x = dist.sample(rng);
            }
            for (j, x) in p[nw..].iter_mut().enumerate() {
                *x = if (h..2 * h).contains(&j) { 1.0 } else { 0.0 };
            }
        }
    }

    fn step(&self, p: &[f64], x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Step, Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let cols = self.cols();
        let bias = &p[4 * hd * cols..];
        let mut pre = vec![0.0; 4 * hd];
        for (r, out) in pre.iter_mut().enumerate() {
            let row = &p[r * cols..(r + 1) * cols];
            let mut acc = bias[r];
            for (w, v) in row[..self.input].iter().zip(x) {
                acc += w * v;
            }
            for (w, v) in row[self.input..].iter().zip(h_prev) {
                acc += w * v;
            }
            *out = acc;
        }
        let i: Vec<f64> = pre[..hd].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = pre[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = pre[2 * hd..3 * hd].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = pre[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
        let step = Step {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        (step, h, c)
    }

    pub fn forward(&self, params: &[f64], xs: &[Vec<f64>]) -> BiLstmCache {
        let dp = self.direction_params();
        let hd = self.hidden;
        let n = xs.len();
        let mut outputs = vec![vec![0.0; 2 * hd]; n];
        let mut fwd = Vec::with_capacity(n);
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        for (t, x) in xs.iter().enumerate() {
            let (s, h2, c2) = self.step(&params[..dp], x, &h, &c);
            outputs[t][..hd].copy_from_slice(&h2);
            fwd.push(s);
            h = h2;
            c = c2;
        }
        let mut bwd = Vec::with_capacity(n);
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        for t in (0..n).rev() {
            let (s, h2, c2) = self.step(&params[dp..], &xs[t], &h, &c);
            outputs[t][hd..].copy_from_slice(&h2);
            bwd.push(s);
            h = h2;
            c = c2;
        }
        bwd.reverse();
        BiLstmCache { fwd, bwd, outputs }
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to each input vector.
    pub fn backward(&self, params: &[f64], cache: &BiLstmCache, d_out: &[Vec<f64>], grads: &mut [f64]) -> Vec<Vec<f64>> {
        let dp = self.direction_params();
        let hd = self.hidden;
        let n = d_out.len();
        let mut dx = vec![vec![0.0; self.input]; n];
        let (gf, gb) = grads.split_at_mut(dp);
        // forward direction runs t = 0..n, so backprop in reverse
        let order_f: Vec<usize> = (0..n).rev().collect();
        self.backward_direction(&params[..dp], &cache.fwd, d_out, 0, &order_f, gf, &mut dx);
        let order_b: Vec<usize> = (0..n).collect();
        self.backward_direction(&params[dp..], &cache.bwd, d_out, hd, &order_b, gb, &mut dx);
        dx
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_direction(
        &self,
        p: &[f64],
        steps: &[Step],
        d_out: &[Vec<f64>],
        offset: usize,
        order: &[usize],
        grads: &mut [f64],
        dx: &mut [Vec<f64>],
    ) {
        let hd = self.hidden;
        let cols = self.cols();
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dpre = vec![0.0; 4 * hd];
        for &t in order {
            let s = &steps[t];
            let mut dc = dc_next.clone();
            for k in 0..hd {
                let dh = d_out[t][offset + k] + dh_next[k];
                let do_ = dh * s.tanh_c[k];
                dc[k] += dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let di = dc[k] * s.g[k];
                let df = dc[k] * s.c_prev[k];
                let dg = dc[k] * s.i[k];
                dpre[k] = di * s.i[k] * (1.0 - s.i[k]);
                dpre[hd + k] = df * s.f[k] * (1.0 - s.f[k]);
                dpre[2 * hd + k] = dg * (1.0 - s.g[k] * s.g[k]);
                dpre[3 * hd + k] = do_ * s.o[k] * (1.0 - s.o[k]);
                dc_next[k] = dc[k] * s.f[k];
            }
            let bias_off = 4 * hd * cols;
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dpre.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[bias_off + r] += d;
                let row = &p[r * cols..(r + 1) * cols];
                let grow = &mut grads[r * cols..(r + 1) * cols];
                for j in 0..self.input {
                    grow[j] += d * s.x[j];
                    dx[t][j] += d * row[j];
                }
                for j in 0..hd {
                    grow[self.input + j] += d * s.h_prev[j];
                    dh_next[j] += d * row[self.input + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn gradients_match_finite_differences() {
        let net = BiLstm::new(3, 4);
        let mut params = vec![0.0; net.n_params()];
        let mut rng = seed::rng(5);
        net.init(&mut params, &mut rng);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|t| (0..3).map(|j| ((t * 3 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let weights: Vec<Vec<f64>> = (0..4)
            .map(|t| (0..8).map(|j| ((t * 8 + j) as f64 * 0.91).cos()).collect())
            .collect();
        let loss = |p: &[f64], xs: &[Vec<f64>]| -> f64 {
            let c = net.forward(p, xs);
            c.outputs.iter().zip(&weights).map(|(o, w)| crate::numeric::dot(o, w)).sum()
        };
        let cache = net.forward(&params, &xs);
        let mut grads = vec![0.0; net.n_params()];
        let dx = net.backward(&params, &cache, &weights, &mut grads);
        let h = 1e-6;
        for idx in (0..params.len()).step_by(7) {
            let mut pp = params.clone();
            pp[idx] += h;
            let mut pm = params.clone();
            pm[idx] -= h;
            let fd = (loss(&pp, &xs) - loss(&pm, &xs)) / (2.0 * h);
            assert!((fd - grads[idx]).abs() < 1e-7, "param {idx}: {fd} vs {}", grads[idx]);
        }
        for t in 0..4 {
            for j in 0..3 {
                let mut xp = xs.clone();
                xp[t][j] += h;
                let mut xm = xs.clone();
                xm[t][j] -= h;
                let fd = (loss(&params, &xp) - loss(&params, &xm)) / (2.0 * h);
                assert!((fd - dx[t][j]).abs() < 1e-7);
            }
        }
    }
}
