//! Stretched-and-rectified Kumaraswamy gates.
//!
//! A Kumaraswamy(a, b) draw `t` is stretched to `s = l + (r - l) t` with
//! `l < 0 < 1 < r` and clamped to [0, 1], which puts point masses on 0 and 1
//! while staying reparameterizable in between.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KumaGateParams {
    pub a: f64,
    pub b: f64,
    pub l: f64,
    pub r: f64,
}

pub const DEFAULT_STRETCH: (f64, f64) = (-0.1, 1.1);

impl KumaGateParams {
    pub fn new(a: f64, b: f64) -> Self {
        KumaGateParams {
            a,
            b,
            l: DEFAULT_STRETCH.0,
            r: DEFAULT_STRETCH.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::Config("Kumaraswamy shapes must be positive".into()));
        }
        if !(self.l < 0.0 && self.r > 1.0) {
            return Err(Error::Config("stretch bounds must satisfy l < 0 < 1 < r".into()));
        }
        Ok(())
    }

    /// CDF of the unstretched Kumaraswamy variable.
    pub fn kuma_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            1.0 - (1.0 - t.powf(self.a)).powf(self.b)
        }
    }

    /// Inverse CDF of the unstretched Kumaraswamy variable.
    pub fn kuma_quantile(&self, u: f64) -> f64 {
        (1.0 - (1.0 - u).powf(1.0 / self.b)).powf(1.0 / self.a)
    }

    fn unstretch(&self, z: f64) -> f64 {
        (z - self.l) / (self.r - self.l)
    }

    /// CDF of the rectified gate value.
    pub fn gate_cdf(&self, z: f64) -> f64 {
        if z < 0.0 {
            0.0
        } else if z >= 1.0 {
            1.0
        } else {
            self.kuma_cdf(self.unstretch(z))
        }
    }

    pub fn prob_zero(&self) -> f64 {
        self.kuma_cdf(self.unstretch(0.0))
    }

    pub fn prob_one(&self) -> f64 {
        1.0 - self.kuma_cdf(self.unstretch(1.0))
    }

    /// P(z != 0), the expected L0 contribution of the gate.
    pub fn expected_l0(&self) -> f64 {
        1.0 - self.prob_zero()
    }

    /// Derivatives of [`Self::expected_l0`] with respect to (a, b).
    pub fn expected_l0_grad(&self) -> (f64, f64) {
        let t0 = self.unstretch(0.0);
        let ta = t0.powf(self.a);
        let base = 1.0 - ta;
        let da = self.b * base.powf(self.b - 1.0) * (-ta * t0.ln());
        let db = base.powf(self.b) * base.ln();
        (da, db)
    }

    /// E[z], integrating the quantile function over the continuous part.
    pub fn expected_value(&self) -> f64 {
        let u0 = self.prob_zero();
        let u1 = 1.0 - self.prob_one();
        let (nodes, weights) = numeric::gauss_legendre_unit(32);
        let interior: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| {
                let u = u0 + (u1 - u0) * x;
                w * (self.l + (self.r - self.l) * self.kuma_quantile(u)).clamp(0.0, 1.0)
            })
            .sum::<f64>()
            * (u1 - u0);
        interior + self.prob_one()
    }

    /// Deterministic test-time gate: 0 or 1 when either point mass is the
    /// most likely outcome, otherwise the expected value.
    pub fn deterministic_gate(&self) -> f64 {
        let p0 = self.prob_zero();
        let p1 = self.prob_one();
        let pc = 1.0 - p0 - p1;
        if pc > p0 && pc > p1 {
            self.expected_value()
        } else if p0 >= p1 {
            0.0
        } else {
            1.0
        }
    }
}

/// Reparameterized gate sample for uniform noise `u` in (0, 1).
pub fn kuma_sample(params: &KumaGateParams, u: f64) -> f64 {
    let t = params.kuma_quantile(u);
    (params.l + (params.r - params.l) * t).clamp(0.0, 1.0)
}

/// Gate sample and its derivatives with respect to (a, b) at fixed `u`.
/// The derivatives vanish where the gate is rectified.
pub fn kuma_sample_grad(params: &KumaGateParams, u: f64) -> (f64, f64, f64) {
    let (a, b) = (params.a, params.b);
    let w = (1.0 - u).powf(1.0 / b);
    let base = (1.0 - w).max(1e-300);
    let t = base.powf(1.0 / a);
    let s = params.l + (params.r - params.l) * t;
    if s <= 0.0 || s >= 1.0 {
        return (s.clamp(0.0, 1.0), 0.0, 0.0);
    }
    let scale = params.r - params.l;
    let dt_da = -t * base.ln() / (a * a);
    let dw_db = -w * (1.0 - u).ln() / (b * b);
    let dt_dw = -(1.0 / a) * base.powf(1.0 / a - 1.0);
    (s, scale * dt_da, scale * dt_dw * dw_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_case() {
        let p = KumaGateParams::new(1.0, 1.0);
        assert!((kuma_sample(&p, 0.5) - 0.5).abs() < 1e-12);
        assert!((p.prob_zero() - 1.0 / 12.0).abs() < 1e-12);
        assert!((p.prob_one() - 1.0 / 12.0).abs() < 1e-12);
        assert!((p.expected_value() - 0.5).abs() < 1e-9);
        assert_eq!(kuma_sample(&p, 1.0 - 1e-12), 1.0);
    }

    #[test]
    fn rectification_near_one() {
        for (a, b) in [(0.3, 0.3), (2.0, 5.0), (7.0, 0.5)] {
            let p = KumaGateParams::new(a, b);
            assert_eq!(kuma_sample(&p, 1.0 - 1e-15), 1.0);
        }
    }

    #[test]
    fn sample_gradients_match_finite_differences() {
        let h = 1e-6;
        for (a, b, u) in [(0.7, 1.3, 0.4), (2.0, 3.0, 0.6), (1.2, 0.8, 0.25)] {
            let p = KumaGateParams::new(a, b);
            let (_, da, db) = kuma_sample_grad(&p, u);
            let fd_a = (kuma_sample(&KumaGateParams::new(a + h, b), u) - kuma_sample(&KumaGateParams::new(a - h, b), u)) / (2.0 * h);
            let fd_b = (kuma_sample(&KumaGateParams::new(a, b + h), u) - kuma_sample(&KumaGateParams::new(a, b - h), u)) / (2.0 * h);
            assert!((da - fd_a).abs() < 1e-6, "{da} {fd_a}");
            assert!((db - fd_b).abs() < 1e-6, "{db} {fd_b}");
        }
    }

    #[test]
    fn expected_l0_gradient() {
        let h = 1e-6;
        let p = KumaGateParams::new(0.9, 1.7);
        let (da, db) = p.expected_l0_grad();
        let fd_a = (KumaGateParams::new(0.9 + h, 1.7).expected_l0() - KumaGateParams::new(0.9 - h, 1.7).expected_l0()) / (2.0 * h);
        let fd_b = (KumaGateParams::new(0.9, 1.7 + h).expected_l0() - KumaGateParams::new(0.9, 1.7 - h).expected_l0()) / (2.0 * h);
        assert!((da - fd_a).abs() < 1e-7);
        assert!((db - fd_b).abs() < 1e-7);
    }

    #[test]
    fn deterministic_gate_extremes() {
        // mass piled near 0
        assert_eq!(KumaGateParams::new(0.2, 5.0).deterministic_gate(), 0.0);
        // mass piled near 1
        assert_eq!(KumaGateParams::new(50.0, 0.05).deterministic_gate(), 1.0);
        let mid = KumaGateParams::new(3.0, 3.0).deterministic_gate();
        assert!(mid > 0.0 && mid < 1.0);
    }
}
