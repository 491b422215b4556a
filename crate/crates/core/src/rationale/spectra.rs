//! Deterministic budgeted sparse projection.
//!
//! `project_budget` returns the Euclidean projection of a score vector onto
//! `{m in [0,1]^L : sum(m) <= budget}`. The solution has the form
//! `m_i = clamp(s_i - tau, 0, 1)` with `tau >= 0`; `tau` is found exactly on
//! the piecewise-linear function `tau -> sum_i clamp(s_i - tau, 0, 1)`.

use serde::{Deserialize, Serialize};

use super::{Rationale, RationaleSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConstraint {
    pub budget: usize,
}

impl BudgetConstraint {
    pub fn new(budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        Ok(BudgetConstraint { budget })
    }

    /// Budget for `ratio` of a sequence of `len` tokens (at least 1).
    pub fn from_ratio(ratio: f64, len: usize) -> Self {
        let b = crate::attribution::rationale_size(ratio, len).max(1);
        BudgetConstraint { budget: b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub mask: Vec<f64>,
    pub tau: f64,
}

fn clamped_sum(scores: &[f64], tau: f64) -> f64 {
    scores.iter().map(|s| (s - tau).clamp(0.0, 1.0)).sum()
}

pub fn project_budget(scores: &[f64], budget: f64) -> Projection {
    let tau = if clamped_sum(scores, 0.0) <= budget {
        0.0
    } else {
        let mut points: Vec<f64> = scores
            .iter()
            .flat_map(|&s| [s, s - 1.0])
            .filter(|&t| t > 0.0)
            .collect();
        points.push(0.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut tau = *points.last().unwrap();
        for w in points.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (g_lo, g_hi) = (clamped_sum(scores, lo), clamped_sum(scores, hi));
            if g_lo >= budget && g_hi <= budget {
                tau = if g_lo == g_hi {
                    lo
                } else {
                    lo + (g_lo - budget) * (hi - lo) / (g_lo - g_hi)
                };
                break;
            }
        }
        tau
    };
    Projection {
        mask: scores.iter().map(|s| (s - tau).clamp(0.0, 1.0)).collect(),
        tau,
    }
}

/// Vector-Jacobian product of the projection: maps d(loss)/d(mask) to
/// d(loss)/d(scores). Coordinates strictly inside (0, 1) are free; when the
/// budget is active their shared shift removes the mean gradient.
pub fn project_budget_backward(projection: &Projection, grad_mask: &[f64]) -> Vec<f64> {
    let free: Vec<usize> = projection
        .mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0 && m < 1.0)
        .map(|(i, _)| i)
        .collect();
    let mut out = vec![0.0; grad_mask.len()];
    if free.is_empty() {
        return out;
    }
    let shift = if projection.tau > 0.0 {
        free.iter().map(|&i| grad_mask[i]).sum::<f64>() / free.len() as f64
    } else {
        0.0
    };
    for &i in &free {
        out[i] = grad_mask[i] - shift;
    }
    out
}

/// Sparse deterministic rationale: the support of the budgeted projection.
pub fn spectra_extract(scores: &[f64], constraint: BudgetConstraint) -> Rationale {
    let projection = project_budget(scores, constraint.budget as f64);
    let indices = projection
        .mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, _)| i)
        .collect();
    Rationale {
        indices,
        source: RationaleSource::Spectra,
        soft_mask: Some(projection.mask),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_score_saturates() {
        let r = spectra_extract(&[5.0, 1.0, 1.0], BudgetConstraint::new(1).unwrap());
        assert_eq!(r.soft_mask.unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(r.indices, vec![0]);
    }

    #[test]
    fn equal_scores_spread_uniformly() {
        for (l, b) in [(4usize, 2usize), (6, 1), (5, 5), (3, 7)] {
            let scores = vec![2.0; l];
            let p = project_budget(&scores, b as f64);
            let expected = (b as f64 / l as f64).min(1.0);
            for m in p.mask {
                assert!((m - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feasible_point_is_fixed() {
        let m = [0.2, 0.0, 1.0, 0.5];
        let p = project_budget(&m, 2.0);
        assert_eq!(p.mask, m.to_vec());
        assert_eq!(p.tau, 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = [0.9, 0.3, 0.75, -0.2, 0.6];
        let g = [1.0, -2.0, 0.5, 3.0, 0.25];
        let p = project_budget(&s, 1.5);
        let analytic = project_budget_backward(&p, &g);
        let h = 1e-7;
        for i in 0..s.len() {
            let mut sp = s;
            sp[i] += h;
            let mut sm = s;
            sm[i] -= h;
            let fp: f64 = project_budget(&sp, 1.5).mask.iter().zip(&g).map(|(m, g)| m * g).sum();
            let fm: f64 = project_budget(&sm, 1.5).mask.iter().zip(&g).map(|(m, g)| m * g).sum();
            assert!((analytic[i] - (fp - fm) / (2.0 * h)).abs() < 1e-6);
        }
    }
}
