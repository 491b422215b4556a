use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{check_target, AttributionConfig, AttributionMap, AttributionMethod};
use crate::error::{Error, Result};
use crate::model::{Classifier, EncodedInput};
use crate::seed;

/// Local linear surrogate over token-presence perturbations.
///
/// The first sample is the unperturbed input; every other sample keeps each
/// visible token independently with probability 0.5. Samples are weighted by
/// an exponential kernel on the cosine distance to the all-ones vector and a
/// ridge-regularized weighted least-squares fit (unpenalized intercept)
/// gives the scores.
pub fn lime_attr<C: Classifier + ?Sized>(
    model: &C,
    input: &EncodedInput,
    target: usize,
    config: &AttributionConfig,
    key: &str,
) -> Result<AttributionMap> {
    check_target(model, target)?;
    if config.lime_samples == 0 {
        return Err(Error::Config("lime_samples must be positive".into()));
    }
    let positions = input.visible_positions();
    let l = positions.len();
    let mut scores_full = vec![0.0; input.len()];
    if l == 0 {
        return AttributionMap::from_positions(input, &scores_full, AttributionMethod::Lime, target);
    }
    let width = config.lime_kernel_width.unwrap_or(0.75 * (l as f64).sqrt());
    let mut rng = seed::rng_for(config.seed, &["lime", key]);

    let n = config.lime_samples;
    let mut x = DMatrix::<f64>::zeros(n, l);
    let mut y = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    for s in 0..n {
        let presence: Vec<bool> = if s == 0 {
            vec![true; l]
        } else {
            (0..l).map(|_| rng.random_bool(0.5)).collect()
        };
        let mut mask = vec![false; input.len()];
        let mut kept = 0usize;
        for (j, &present) in presence.iter().enumerate() {
            if present {
                mask[positions[j]] = true;
                x[(s, j)] = 1.0;
                kept += 1;
            }
        }
        y[s] = model.predict(&input.with_mask(mask)).probabilities[target];
        let distance = if kept == 0 {
            1.0
        } else {
            1.0 - (kept as f64 / l as f64).sqrt()
        };
        w[s] = (-(distance * distance) / (width * width)).exp();
    }

    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if ymax - ymin < 1e-12 {
        log::warn!("lime: all perturbation outputs identical for {key}; returning zero scores");
        return AttributionMap::from_positions(input, &scores_full, AttributionMethod::Lime, target);
    }

    let wsum = w.sum();
    let x_mean: Vec<f64> = (0..l).map(|j| x.column(j).dot(&w) / wsum).collect();
    let y_mean = y.dot(&w) / wsum;
    let mut xc = x.clone();
    for j in 0..l {
        for s in 0..n {
            xc[(s, j)] -= x_mean[j];
        }
    }
    let yc = y.map(|v| v - y_mean);
    let xw = {
        let mut m = xc.clone();
        for s in 0..n {
            for j in 0..l {
                m[(s, j)] *= w[s];
            }
        }
        m
    };
    let mut gram = xc.transpose() * &xw;
    for j in 0..l {
        gram[(j, j)] += config.lime_ridge;
    }
    let rhs = xw.transpose() * yc;
    let coef = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("lime surrogate system is singular".into()))?,
    };
    for (j, &p) in positions.iter().enumerate() {
        scores_full[p] = coef[j];
    }
    AttributionMap::from_positions(input, &scores_full, AttributionMethod::Lime, target)
}
