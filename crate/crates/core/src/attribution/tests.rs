use proptest::prelude::*;

use super::*;
use crate::model::reference::{PositionalLinear, PresenceLinear};
use crate::model::{AttentionClassifier, GradientTarget, Vocabulary};

fn linear_model() -> PositionalLinear {
    // 4 tokens, dim 2, 2 classes, 5 positions
    let table = vec![vec![0.0, 0.0], vec![1.0, -0.5], vec![0.3, 2.0], vec![-1.2, 0.7]];
    let weights = (0..2)
        .map(|c| {
            (0..5)
                .map(|i| vec![0.4 * i as f64 - 0.7 * c as f64, 1.0 - 0.3 * i as f64 + c as f64])
                .collect()
        })
        .collect();
    PositionalLinear {
        table,
        weights,
        bias: vec![0.2, -0.1],
    }
}

/// <w_target_i, e_i> for each position: the exact attribution of a linear
/// logit against the zero baseline.
fn linear_oracle(m: &PositionalLinear, input: &EncodedInput, target: usize) -> Vec<f64> {
    input
        .visible_positions()
        .iter()
        .map(|&i| {
            let e = &m.table[input.token_ids[i]];
            m.weights[target][i].iter().zip(e).map(|(w, x)| w * x).sum()
        })
        .collect()
}

fn attention_model(target: GradientTarget) -> AttentionClassifier {
    let vocab = Vocabulary::build(["a b c d e f g h"]);
    let mut m = AttentionClassifier::init(vocab, 3, 4, 3, 16, &mut seed::rng(7));
    for x in m.params.out_w_mut() {
        *x *= 2.5;
    }
    m.target = target;
    m
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn gradient_methods_are_exact_on_a_linear_logit() {
    let m = linear_model();
    let input = EncodedInput::new(vec![1, 2, 3, 2, 1]).with_mask(vec![true, true, false, true, true]);
    let config = AttributionConfig::default();
    for target in 0..2 {
        let oracle = linear_oracle(&m, &input, target);
        close(&input_x_grad(&m, &input, target).unwrap().scores, &oracle, 1e-12);
        close(&integrated_gradients(&m, &input, target, &config).unwrap().scores, &oracle, 1e-12);
        close(&gradient_shap(&m, &input, target, &config, "x").unwrap().scores, &oracle, 1e-12);
        close(&deeplift(&m, &input, target).unwrap().scores, &oracle, 1e-12);
    }
}

#[test]
fn deeplift_shap_on_a_linear_logit_averages_over_baselines() {
    let m = linear_model();
    let input = EncodedInput::new(vec![3, 1, 2]);
    let config = AttributionConfig {
        dlshap_baselines: 4,
        dlshap_noise: 0.5,
        ..Default::default()
    };
    let baselines = sample_baselines(&config, 3, 2, "k").unwrap();
    let got = deeplift_shap(&m, &input, 1, &baselines).unwrap();
    let oracle: Vec<f64> = (0..3)
        .map(|i| {
            let e = &m.table[input.token_ids[i]];
            baselines
                .iter()
                .map(|b| m.weights[1][i].iter().zip(e.iter().zip(&b[i])).map(|(w, (x, r))| w * (x - r)).sum::<f64>())
                .sum::<f64>()
                / 4.0
        })
        .collect();
    close(&got.scores, &oracle, 1e-12);
}

#[test]
fn scaled_attention_is_attention_times_its_own_gradient() {
    let m = attention_model(GradientTarget::Probability);
    let input = EncodedInput::new(vec![1, 4, 2, 6, 3]).with_mask(vec![true, true, true, false, true]);
    let emb = m.embed(&input);
    let alpha = m.attention(&emb, &input.mask).unwrap();
    let h = 1e-6;
    let mut oracle = Vec::new();
    for i in input.visible_positions() {
        let mut up = alpha.clone();
        up[i] += h;
        let mut down = alpha.clone();
        down[i] -= h;
        let g = (m.output_given_attention(&emb, &input.mask, &up, 2) - m.output_given_attention(&emb, &input.mask, &down, 2))
            / (2.0 * h);
        oracle.push(alpha[i] * g);
    }
    let got = scaled_attention_attr(&m, &input, 2).unwrap();
    assert_eq!(got.positions, vec![0, 1, 2, 4]);
    close(&got.scores, &oracle, 1e-8);

    let att = attention_attr(&m, &input).unwrap();
    assert!((att.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(att.scores.iter().all(|&a| a > 0.0));
}

#[test]
fn integrated_gradients_completeness() {
    for target in [GradientTarget::Probability, GradientTarget::Logit] {
        let m = attention_model(target);
        let input = EncodedInput::new(vec![1, 5, 2, 7, 3, 3]);
        let config = AttributionConfig {
            ig_steps: 400,
            ..Default::default()
        };
        let map = integrated_gradients(&m, &input, 0, &config).unwrap();
        let emb = m.embed(&input);
        let zero = crate::model::zero_embeddings(emb.len(), m.embedding_dim());
        let delta = m.output(&emb, &input.mask, 0) - m.output(&zero, &input.mask, 0);
        let total: f64 = map.scores.iter().sum();
        assert!((total - delta).abs() <= 1e-3 * delta.abs().max(1e-3), "{total} vs {delta}");
        assert_eq!(map.metadata["ig_steps"], 400.0);
    }
}

#[test]
fn deeplift_completeness_on_the_attention_model() {
    let m = attention_model(GradientTarget::Probability);
    let input = EncodedInput::new(vec![2, 3, 4, 1]).with_mask(vec![true, false, true, true]);
    let map = deeplift(&m, &input, 1).unwrap();
    let emb = m.embed(&input);
    let zero = crate::model::zero_embeddings(emb.len(), m.embedding_dim());
    let delta = m.output(&emb, &input.mask, 1) - m.output(&zero, &input.mask, 1);
    assert!((map.scores.iter().sum::<f64>() - delta).abs() < 1e-10);
}

#[test]
fn lime_recovers_presence_coefficients() {
    let m = PresenceLinear {
        base: 0.3,
        coefficients: vec![0.1, -0.05, 0.2, 0.0, 0.15],
    };
    let input = EncodedInput::new(vec![0; 5]);
    let config = AttributionConfig {
        lime_samples: 300,
        lime_ridge: 1e-9,
        ..Default::default()
    };
    let got = lime_attr(&m, &input, 1, &config, "ex").unwrap();
    close(&got.scores, &m.coefficients, 1e-6);
    let neg: Vec<f64> = m.coefficients.iter().map(|c| -c).collect();
    close(&lime_attr(&m, &input, 0, &config, "ex").unwrap().scores, &neg, 1e-6);
}

#[test]
fn lime_scores_only_visible_tokens() {
    let m = PresenceLinear {
        base: 0.5,
        coefficients: vec![0.1, 0.2, 0.3],
    };
    let input = EncodedInput::new(vec![0; 3]).with_mask(vec![true, false, true]);
    let config = AttributionConfig {
        lime_samples: 200,
        lime_ridge: 1e-9,
        ..Default::default()
    };
    let got = lime_attr(&m, &input, 1, &config, "ex").unwrap();
    assert_eq!(got.positions, vec![0, 2]);
    close(&got.scores, &[0.1, 0.3], 1e-6);
}

#[test]
fn seeded_methods_are_reproducible_and_keyed() {
    let m = attention_model(GradientTarget::Probability);
    let input = EncodedInput::new(vec![1, 2, 3, 4, 5, 6]);
    let config = AttributionConfig {
        lime_samples: 50,
        ..Default::default()
    };
    for method in AttributionMethod::ALL.into_iter().filter(|m| m.is_seeded()) {
        let a = attribute(&m, &input, method, 1, &config, "e1").unwrap();
        let b = attribute(&m, &input, method, 1, &config, "e1").unwrap();
        let c = attribute(&m, &input, method, 1, &config, "e2").unwrap();
        assert_eq!(a, b, "{method}");
        assert_ne!(a.scores, c.scores, "{method}");
        assert_eq!(a.metadata["seed"], 0.0);
    }
}

#[test]
fn random_scores_lie_in_the_unit_interval() {
    let input = EncodedInput::new(vec![0; 40]).with_mask((0..40).map(|i| i % 3 != 0).collect());
    let map = random_attr(&input, 9, "k");
    assert_eq!(map.positions, input.visible_positions());
    assert!(map.scores.iter().all(|s| (0.0..1.0).contains(s)));
    assert_ne!(map.scores, random_attr(&input, 10, "k").scores);
}

#[test]
fn every_method_runs_on_the_attention_model() {
    let m = attention_model(GradientTarget::Probability);
    let input = EncodedInput::new(vec![1, 2, 3, 4]).with_mask(vec![true, true, false, true]);
    let config = AttributionConfig {
        lime_samples: 64,
        ..Default::default()
    };
    for method in AttributionMethod::ALL {
        let map = attribute(&m, &input, method, 2, &config, "k").unwrap();
        assert_eq!(map.positions, vec![0, 1, 3], "{method}");
        assert_eq!(map.method, method);
        assert_eq!(map.target_class, 2);
    }
}

#[test]
fn bad_targets_and_names_are_rejected() {
    let m = linear_model();
    let input = EncodedInput::new(vec![1, 2]);
    assert!(matches!(input_x_grad(&m, &input, 2), Err(Error::Bounds { index: 2, length: 2 })));
    assert!("shap".parse::<AttributionMethod>().is_err());
    for method in AttributionMethod::ALL {
        assert_eq!(method.name().parse::<AttributionMethod>().unwrap(), method);
    }
    assert!(matches!(attention_attr(&m, &input), Err(Error::UnsupportedMethod(_))));
}

#[test]
fn rationale_size_rounds_half_up() {
    assert_eq!(rationale_size(0.02, 10), 1);
    assert_eq!(rationale_size(0.1, 10), 1);
    assert_eq!(rationale_size(0.25, 10), 3);
    assert_eq!(rationale_size(0.5, 7), 4);
    assert_eq!(rationale_size(1.0, 7), 7);
    assert_eq!(rationale_size(0.5, 0), 0);
}

#[test]
fn top_k_breaks_ties_toward_lower_positions() {
    let map = AttributionMap {
        positions: vec![0, 2, 3, 5, 6],
        scores: vec![0.5, 0.9, 0.5, -2.0, 0.5],
        method: AttributionMethod::Random,
        target_class: 0,
        metadata: Default::default(),
    };
    assert_eq!(top_k_rationale(&map, 0.4).indices, vec![0, 2]);
    assert_eq!(top_k_rationale(&map, 0.6).indices, vec![0, 2, 3]);
    assert_eq!(top_k_rationale_with(&map, 0.2, true).indices, vec![5]);
}

proptest! {
    #[test]
    fn top_k_selects_the_highest_scores(
        scores in prop::collection::vec(-5.0f64..5.0, 1..30),
        ratio in 0.01f64..1.0,
    ) {
        let map = AttributionMap {
            positions: (0..scores.len()).map(|i| 2 * i).collect(),
            scores: scores.clone(),
            method: AttributionMethod::Random,
            target_class: 0,
            metadata: Default::default(),
        };
        let r = top_k_rationale(&map, ratio);
        prop_assert_eq!(r.len(), rationale_size(ratio, scores.len()));
        prop_assert!(r.indices.windows(2).all(|w| w[0] < w[1]));
        let chosen: Vec<f64> = r.indices.iter().map(|&p| scores[p / 2]).collect();
        let min_chosen = chosen.iter().cloned().fold(f64::INFINITY, f64::min);
        for (j, &s) in scores.iter().enumerate() {
            if !r.indices.contains(&(2 * j)) {
                prop_assert!(s <= min_chosen);
            }
        }
    }

    #[test]
    fn input_x_grad_matches_the_linear_oracle(ids in prop::collection::vec(0usize..4, 5), mask in prop::collection::vec(any::<bool>(), 5)) {
        let m = linear_model();
        let input = EncodedInput::new(ids).with_mask(mask);
        let got = input_x_grad(&m, &input, 1).unwrap();
        let oracle = linear_oracle(&m, &input, 1);
        for (a, b) in got.scores.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
