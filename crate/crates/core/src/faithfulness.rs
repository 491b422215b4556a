//! Normalized sufficiency and comprehensiveness, their AOPC over rationale
//! ratios, and the ratio of a method's score to the random baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attribution::{random_attr, top_k_rationale_with, AttributionMap, AttributionMethod};
use crate::error::{Error, Result};
use crate::model::{masked_input, EncodedInput, MaskMode, Predictor};
use crate::rationale::{Rationale, RationaleSource};

pub const DEFAULT_RATIOS: [f64; 4] = [0.02, 0.10, 0.20, 0.50];
/// `suff0` at or above `1 - DEGENERATE_EPS` leaves nothing to normalize by.
pub const DEGENERATE_EPS: f64 = 1e-9;
/// Random-baseline means below this make the ratio undefined.
pub const RANDOM_EPS: f64 = 1e-6;
/// Seeds averaged per example for the random baseline.
pub const RANDOM_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

pub fn sufficiency(p_full: f64, p_rationale: f64) -> f64 {
    1.0 - (p_full - p_rationale).max(0.0)
}

pub fn is_degenerate(suff0: f64) -> bool {
    suff0 >= 1.0 - DEGENERATE_EPS
}

pub fn norm_sufficiency(p_full: f64, p_rationale: f64, suff0: f64) -> f64 {
    let suff = sufficiency(p_full, p_rationale);
    if is_degenerate(suff0) {
        return if suff >= suff0 { 1.0 } else { 0.0 };
    }
    ((suff - suff0) / (1.0 - suff0)).clamp(0.0, 1.0)
}

pub fn norm_comprehensiveness(p_full: f64, p_masked: f64, suff0: f64) -> f64 {
    if is_degenerate(suff0) {
        return 0.0;
    }
    let comp = (p_full - p_masked).max(0.0);
    (comp / (1.0 - suff0)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioScore {
    pub ratio: f64,
    pub norm_suff: f64,
    pub norm_comp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRecord {
    pub example_id: String,
    pub method: AttributionMethod,
    pub target_class: usize,
    pub per_ratio: Vec<RatioScore>,
    pub aopc_suff: f64,
    pub aopc_comp: f64,
    pub suff0: f64,
    pub p_full: f64,
    /// Set when the empty-rationale baseline saturates.
    pub degenerate: bool,
}

/// Scores of a rationale chosen per ratio, against the full-text predicted
/// class. `choose(ratio)` returns the rationale for that ratio.
fn record_from<P, F>(model: &P, input: &EncodedInput, ratios: &[f64], id: &str, method: AttributionMethod, mut choose: F) -> Result<FaithfulnessRecord>
where
    P: Predictor + ?Sized,
    F: FnMut(f64) -> Result<Rationale>,
{
    if ratios.is_empty() {
        return Err(Error::Config("at least one ratio is required".into()));
    }
    let full = model.predict(input);
    let target = full.predicted_class;
    let p_full = full.probabilities[target];
    let empty = Rationale::empty(RationaleSource::Topk);
    let p_empty = model
        .predict(&masked_input(input, &empty, MaskMode::KeepOnly).map_err(|e| e.for_example(id))?)
        .probabilities[target];
    let suff0 = sufficiency(p_full, p_empty);
    let mut per_ratio = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let r = choose(ratio).map_err(|e| e.for_example(id))?;
        let kept = masked_input(input, &r, MaskMode::KeepOnly).map_err(|e| e.for_example(id))?;
        let removed = masked_input(input, &r, MaskMode::Remove).map_err(|e| e.for_example(id))?;
        let p_r = model.predict(&kept).probabilities[target];
        let p_m = model.predict(&removed).probabilities[target];
        per_ratio.push(RatioScore {
            ratio,
            norm_suff: norm_sufficiency(p_full, p_r, suff0),
            norm_comp: norm_comprehensiveness(p_full, p_m, suff0),
        });
    }
    let n = per_ratio.len() as f64;
    Ok(FaithfulnessRecord {
        example_id: id.to_string(),
        method,
        target_class: target,
        aopc_suff: per_ratio.iter().map(|r| r.norm_suff).sum::<f64>() / n,
        aopc_comp: per_ratio.iter().map(|r| r.norm_comp).sum::<f64>() / n,
        per_ratio,
        suff0,
        p_full,
        degenerate: is_degenerate(suff0),
    })
}

/// Per-example record for an attribution map, ranking by signed score.
pub fn aopc_record<P: Predictor + ?Sized>(
    model: &P,
    input: &EncodedInput,
    map: &AttributionMap,
    ratios: &[f64],
    id: &str,
) -> Result<FaithfulnessRecord> {
    aopc_record_with(model, input, map, ratios, id, false)
}

pub fn aopc_record_with<P: Predictor + ?Sized>(
    model: &P,
    input: &EncodedInput,
    map: &AttributionMap,
    ratios: &[f64],
    id: &str,
    absolute: bool,
) -> Result<FaithfulnessRecord> {
    if map.positions != input.visible_positions() {
        return Err(Error::Config("attribution map does not cover the input".into()).for_example(id));
    }
    record_from(model, input, ratios, id, map.method, |ratio| {
        Ok(top_k_rationale_with(map, ratio, absolute))
    })
}

/// Random-baseline record: per-ratio scores averaged over one random map
/// per seed.
pub fn random_record<P: Predictor + ?Sized>(
    model: &P,
    input: &EncodedInput,
    ratios: &[f64],
    seeds: &[u64],
    id: &str,
) -> Result<FaithfulnessRecord> {
    if seeds.is_empty() {
        return Err(Error::Config("random baseline needs at least one seed".into()));
    }
    let mut acc: Option<FaithfulnessRecord> = None;
    for &s in seeds {
        let map = random_attr(input, s, id);
        let rec = aopc_record(model, input, &map, ratios, id)?;
        match acc.as_mut() {
            None => acc = Some(rec),
            Some(a) => {
                for (x, y) in a.per_ratio.iter_mut().zip(&rec.per_ratio) {
                    x.norm_suff += y.norm_suff;
                    x.norm_comp += y.norm_comp;
                }
            }
        }
    }
    let mut rec = acc.expect("seeds is non-empty");
    let k = seeds.len() as f64;
    for x in rec.per_ratio.iter_mut() {
        x.norm_suff /= k;
        x.norm_comp /= k;
    }
    let n = rec.per_ratio.len() as f64;
    rec.aopc_suff = rec.per_ratio.iter().map(|r| r.norm_suff).sum::<f64>() / n;
    rec.aopc_comp = rec.per_ratio.iter().map(|r| r.norm_comp).sum::<f64>() / n;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessSummary {
    pub method: AttributionMethod,
    pub split: String,
    pub mean_aopc_suff: f64,
    pub mean_aopc_comp: f64,
    /// `None` when the random mean is below [`RANDOM_EPS`].
    pub ratio_vs_random_suff: Option<f64>,
    pub ratio_vs_random_comp: Option<f64>,
    pub n_examples: usize,
    pub flags: Vec<String>,
}

fn mean_of(records: &[FaithfulnessRecord], f: impl Fn(&FaithfulnessRecord) -> f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(f).sum::<f64>() / records.len() as f64
}

pub fn summarize_method(
    method: AttributionMethod,
    split: &str,
    records: &[FaithfulnessRecord],
    random_records: &[FaithfulnessRecord],
) -> Result<FaithfulnessSummary> {
    if records.is_empty() {
        return Err(Error::Empty(format!("no faithfulness records for {method}")));
    }
    let suff = mean_of(records, |r| r.aopc_suff);
    let comp = mean_of(records, |r| r.aopc_comp);
    let random_suff = mean_of(random_records, |r| r.aopc_suff);
    let random_comp = mean_of(random_records, |r| r.aopc_comp);
    let mut flags = Vec::new();
    let degenerate = records.iter().filter(|r| r.degenerate).count();
    if degenerate > 0 {
        flags.push(format!("degenerate_baseline={degenerate}"));
    }
    let ratio = |m: f64, r: f64, name: &str, flags: &mut Vec<String>| {
        if r < RANDOM_EPS {
            flags.push(format!("random_{name}_below_eps"));
            None
        } else {
            Some(m / r)
        }
    };
    let ratio_suff = ratio(suff, random_suff, "suff", &mut flags);
    let ratio_comp = ratio(comp, random_comp, "comp", &mut flags);
    Ok(FaithfulnessSummary {
        method,
        split: split.to_string(),
        mean_aopc_suff: suff,
        mean_aopc_comp: comp,
        ratio_vs_random_suff: ratio_suff,
        ratio_vs_random_comp: ratio_comp,
        n_examples: records.len(),
        flags,
    })
}

/// One summary per method, in method order.
pub fn summarize(
    split: &str,
    records: &BTreeMap<AttributionMethod, Vec<FaithfulnessRecord>>,
    random_records: &[FaithfulnessRecord],
) -> Result<Vec<FaithfulnessSummary>> {
    records
        .iter()
        .map(|(m, rs)| summarize_method(*m, split, rs, random_records))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sufficiency_arithmetic() {
        assert!((norm_sufficiency(0.8, 0.6, 0.5) - 0.6).abs() < 1e-12);
        assert_eq!(norm_sufficiency(0.7, 0.7, 0.3), 1.0);
        assert_eq!(norm_sufficiency(1.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn comprehensiveness_arithmetic() {
        assert_eq!(norm_comprehensiveness(0.9, 0.3, 0.4), 1.0);
        assert_eq!(norm_comprehensiveness(0.5, 0.6, 0.2), 0.0);
        assert_eq!(norm_comprehensiveness(0.5, 0.5, 0.2), 0.0);
        assert!((norm_comprehensiveness(0.9, 0.6, 0.4) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_baseline_saturates() {
        assert!(is_degenerate(1.0));
        assert_eq!(norm_sufficiency(0.5, 0.6, 1.0), 1.0);
        assert_eq!(norm_sufficiency(0.6, 0.5, 1.0), 0.0);
        assert_eq!(norm_comprehensiveness(0.9, 0.1, 1.0), 0.0);
    }

    fn rec(method: AttributionMethod, suff: f64, comp: f64) -> FaithfulnessRecord {
        FaithfulnessRecord {
            example_id: "x".into(),
            method,
            target_class: 0,
            per_ratio: vec![],
            aopc_suff: suff,
            aopc_comp: comp,
            suff0: 0.5,
            p_full: 0.9,
            degenerate: false,
        }
    }

    #[test]
    fn ratio_against_random() {
        let random = vec![rec(AttributionMethod::Random, 0.2, 0.1), rec(AttributionMethod::Random, 0.2, 0.3)];
        let m = vec![rec(AttributionMethod::ScaledAttention, 0.4, 0.59)];
        let s = summarize_method(AttributionMethod::ScaledAttention, "syn", &m, &random).unwrap();
        assert!((s.ratio_vs_random_comp.unwrap() - 2.95).abs() < 1e-12);
        assert!((s.ratio_vs_random_suff.unwrap() - 2.0).abs() < 1e-12);
        let same = summarize_method(AttributionMethod::Random, "syn", &random, &random).unwrap();
        assert_eq!(same.ratio_vs_random_suff, Some(1.0));
        let zero = summarize_method(AttributionMethod::Lime, "syn", &[rec(AttributionMethod::Lime, 0.0, 0.0)], &random).unwrap();
        assert_eq!(zero.ratio_vs_random_suff, Some(0.0));
    }

    #[test]
    fn tiny_random_mean_is_flagged() {
        let random = vec![rec(AttributionMethod::Random, 0.0, 0.5)];
        let s = summarize_method(AttributionMethod::Lime, "asy1", &[rec(AttributionMethod::Lime, 0.3, 0.3)], &random).unwrap();
        assert_eq!(s.ratio_vs_random_suff, None);
        assert!(s.flags.iter().any(|f| f == "random_suff_below_eps"));
    }
}
