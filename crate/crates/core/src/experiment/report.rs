//! Report surfaces: rationale token frequencies, timestamp densities and
//! SVG charts drawn from the CSV tables alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};

use super::tables::*;
use crate::corpus::TimestampedExample;
use crate::error::{Error, Result};
use crate::model::UNK;
use crate::rationale::RationaleRecord;

/// English function words dropped from frequency reports.
pub const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having",
    "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it",
    "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
    "they", "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
    "yourself", "yourselves",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// Counts of token types inside rationales, stop words and the unknown
/// token removed; descending by count, ties alphabetical, at most `top_n`.
pub fn token_frequency_report(records: &[RationaleRecord], top_n: usize) -> Result<Vec<(String, usize)>> {
    if records.is_empty() {
        return Err(Error::Empty("no rationale records to count".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        for tok in r.selected_tokens() {
            if tok != UNK && !is_stop_word(tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    Ok(ranked)
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

/// Silverman's rule of thumb, at least one day.
pub fn silverman_bandwidth(days: &[f64]) -> f64 {
    let n = days.len() as f64;
    if days.len() < 2 {
        return 1.0;
    }
    let sd = crate::numeric::std_dev(days);
    let mut sorted = days.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(1.0)
}

/// Gaussian kernel density of the example dates on an even grid that
/// extends eight bandwidths past the data, spaced at most half a bandwidth
/// apart. Returns (day, density per day) pairs.
pub fn timestamp_density(examples: &[TimestampedExample], bandwidth: Option<f64>, min_points: usize) -> Vec<(f64, f64)> {
    if examples.is_empty() {
        return Vec::new();
    }
    let days: Vec<f64> = examples
        .iter()
        .map(|e| (e.day() - epoch()).num_days() as f64)
        .collect();
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(&days));
    let lo = days.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * h;
    let hi = days.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * h;
    let n_points = min_points.max(((hi - lo) / (0.5 * h)).ceil() as usize + 1);
    let step = (hi - lo) / (n_points - 1) as f64;
    let norm = 1.0 / (days.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..n_points)
        .map(|k| {
            let x = lo + k as f64 * step;
            let d: f64 = days.iter().map(|&t| (-0.5 * ((x - t) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect()
}

/// Trapezoid integral of a sampled curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

pub fn density_rows(split: &str, points: &[(f64, f64)]) -> Vec<DensityRow> {
    points
        .iter()
        .map(|&(day, density)| DensityRow {
            split: split.to_string(),
            date: (epoch() + Duration::days(day.round() as i64)).to_string(),
            day,
            density,
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Grouped bar chart: one cluster per group, one bar per series.
/// `values[s][g]` is series `s` in group `g`; missing values leave a gap.
pub fn grouped_bar_svg(title: &str, y_label: &str, groups: &[String], series: &[String], values: &[Vec<Option<f64>>]) -> String {
    let (w, h) = (720.0, 400.0);
    let (left, right, top, bottom) = (60.0, 160.0, 40.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max = values
        .iter()
        .flatten()
        .flatten()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let y_max = nice_ceiling(max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, escape(title));
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = top + plot_h * (1.0 - k as f64 / 4.0);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##, left + plot_w);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{v:.2}</text>"#, left - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#, top + plot_h / 2.0, top + plot_h / 2.0, escape(y_label));
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (g, name) in groups.iter().enumerate() {
        let x0 = left + g as f64 * group_w + group_w * 0.1;
        for (k, row) in values.iter().enumerate() {
            if let Some(Some(v)) = row.get(g) {
                let bh = plot_h * (v / y_max).clamp(0.0, 1.0);
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="{}"/>"#,
                    x0 + k as f64 * bar_w,
                    top + plot_h - bh,
                    bar_w * 0.95,
                    PALETTE[k % PALETTE.len()]
                );
            }
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#, x0 + group_w * 0.4, top + plot_h + 18.0, escape(name));
    }
    legend(&mut s, series, w - right + 10.0, top);
    s.push_str("</svg>\n");
    s
}

/// Line chart of several (x, y) series; x is labelled with dates when
/// `x_is_day` is set.
pub fn line_svg(title: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], x_is_day: bool) -> String {
    let (w, h) = (720.0, 400.0);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x_min, mut x_max, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    let x_span = (x_max - x_min).max(1e-12);
    let y_top = nice_ceiling(y_max.max(1e-12));
    let sx = |x: f64| left + plot_w * (x - x_min) / x_span;
    let sy = |y: f64| top + plot_h * (1.0 - y / y_top);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, escape(title));
    for k in 0..=4 {
        let v = y_top * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##, left + plot_w);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{v:.2e}</text>"#, left - 6.0, y + 4.0);
        let xv = x_min + x_span * k as f64 / 4.0;
        let label = if x_is_day {
            (epoch() + Duration::days(xv.round() as i64)).to_string()
        } else {
            format!("{xv:.2}")
        };
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" font-family="sans-serif">{label}</text>"#, sx(xv), top + plot_h + 18.0);
    }
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#, top + plot_h / 2.0, top + plot_h / 2.0, escape(y_label));
    for (k, (_, points)) in series.iter().enumerate() {
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, PALETTE[k % PALETTE.len()], path.join(" "));
    }
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    legend(&mut s, &names, w - right + 10.0, top);
    s.push_str("</svg>\n");
    s
}

fn legend(s: &mut String, names: &[String], x: f64, y: f64) {
    for (k, name) in names.iter().enumerate() {
        let yy = y + 18.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{yy:.1}" width="12" height="12" fill="{}"/>"#, PALETTE[k % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" font-family="sans-serif">{}</text>"#, x + 18.0, yy + 10.0, escape(name));
    }
}

/// Smallest of 1, 2, 2.5, 5 times a power of ten that is >= `v`.
fn nice_ceiling(v: f64) -> f64 {
    let p = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * p >= v * (1.0 - 1e-12) {
            return m * p;
        }
    }
    10.0 * p
}

fn order_of<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for it in items {
        if seen.insert(it.to_string()) {
            out.push(it.to_string());
        }
    }
    out
}

fn write_figure(dir: &Path, name: &str, svg: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    written.push(PathBuf::from(name));
    Ok(())
}

/// Draws every figure whose backing CSV exists in `dir`; missing tables skip
/// their figures with a warning. Returns the figure paths relative to `dir`.
pub fn emit_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    match read_csv::<ResultSummaryRow>(dir.join(RESULTS_SUMMARY_CSV)) {
        Ok((_, rows)) if !rows.is_empty() => {
            let dataset = rows[0].dataset.clone();
            let splits = order_of(rows.iter().map(|r| r.split.as_str()));
            let methods = order_of(rows.iter().map(|r| r.method.as_str()));
            for (metric, label) in [("suff", "AOPC normalized sufficiency"), ("comp", "AOPC normalized comprehensiveness")] {
                let values: Vec<Vec<Option<f64>>> = methods
                    .iter()
                    .map(|m| {
                        splits
                            .iter()
                            .map(|sp| {
                                rows.iter().find(|r| &r.method == m && &r.split == sp).map(|r| {
                                    if metric == "suff" {
                                        r.aopc_norm_suff_mean
                                    } else {
                                        r.aopc_norm_comp_mean
                                    }
                                })
                            })
                            .collect()
                    })
                    .collect();
                let svg = grouped_bar_svg(&format!("{dataset}: {label}"), label, &splits, &methods, &values);
                write_figure(dir, &format!("fig_faithfulness_{metric}.svg"), svg, &mut written)?;
            }
        }
        Ok(_) => log::warn!("report: {RESULTS_SUMMARY_CSV} is empty; skipping faithfulness figures"),
        Err(e) => log::warn!("report: skipping faithfulness figures: {e}"),
    }

    match read_csv::<DensityRow>(dir.join(DENSITY_CSV)) {
        Ok((_, rows)) if !rows.is_empty() => {
            let splits = order_of(rows.iter().map(|r| r.split.as_str()));
            let series: Vec<(String, Vec<(f64, f64)>)> = splits
                .iter()
                .map(|sp| {
                    let pts = rows.iter().filter(|r| &r.split == sp).map(|r| (r.day, r.density)).collect();
                    (sp.clone(), pts)
                })
                .collect();
            write_figure(dir, "fig_density.svg", line_svg("Timestamp density per split", "density per day", &series, true), &mut written)?;
        }
        Ok(_) => log::warn!("report: {DENSITY_CSV} is empty; skipping density figure"),
        Err(e) => log::warn!("report: skipping density figure: {e}"),
    }

    match read_csv::<PerformanceSummaryRow>(dir.join(PERFORMANCE_SUMMARY_CSV)) {
        Ok((_, rows)) if !rows.is_empty() => {
            let dataset = rows[0].dataset.clone();
            let splits = order_of(rows.iter().map(|r| r.split.as_str()));
            let models = order_of(rows.iter().map(|r| r.model.as_str()));
            let values: Vec<Vec<Option<f64>>> = models
                .iter()
                .map(|m| {
                    splits
                        .iter()
                        .map(|sp| rows.iter().find(|r| &r.model == m && &r.split == sp).map(|r| r.macro_f1_mean))
                        .collect()
                })
                .collect();
            let svg = grouped_bar_svg(&format!("{dataset}: macro-F1 averaged over seeds"), "macro-F1", &splits, &models, &values);
            write_figure(dir, "fig_performance.svg", svg, &mut written)?;
        }
        Ok(_) => log::warn!("report: {PERFORMANCE_SUMMARY_CSV} is empty; skipping performance figure"),
        Err(e) => log::warn!("report: skipping performance figure: {e}"),
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rationale::RationaleSource;
    use chrono::{TimeZone, Utc};

    fn record(tokens: &[&str], indices: Vec<usize>) -> RationaleRecord {
        RationaleRecord {
            id: "x".into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            indices,
            soft_mask: None,
            source: RationaleSource::Topk,
            ratio: None,
            budget: None,
        }
    }

    #[test]
    fn stop_words_are_sorted() {
        assert!(STOP_WORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_stop_word("the"));
        assert!(!is_stop_word("drift"));
    }

    #[test]
    fn frequency_counts_descend_with_alphabetical_ties() {
        let recs = vec![
            record(&["x", "z", "the", "y"], vec![0, 1, 2]),
            record(&["y", "x", "x"], vec![0, 1, 2]),
        ];
        let got = token_frequency_report(&recs, 10).unwrap();
        assert_eq!(got, vec![("x".to_string(), 3), ("y".to_string(), 1), ("z".to_string(), 1)]);
        assert_eq!(token_frequency_report(&recs, 1).unwrap().len(), 1);
        assert!(token_frequency_report(&[], 5).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let examples: Vec<TimestampedExample> = [0i64, 3, 3, 40, 200, 201, 700]
            .iter()
            .enumerate()
            .map(|(i, d)| TimestampedExample {
                id: i.to_string(),
                text: String::new(),
                label: 0,
                timestamp: Utc.with_ymd_and_hms(2012, 1, 1, 0, 0, 0).unwrap() + Duration::days(*d),
            })
            .collect();
        for bw in [None, Some(2.0), Some(90.0)] {
            let pts = timestamp_density(&examples, bw, 50);
            assert!((trapezoid(&pts) - 1.0).abs() < 1e-6, "{bw:?}: {}", trapezoid(&pts));
        }
        let single = &examples[..1];
        assert!((trapezoid(&timestamp_density(single, None, 10)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn toy_bar_chart_has_one_bar_per_method_and_split() {
        let svg = grouped_bar_svg(
            "t",
            "y",
            &["syn".into(), "asy2".into()],
            &["lime".into(), "deeplift".into()],
            &[vec![Some(0.4), Some(0.2)], vec![Some(0.3), Some(0.1)]],
        );
        // background + 2x2 bars + 2 legend swatches
        assert_eq!(svg.matches("<rect").count(), 7);
    }

    #[test]
    fn nice_ceilings() {
        assert_eq!(nice_ceiling(0.37), 0.5);
        assert_eq!(nice_ceiling(1.0), 1.0);
        assert_eq!(nice_ceiling(63.0), 100.0);
        assert_eq!(nice_ceiling(2.2), 2.5);
    }
}
