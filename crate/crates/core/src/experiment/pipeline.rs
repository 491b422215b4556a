use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{RunManifest, Stage, StageRecord, StageStatus};
use super::report::{density_rows, emit_report, timestamp_density, token_frequency_report};
use super::tables::*;
use crate::agreement::layperson_agreement;
use crate::attribution::{attribute, AttributionConfig, AttributionMap, AttributionMethod};
use crate::corpus::{generate_drifted_corpus, load_corpus, load_examples, write_examples, Corpus, TimestampedExample};
use crate::error::{Error, Result};
use crate::faithfulness::{aopc_record_with, random_record, summarize_method, FaithfulnessRecord, RANDOM_SEEDS};
use crate::io::{read_jsonl, write_jsonl};
use crate::model::{train_classifier, AttentionClassifier, Predictor, TrainConfig};
use crate::numeric;
use crate::rationale::fresh::{train_fresh, FreshModel, MethodExtractor};
use crate::rationale::retention::macro_f1_on;
use crate::rationale::selective::{train_hardkuma, train_spectra, LagrangianState, SelectiveModel};
use crate::rationale::spectra::BudgetConstraint;
use crate::rationale::{read_manifest, write_manifest, RationaleRecord};
use crate::seed;
use crate::splitter::{chronological_split, split_stats, SplitBundle, SplitName};

/// One stored attribution map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRow {
    pub id: String,
    pub map: AttributionMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelFile {
    dataset: String,
    label_names: Vec<String>,
}

const LABELS_FILE: &str = "splits/labels.json";

fn split_path(name: SplitName) -> PathBuf {
    PathBuf::from(format!("splits/{name}.jsonl"))
}

fn model_path(kind: &str, run: u64) -> PathBuf {
    PathBuf::from(format!("models/{kind}_seed{run}.json"))
}

fn rationale_path(kind: &str, run: u64, split: SplitName) -> PathBuf {
    PathBuf::from(format!("rationales/{kind}/seed{run}/{split}.jsonl"))
}

fn performance_part(kind: &str) -> PathBuf {
    PathBuf::from(format!("performance/{kind}.csv"))
}

const PERFORMANCE_KINDS: [&str; 4] = ["fulltext", "fresh", "hardkuma", "spectra"];

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// The state shared by the stages of one run.
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    provenance: Provenance,
}

impl Pipeline {
    /// Validates the config and opens (or starts) the run manifest.
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let hash = config.hash();
        let manifest = RunManifest::open(&dir, &hash)?;
        let provenance = Provenance {
            config_hash: hash,
            deviations: config.deviations().into_iter().map(String::from).collect(),
        };
        Ok(Pipeline {
            config,
            dir,
            manifest,
            provenance,
        })
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.dir.join(rel)
    }

    /// Per-run seed for a stage, derived from the configured base seed.
    fn stage_seed(&self, base: u64, stage: &str, run: u64) -> u64 {
        seed::derive_seed(base, &[stage, &run.to_string()])
    }

    /// Runs `stage` after its prerequisites, skipping whatever is already
    /// complete under this config.
    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        for &pre in stage.prerequisites() {
            self.run_stage(pre)?;
        }
        if self.manifest.is_done(stage, &self.dir) {
            log::info!("stage {stage}: up to date");
            return Ok(());
        }
        self.manifest.invalidate_from(stage);
        let started = Utc::now();
        log::info!("stage {stage}: running");
        let outcome = self.execute(stage);
        let finished = Utc::now();
        let hash = self.manifest.config_hash.clone();
        let result = match outcome {
            Ok((status, artifacts)) => {
                self.manifest.stages.insert(
                    stage,
                    StageRecord {
                        status,
                        config_hash: hash,
                        artifacts,
                        started,
                        finished,
                        error: None,
                    },
                );
                Ok(())
            }
            Err(e) => {
                self.manifest.stages.insert(
                    stage,
                    StageRecord {
                        status: StageStatus::Failed,
                        config_hash: hash,
                        artifacts: Vec::new(),
                        started,
                        finished,
                        error: Some(e.to_string()),
                    },
                );
                Err(Error::Stage {
                    stage: stage.to_string(),
                    message: e.to_string(),
                })
            }
        };
        self.manifest.save(&self.dir)?;
        result
    }

    pub fn run_all(&mut self) -> Result<()> {
        self.run_stage(Stage::Report)
    }

    fn execute(&self, stage: Stage) -> Result<(StageStatus, Vec<PathBuf>)> {
        let enabled = match stage {
            Stage::Fresh => self.config.fresh.enabled,
            Stage::Hardkuma => self.config.hardkuma.enabled,
            Stage::Spectra => self.config.spectra.enabled,
            Stage::Agreement => self.config.fresh.enabled,
            _ => true,
        };
        if !enabled {
            return Ok((StageStatus::Skipped, Vec::new()));
        }
        let artifacts = match stage {
            Stage::Split => self.stage_split()?,
            Stage::Train => self.stage_train()?,
            Stage::Attribute => self.stage_attribute()?,
            Stage::Faithfulness => self.stage_faithfulness()?,
            Stage::Fresh => self.stage_fresh()?,
            Stage::Hardkuma => self.stage_selective(true)?,
            Stage::Spectra => self.stage_selective(false)?,
            Stage::Agreement => self.stage_agreement()?,
            Stage::Report => self.stage_report()?,
        };
        Ok((StageStatus::Complete, artifacts))
    }

    fn load_corpus(&self) -> Result<Corpus> {
        let mut corpus = match (&self.config.corpus.path, &self.config.corpus.synthetic) {
            (Some(path), _) => load_corpus(path, self.config.corpus.format)?,
            (None, Some(spec)) => generate_drifted_corpus(spec)?,
            (None, None) => return Err(Error::Config("no corpus source".into())),
        };
        corpus.name = self.config.name.clone();
        Ok(corpus)
    }

    fn labels(&self) -> Result<LabelFile> {
        let path = self.path(LABELS_FILE);
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    fn bundle(&self) -> Result<SplitBundle> {
        let labels = self.labels()?;
        let load = |n: SplitName| load_examples(self.path(split_path(n)), &labels.label_names);
        Ok(SplitBundle {
            train: load(SplitName::Train)?,
            dev: load(SplitName::Dev)?,
            syn_test: load(SplitName::Syn)?,
            asy1_test: load(SplitName::Asy1)?,
            asy2_test: load(SplitName::Asy2)?,
        })
    }

    fn eval_subset<'a>(&self, examples: &'a [TimestampedExample]) -> &'a [TimestampedExample] {
        match self.config.max_eval_examples {
            Some(n) => &examples[..n.min(examples.len())],
            None => examples,
        }
    }

    fn train_config(&self, stage: &str, run: u64) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed(self.config.model.seed, stage, run),
            ..self.config.model.clone()
        }
    }

    fn attribution_config(&self, stage: &str, run: u64) -> AttributionConfig {
        AttributionConfig {
            seed: self.stage_seed(self.config.attribution.seed, stage, run),
            ..self.config.attribution.clone()
        }
    }

    fn fulltext(&self, run: u64) -> Result<AttentionClassifier> {
        AttentionClassifier::load(self.path(model_path("fulltext", run)))
    }

    fn write_table<T: Serialize>(&self, rel: impl AsRef<Path>, rows: &[T]) -> Result<PathBuf> {
        let rel = rel.as_ref().to_path_buf();
        let path = self.path(&rel);
        ensure_parent(&path)?;
        write_csv(&path, &self.provenance, rows)?;
        Ok(rel)
    }

    fn stage_split(&self) -> Result<Vec<PathBuf>> {
        let corpus = self.load_corpus()?;
        let bundle = chronological_split(&corpus, &self.config.split)?;
        let mut artifacts = Vec::new();
        for (name, part) in bundle.parts() {
            let rel = split_path(name);
            let path = self.path(&rel);
            ensure_parent(&path)?;
            write_examples(&path, part, &corpus.label_names)?;
            artifacts.push(rel);
        }
        let labels = LabelFile {
            dataset: corpus.name.clone(),
            label_names: corpus.label_names.clone(),
        };
        let path = self.path(LABELS_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&labels)?).map_err(|e| Error::io(&path, e))?;
        artifacts.push(LABELS_FILE.into());
        artifacts.push(self.write_table(SPLIT_STATS_CSV, &split_stats(&bundle))?);
        let mut density = Vec::new();
        for (name, part) in bundle.parts() {
            let pts = timestamp_density(part, self.config.report.density_bandwidth_days, self.config.report.density_points);
            density.extend(density_rows(name.as_str(), &pts));
        }
        artifacts.push(self.write_table(DENSITY_CSV, &density)?);
        Ok(artifacts)
    }

    fn stage_train(&self) -> Result<Vec<PathBuf>> {
        let bundle = self.bundle()?;
        let labels = self.labels()?;
        let n_classes = labels.label_names.len();
        let mut artifacts = Vec::new();
        let mut perf = Vec::new();
        for &run in &self.config.seeds {
            let (model, curve) = train_classifier(&bundle.train, &bundle.dev, n_classes, &self.train_config("train", run))?;
            let rel = model_path("fulltext", run);
            let path = self.path(&rel);
            ensure_parent(&path)?;
            model.save(&path)?;
            artifacts.push(rel);
            let curve_rel = PathBuf::from(format!("curves/fulltext_seed{run}.csv"));
            let curve_path = self.path(&curve_rel);
            ensure_parent(&curve_path)?;
            std::fs::write(&curve_path, format!("{}\n{}", self.provenance.line(), curve.to_csv())).map_err(|e| Error::io(&curve_path, e))?;
            artifacts.push(curve_rel);
            for split in SplitName::TEST {
                perf.push(PerformanceRow {
                    dataset: labels.dataset.clone(),
                    model: "fulltext".into(),
                    split: split.to_string(),
                    seed: run,
                    macro_f1: macro_f1_on(&model, bundle.get(split))?,
                    selection_rate: None,
                });
            }
        }
        artifacts.push(self.write_table(performance_part("fulltext"), &perf)?);
        Ok(artifacts)
    }

    fn stage_attribute(&self) -> Result<Vec<PathBuf>> {
        let bundle = self.bundle()?;
        let methods = self.config.parsed_methods()?;
        let mut artifacts = Vec::new();
        for &run in &self.config.seeds {
            let model = self.fulltext(run)?;
            let attr_config = self.attribution_config("attribute", run);
            for split in SplitName::TEST {
                let examples = self.eval_subset(bundle.get(split));
                for &method in &methods {
                    let mut rows = Vec::with_capacity(examples.len());
                    for ex in examples {
                        let input = model.encode(&ex.text);
                        let target = model.predict(&input).predicted_class;
                        let map = attribute(&model, &input, method, target, &attr_config, &ex.id)
                            .map_err(|e| e.for_example(&ex.id))?;
                        rows.push(AttributionRow { id: ex.id.clone(), map });
                    }
                    let rel = PathBuf::from(format!("attributions/seed{run}/{split}/{method}.jsonl"));
                    let path = self.path(&rel);
                    ensure_parent(&path)?;
                    write_jsonl(&path, &rows)?;
                    artifacts.push(rel);
                }
            }
        }
        Ok(artifacts)
    }

    fn stage_faithfulness(&self) -> Result<Vec<PathBuf>> {
        let bundle = self.bundle()?;
        let labels = self.labels()?;
        let methods = self.config.parsed_methods()?;
        let absolute = self.config.attribution.rank_by_absolute;
        let mut artifacts = Vec::new();
        let mut results = Vec::new();
        for &run in &self.config.seeds {
            let model = self.fulltext(run)?;
            let random_seeds: Vec<u64> = RANDOM_SEEDS
                .iter()
                .map(|&k| self.stage_seed(k, "random", run))
                .collect();
            for split in SplitName::TEST {
                let examples = self.eval_subset(bundle.get(split));
                let by_id: BTreeMap<&str, &TimestampedExample> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
                let mut random = Vec::with_capacity(examples.len());
                for ex in examples {
                    let input = model.encode(&ex.text);
                    random.push(random_record(&model, &input, &self.config.ratios, &random_seeds, &ex.id)?);
                }
                let mut all_records: Vec<FaithfulnessRecord> = random.clone();
                let mut push_row = |method: AttributionMethod, records: &[FaithfulnessRecord]| -> Result<()> {
                    let s = summarize_method(method, split.as_str(), records, &random)?;
                    results.push(ResultRow {
                        dataset: labels.dataset.clone(),
                        split: split.to_string(),
                        method: method.to_string(),
                        seed: run,
                        aopc_norm_suff: s.mean_aopc_suff,
                        aopc_norm_comp: s.mean_aopc_comp,
                        ratio_suff: s.ratio_vs_random_suff,
                        ratio_comp: s.ratio_vs_random_comp,
                        n: s.n_examples,
                        flags: s.flags.join("|"),
                    });
                    Ok(())
                };
                for &method in &methods {
                    let rel = format!("attributions/seed{run}/{split}/{method}.jsonl");
                    let rows: Vec<AttributionRow> = read_jsonl(self.path(&rel))?;
                    let mut records = Vec::with_capacity(rows.len());
                    for row in &rows {
                        let ex = by_id
                            .get(row.id.as_str())
                            .ok_or_else(|| Error::Schema(format!("{rel}: unknown example {}", row.id)))?;
                        let input = model.encode(&ex.text);
                        records.push(aopc_record_with(&model, &input, &row.map, &self.config.ratios, &row.id, absolute)?);
                    }
                    push_row(method, &records)?;
                    all_records.extend(records);
                }
                push_row(AttributionMethod::Random, &random)?;
                let rel = PathBuf::from(format!("faithfulness/seed{run}_{split}.jsonl"));
                let path = self.path(&rel);
                ensure_parent(&path)?;
                write_jsonl(&path, &all_records)?;
                artifacts.push(rel);
            }
        }
        artifacts.push(self.write_table(RESULTS_CSV, &results)?);
        artifacts.push(self.write_table(RESULTS_SUMMARY_CSV, &summarize_results(&results))?);
        Ok(artifacts)
    }

    fn stage_fresh(&self) -> Result<Vec<PathBuf>> {
        let bundle = self.bundle()?;
        let labels = self.labels()?;
        let n_classes = labels.label_names.len();
        let mut artifacts = Vec::new();
        let mut perf = Vec::new();
        for &run in &self.config.seeds {
            let support = self.fulltext(run)?;
            let attr_config = self.attribution_config("fresh", run);
            let extractor = MethodExtractor {
                model: &support,
                method: self.config.fresh.method,
                ratio: self.config.fresh.ratio,
                config: &attr_config,
            };
            let out = train_fresh(
                &support.vocab,
                n_classes,
                &bundle.train,
                &bundle.dev,
                &extractor,
                &self.train_config("fresh", run),
            )?;
            let rel = model_path("fresh", run);
            out.classifier.save(self.path(&rel))?;
            artifacts.push(rel);
            let model = FreshModel {
                classifier: &out.classifier,
                extractor: &extractor,
            };
            for split in SplitName::TEST {
                let test = bundle.get(split);
                let mut records = Vec::with_capacity(test.len());
                let mut kept = 0.0;
                for ex in test {
                    let input = support.encode(&ex.text);
                    let r = crate::rationale::fresh::RationaleExtractor::extract(&extractor, &ex.id, &input)
                        .map_err(|e| e.for_example(&ex.id))?;
                    kept += r.len() as f64 / input.n_visible().max(1) as f64;
                    records.push(crate::rationale::fresh::record_for(&support.vocab, &ex.id, &input, &r, &extractor));
                }
                artifacts.push(self.write_rationales("fresh", run, split, &records)?);
                perf.push(PerformanceRow {
                    dataset: labels.dataset.clone(),
                    model: "fresh".into(),
                    split: split.to_string(),
                    seed: run,
                    macro_f1: macro_f1_on(&model, test)?,
                    selection_rate: Some(kept / test.len().max(1) as f64),
                });
            }
        }
        artifacts.push(self.write_table(performance_part("fresh"), &perf)?);
        Ok(artifacts)
    }

    fn write_rationales(&self, kind: &str, run: u64, split: SplitName, records: &[RationaleRecord]) -> Result<PathBuf> {
        let rel = rationale_path(kind, run, split);
        let path = self.path(&rel);
        ensure_parent(&path)?;
        write_manifest(&path, records)?;
        Ok(rel)
    }

    fn stage_selective(&self, hardkuma: bool) -> Result<Vec<PathBuf>> {
        let bundle = self.bundle()?;
        let labels = self.labels()?;
        let n_classes = labels.label_names.len();
        let kind = if hardkuma { "hardkuma" } else { "spectra" };
        let mut artifacts = Vec::new();
        let mut perf = Vec::new();
        for &run in &self.config.seeds {
            let base = if hardkuma {
                &self.config.hardkuma.model
            } else {
                &self.config.spectra.model
            };
            let mut sel_config = base.clone();
            sel_config.seed = self.stage_seed(base.seed, kind, run);
            let (model, curve) = if hardkuma {
                let lagrangian = LagrangianState::new(self.config.hardkuma.target_rate, self.config.hardkuma.lr_lambda);
                train_hardkuma(&bundle.train, &bundle.dev, n_classes, &sel_config, lagrangian)?
            } else {
                train_spectra(&bundle.train, &bundle.dev, n_classes, &sel_config, self.config.spectra.budget)?
            };
            let rel = model_path(kind, run);
            let path = self.path(&rel);
            ensure_parent(&path)?;
            model.save(&path)?;
            artifacts.push(rel);
            let curve_rel = PathBuf::from(format!("curves/{kind}_seed{run}.csv"));
            let curve_path = self.path(&curve_rel);
            ensure_parent(&curve_path)?;
            std::fs::write(&curve_path, format!("{}\n{}", self.provenance.line(), curve.to_csv())).map_err(|e| Error::io(&curve_path, e))?;
            artifacts.push(curve_rel);
            for split in SplitName::TEST {
                let test = bundle.get(split);
                let (records, rate) = selective_records(&model, test, (!hardkuma).then_some(self.config.spectra.budget));
                artifacts.push(self.write_rationales(kind, run, split, &records)?);
                perf.push(PerformanceRow {
                    dataset: labels.dataset.clone(),
                    model: kind.into(),
                    split: split.to_string(),
                    seed: run,
                    macro_f1: macro_f1_on(&model, test)?,
                    selection_rate: Some(rate),
                });
            }
        }
        artifacts.push(self.write_table(performance_part(kind), &perf)?);
        Ok(artifacts)
    }

    fn stage_agreement(&self) -> Result<Vec<PathBuf>> {
        let bundle = self.bundle()?;
        let mut rows = Vec::new();
        for &run in &self.config.seeds {
            let fulltext = self.fulltext(run)?;
            let classifier = AttentionClassifier::load(self.path(model_path("fresh", run)))?;
            let attr_config = self.attribution_config("fresh", run);
            let extractor = MethodExtractor {
                model: &fulltext,
                method: self.config.fresh.method,
                ratio: self.config.fresh.ratio,
                config: &attr_config,
            };
            let layperson = FreshModel {
                classifier: &classifier,
                extractor: &extractor,
            };
            let method = self.config.fresh.method.name();
            for split in SplitName::TEST {
                let r = layperson_agreement(&layperson, &fulltext, bundle.get(split), split.as_str(), method)?;
                rows.push(AgreementRow {
                    split: r.split.clone(),
                    extractor: r.extractor_method.clone(),
                    seed: run,
                    agreement_macro_f1: r.macro_f1_vs_fulltext,
                    n: r.n,
                    confusion: r.confusion_string(),
                });
            }
        }
        Ok(vec![self.write_table(AGREEMENT_CSV, &rows)?])
    }

    fn stage_report(&self) -> Result<Vec<PathBuf>> {
        let mut artifacts = Vec::new();
        let mut perf: Vec<PerformanceRow> = Vec::new();
        for kind in PERFORMANCE_KINDS {
            let path = self.path(performance_part(kind));
            if path.exists() {
                perf.extend(read_csv::<PerformanceRow>(&path)?.1);
            }
        }
        artifacts.push(self.write_table(PERFORMANCE_CSV, &perf)?);
        artifacts.push(self.write_table(PERFORMANCE_SUMMARY_CSV, &summarize_performance(&perf))?);

        if self.config.fresh.enabled {
            let mut freq = Vec::new();
            for split in SplitName::TEST {
                let mut records = Vec::new();
                for &run in &self.config.seeds {
                    records.extend(read_manifest(self.path(rationale_path("fresh", run, split)))?);
                }
                for (rank, (token, count)) in token_frequency_report(&records, self.config.report.top_n)?
                    .into_iter()
                    .enumerate()
                {
                    freq.push(TokenFrequencyRow {
                        split: split.to_string(),
                        source: "fresh".into(),
                        rank: rank + 1,
                        token,
                        count,
                    });
                }
            }
            artifacts.push(self.write_table(TOKEN_FREQUENCY_CSV, &freq)?);
        }
        artifacts.extend(emit_report(&self.dir)?);
        Ok(artifacts)
    }
}

/// Deterministic rationales of a selective model with the fraction of
/// visible tokens they keep.
fn selective_records(model: &SelectiveModel, test: &[TimestampedExample], budget: Option<f64>) -> (Vec<RationaleRecord>, f64) {
    let mut records = Vec::with_capacity(test.len());
    let mut kept = 0.0;
    for ex in test {
        let input = model.encode(&ex.text);
        let r = model.extract(&input);
        let n = input.n_visible();
        kept += r.len() as f64 / n.max(1) as f64;
        records.push(RationaleRecord {
            id: ex.id.clone(),
            tokens: input.token_ids.iter().map(|&t| model.vocab.token(t).to_string()).collect(),
            indices: r.indices.clone(),
            soft_mask: r.soft_mask.clone(),
            source: r.source,
            ratio: None,
            budget: budget.map(|b| BudgetConstraint::from_ratio(b, n).budget),
        });
    }
    (records, kept / test.len().max(1) as f64)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    (numeric::mean(values), numeric::std_dev(values))
}

/// Per (split, method) mean and standard deviation over seeds. Ratio
/// columns are left empty when any seed lacks a ratio.
pub fn summarize_results(rows: &[ResultRow]) -> Vec<ResultSummaryRow> {
    let mut groups: Vec<((String, String, String), Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.split.clone(), r.method.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((dataset, split, method), rs)| {
            let suff: Vec<f64> = rs.iter().map(|r| r.aopc_norm_suff).collect();
            let comp: Vec<f64> = rs.iter().map(|r| r.aopc_norm_comp).collect();
            let opt = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
                let vals: Option<Vec<f64>> = rs.iter().map(|r| f(r)).collect();
                match vals {
                    Some(v) => {
                        let (m, s) = mean_std(&v);
                        (Some(m), Some(s))
                    }
                    None => (None, None),
                }
            };
            let (rs_m, rs_s) = opt(&|r| r.ratio_suff);
            let (rc_m, rc_s) = opt(&|r| r.ratio_comp);
            let (sm, ss) = mean_std(&suff);
            let (cm, cs) = mean_std(&comp);
            ResultSummaryRow {
                dataset,
                split,
                method,
                n_seeds: rs.len(),
                aopc_norm_suff_mean: sm,
                aopc_norm_suff_std: ss,
                aopc_norm_comp_mean: cm,
                aopc_norm_comp_std: cs,
                ratio_suff_mean: rs_m,
                ratio_suff_std: rs_s,
                ratio_comp_mean: rc_m,
                ratio_comp_std: rc_s,
            }
        })
        .collect()
}

/// Per (model, split) mean and standard deviation over seeds, with the
/// difference to the full-text mean on the same split.
pub fn summarize_performance(rows: &[PerformanceRow]) -> Vec<PerformanceSummaryRow> {
    let mut groups: Vec<((String, String, String), Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.model.clone(), r.split.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.macro_f1),
            None => groups.push((key, vec![r.macro_f1])),
        }
    }
    let fulltext: BTreeMap<String, f64> = groups
        .iter()
        .filter(|((_, m, _), _)| m == "fulltext")
        .map(|((_, _, s), v)| (s.clone(), numeric::mean(v)))
        .collect();
    groups
        .iter()
        .map(|((dataset, model, split), v)| {
            let (m, s) = mean_std(v);
            PerformanceSummaryRow {
                dataset: dataset.clone(),
                model: model.clone(),
                split: split.clone(),
                n_seeds: v.len(),
                macro_f1_mean: m,
                macro_f1_std: s,
                retention: fulltext.get(split).map_or(0.0, |f| m - f),
            }
        })
        .collect()
}

/// Validates the config, then runs every stage not already complete.
pub fn run_pipeline(config: ExperimentConfig) -> Result<RunManifest> {
    let mut p = Pipeline::open(config)?;
    p.run_all()?;
    Ok(p.manifest)
}

/// Runs `stage` and its prerequisites only.
pub fn run_until(config: ExperimentConfig, stage: Stage) -> Result<RunManifest> {
    let mut p = Pipeline::open(config)?;
    p.run_stage(stage)?;
    Ok(p.manifest)
}
