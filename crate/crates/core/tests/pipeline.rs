use std::path::Path;

use chronofaith::corpus::DriftSpec;
use chronofaith::experiment::manifest::{Stage, StageStatus};
use chronofaith::experiment::tables::{read_csv, ResultRow, RESULTS_CSV};
use chronofaith::experiment::{emit_report, run_pipeline, run_until, ExperimentConfig};

fn tiny(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::synthetic(DriftSpec::new(40, 300, 2, 0.5, 11), out);
    c.seeds = vec![0, 1];
    c.methods = vec!["scaled_attention".into(), "integrated_gradients".into(), "lime".into()];
    c.max_eval_examples = Some(8);
    c.model.epochs = 2;
    c.model.embedding_dim = 8;
    c.model.hidden_dim = 8;
    c.model.max_length = 16;
    c.attribution.ig_steps = 8;
    c.attribution.lime_samples = 40;
    for m in [&mut c.hardkuma.model, &mut c.spectra.model] {
        m.epochs = 2;
        m.embedding_dim = 8;
        m.hidden_dim = 8;
        m.max_length = 16;
    }
    c
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn full_run_writes_every_table_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_pipeline(tiny(a.path())).unwrap();
    let mb = run_pipeline(tiny(b.path())).unwrap();
    for stage in Stage::ALL {
        assert_eq!(ma.stages[&stage].status, StageStatus::Complete, "{stage}");
        assert_eq!(ma.stages[&stage].artifacts, mb.stages[&stage].artifacts);
    }
    for file in [
        "results.csv",
        "results_summary.csv",
        "performance.csv",
        "performance_summary.csv",
        "agreement.csv",
        "token_frequency.csv",
        "split_stats.csv",
        "density.csv",
    ] {
        let (x, y) = (read(&a.path().join(file)), read(&b.path().join(file)));
        assert!(x.starts_with("# config_hash="), "{file}");
        assert_eq!(x, y, "{file} differs between identical runs");
    }
    let (prov, rows): (_, Vec<ResultRow>) = read_csv(a.path().join(RESULTS_CSV)).unwrap();
    assert_eq!(prov.unwrap().config_hash, tiny(a.path()).hash());
    // 2 seeds x 3 splits x (3 methods + random)
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.aopc_norm_suff)));
    assert!(a.path().join("fig_faithfulness_suff.svg").exists());

    // figures regenerate from the CSVs alone
    let figs: Vec<_> = ["fig_faithfulness_suff.svg", "fig_faithfulness_comp.svg", "fig_density.svg", "fig_performance.svg"]
        .iter()
        .map(|f| read(&a.path().join(f)))
        .collect();
    for f in ["fig_faithfulness_suff.svg", "fig_density.svg"] {
        std::fs::remove_file(a.path().join(f)).unwrap();
    }
    emit_report(a.path()).unwrap();
    for (f, old) in ["fig_faithfulness_suff.svg", "fig_faithfulness_comp.svg", "fig_density.svg", "fig_performance.svg"]
        .iter()
        .zip(&figs)
    {
        assert_eq!(&read(&a.path().join(f)), old, "{f}");
        assert_eq!(&read(&b.path().join(f)), old, "{f}");
    }
}

#[test]
fn interrupted_run_resumes_without_recomputing() {
    let dir = tempfile::tempdir().unwrap();
    let partial = run_until(tiny(dir.path()), Stage::Faithfulness).unwrap();
    assert!(!partial.stages.contains_key(&Stage::Report));
    let before = partial.stages[&Stage::Train].finished;
    let results = read(&dir.path().join(RESULTS_CSV));

    let full = run_pipeline(tiny(dir.path())).unwrap();
    assert_eq!(full.stages[&Stage::Train].finished, before);
    assert_eq!(read(&dir.path().join(RESULTS_CSV)), results);
    assert_eq!(full.stages[&Stage::Report].status, StageStatus::Complete);

    let rerun = run_pipeline(tiny(dir.path())).unwrap();
    assert_eq!(rerun.digest(), full.digest());

    // a missing artifact reruns its stage and everything downstream
    std::fs::remove_file(dir.path().join("agreement.csv")).unwrap();
    let again = run_pipeline(tiny(dir.path())).unwrap();
    assert_eq!(again.stages[&Stage::Train].finished, before);
    assert!(again.stages[&Stage::Agreement].finished > full.stages[&Stage::Agreement].finished);
    assert!(again.stages[&Stage::Report].finished > full.stages[&Stage::Report].finished);
}

#[test]
fn changed_config_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_until(tiny(dir.path()), Stage::Split).unwrap();
    let mut c = tiny(dir.path());
    c.split.fractions = [0.5, 0.2, 0.1, 0.1, 0.1];
    let second = run_until(c.clone(), Stage::Split).unwrap();
    assert_ne!(first.config_hash, second.config_hash);
    assert_eq!(second.config_hash, c.hash());
    assert!(second.stages[&Stage::Split].finished > first.stages[&Stage::Split].finished);
}

#[test]
fn invalid_config_fails_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.methods = vec!["nope".into()];
    assert!(run_pipeline(c).is_err());
    assert!(!dir.path().join("manifest.json").exists());
}
