use std::path::PathBuf;
use std::process::ExitCode;

use chronofaith::attribution::AttributionMethod;
use chronofaith::corpus::DriftSpec;
use chronofaith::experiment::{run_until, ExperimentConfig, RunManifest, Stage};
use chronofaith::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chronofaith", version, about = "Explanation faithfulness under chronological splits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
}

#[derive(Subcommand)]
enum Command {
    /// Write a starter config over a generated drifted corpus.
    Init {
        #[arg(long, default_value = "experiment.toml")]
        path: PathBuf,
        #[arg(long, default_value_t = 5000)]
        examples: usize,
    },
    /// Chronological splits, split statistics and timestamp densities.
    Split(Common),
    /// Full-text classifiers, one per seed.
    Train(Common),
    /// Attribution maps for every test split and method.
    Attribute(Common),
    /// Normalized sufficiency and comprehensiveness against the random baseline.
    Faithfulness(Common),
    /// Select-then-predict with an attribution extractor.
    Fresh(Common),
    /// Stochastic gated rationales under an L0 rate target.
    Hardkuma(Common),
    /// Deterministic gated rationales under a token budget.
    Spectra(Common),
    /// Agreement between the rationale-only and full-text classifiers.
    Agreement(Common),
    /// Merged tables and figures.
    Report(Common),
    /// Every stage.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Attribution methods, comma separated. For `fresh`, the extractor method.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Removal ratios, comma separated.
    #[arg(long, value_delimiter = ',')]
    ratios: Vec<f64>,
    /// Fraction of tokens the FRESH extractor keeps.
    #[arg(long)]
    ratio: Option<f64>,
    /// Expected fraction of open gates for HardKUMA.
    #[arg(long)]
    target_rate: Option<f64>,
    /// SPECTRA token budget as a fraction of sequence length.
    #[arg(long)]
    budget: Option<f64>,
}

impl Command {
    fn stage(&self) -> Option<(Stage, &Common)> {
        Some(match self {
            Command::Init { .. } => return None,
            Command::Split(c) => (Stage::Split, c),
            Command::Train(c) => (Stage::Train, c),
            Command::Attribute(c) => (Stage::Attribute, c),
            Command::Faithfulness(c) => (Stage::Faithfulness, c),
            Command::Fresh(c) => (Stage::Fresh, c),
            Command::Hardkuma(c) => (Stage::Hardkuma, c),
            Command::Spectra(c) => (Stage::Spectra, c),
            Command::Agreement(c) => (Stage::Agreement, c),
            Command::Report(c) | Command::Run(c) => (Stage::Report, c),
        })
    }
}

fn build_config(stage: Stage, args: &Common) -> chronofaith::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if !args.method.is_empty() {
        if stage == Stage::Fresh || stage == Stage::Agreement {
            let [m] = args.method.as_slice() else {
                return Err(Error::Config("fresh takes a single --method".into()));
            };
            config.fresh.method = m.parse::<AttributionMethod>()?;
        } else {
            config.methods = args.method.clone();
        }
    }
    if !args.ratios.is_empty() {
        config.ratios = args.ratios.clone();
    }
    if let Some(r) = args.ratio {
        config.fresh.ratio = r;
    }
    if let Some(t) = args.target_rate {
        config.hardkuma.target_rate = t;
    }
    if let Some(b) = args.budget {
        config.spectra.budget = b;
    }
    // running a select-then-predict stage directly turns it on
    match stage {
        Stage::Fresh | Stage::Agreement => config.fresh.enabled = true,
        Stage::Hardkuma => config.hardkuma.enabled = true,
        Stage::Spectra => config.spectra.enabled = true,
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn summarize(manifest: &RunManifest) {
    for (stage, record) in &manifest.stages {
        println!("{stage:<13} {:?} ({} artifacts)", record.status, record.artifacts.len());
    }
    println!("config_hash={} manifest={}", manifest.config_hash, &manifest.digest()[..16]);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();

    let Some((stage, args)) = cli.command.stage() else {
        let Command::Init { path, examples } = &cli.command else {
            unreachable!()
        };
        let config = ExperimentConfig::synthetic(DriftSpec::new(200, *examples, 2, 0.5, 0), "out");
        let written = config
            .to_toml()
            .map_err(anyhow::Error::from)
            .and_then(|raw| std::fs::write(path, raw).map_err(anyhow::Error::from));
        return match written {
            Ok(()) => {
                println!("wrote {}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        };
    };

    let config = match build_config(stage, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_until(config, stage) {
        Ok(manifest) => {
            summarize(&manifest);
            ExitCode::SUCCESS
        }
        Err(e @ Error::Stage { .. }) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
