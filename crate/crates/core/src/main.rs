use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use fastslow::harness::{
    decode_utterance, gen_fixtures, load_features, load_lattice_fixtures, load_manifest, load_model, report_json,
    run_manifest, save_checkpoint, FixtureSizes, FullModel, ModelConfig, RunConfig,
};
use fastslow::transducer::oracle::{enumerated_loss, max_gradient_error};
use fastslow::transducer::{transducer_loss, LossLattice};
use fastslow::Error;

#[derive(Parser)]
#[command(name = "fastslow", version, about = "Streaming fast/slow cascaded transducer decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one feature file and print its decode record.
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Utterance id; defaults to the feature file stem.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a manifest and write the metrics report.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report path; decode records and timings are written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Check transducer losses and gradients of lattice fixtures.
    LossCheck {
        /// Directory of lattice JSON files.
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate oracle fixtures and a scripted corpus.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        lattices: usize,
    },
    /// Write a randomly initialized checkpoint.
    InitModel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Failure that maps to a specific exit code.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Config(_) | Error::Json(_) => Failure::Config(anyhow::Error::new(e).context(path.display().to_string())),
        other => Failure::Config(anyhow::Error::new(other)),
    })
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct LossCheckReport {
    checked: usize,
    max_loss_error: f64,
    max_gradient_error: f64,
    failures: Vec<String>,
}

fn loss_check(dir: &Path) -> anyhow::Result<LossCheckReport> {
    let fixtures = load_lattice_fixtures(dir)?;
    let mut report = LossCheckReport {
        checked: 0,
        max_loss_error: 0.0,
        max_gradient_error: 0.0,
        failures: Vec::new(),
    };
    for (path, fx) in fixtures {
        let lat = LossLattice::from_fixture(&fx).with_context(|| path.display().to_string())?;
        let out = transducer_loss(&lat).with_context(|| path.display().to_string())?;
        let oracle = fx.oracle_loss.unwrap_or_else(|| enumerated_loss(&lat, None));
        let loss_err = (out.loss - oracle).abs();
        let grad_err = max_gradient_error(&lat, &out.grad, 1e-5, &|l| {
            transducer_loss(l).map_or(f64::NAN, |o| o.loss)
        });
        report.checked += 1;
        report.max_loss_error = report.max_loss_error.max(loss_err);
        report.max_gradient_error = report.max_gradient_error.max(grad_err);
        if !(loss_err <= 1e-8 && grad_err <= 1e-4) {
            report
                .failures
                .push(format!("{}: loss error {loss_err:e}, gradient error {grad_err:e}", path.display()));
        }
    }
    Ok(report)
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Decode {
            config,
            features,
            id,
            out,
        } => {
            let cfg = load_config(&config)?;
            let model = load_model(&cfg).map_err(|e| Failure::Config(e.into()))?;
            let f = load_features(&features).map_err(anyhow::Error::new)?;
            let id = id.unwrap_or_else(|| features.file_stem().map_or("utt".into(), |s| s.to_string_lossy().into_owned()));
            let d = decode_utterance(&model, &cfg, &id, &f).map_err(anyhow::Error::new)?;
            let text = serde_json::to_string_pretty(&d.record).map_err(anyhow::Error::new)? + "\n";
            write_or_print(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            config,
            manifest,
            out,
            threads,
        } => {
            let cfg = load_config(&config)?;
            let model = load_model(&cfg).map_err(|e| Failure::Config(e.into()))?;
            let entries = load_manifest(&manifest).map_err(anyhow::Error::new)?;
            let res = run_manifest(&cfg, &model, &entries, threads).map_err(anyhow::Error::new)?;
            write_or_print(Some(&out), &report_json(&res.report).map_err(anyhow::Error::new)?)?;
            let mut records = String::new();
            for r in &res.records {
                records.push_str(&serde_json::to_string(r).map_err(anyhow::Error::new)?);
                records.push('\n');
            }
            write_or_print(Some(&sibling(&out, "records.jsonl")), &records)?;
            let timing = serde_json::to_string_pretty(&res.timing).map_err(anyhow::Error::new)? + "\n";
            write_or_print(Some(&sibling(&out, "timing.json")), &timing)?;
            for f in &res.report.failed {
                eprintln!("utterance {} failed: {}", f.id, f.error);
            }
            Ok(if res.any_failed() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::LossCheck { fixtures, out } => {
            let report = loss_check(&fixtures)?;
            let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::new)? + "\n";
            write_or_print(out.as_deref(), &text)?;
            Ok(if report.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::GenFixtures { out, seed, lattices } => {
            let sizes = FixtureSizes {
                lattices,
                ..FixtureSizes::default()
            };
            gen_fixtures(&out, seed, &sizes).map_err(anyhow::Error::new)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::InitModel { config, out, seed } => {
            let cfg = load_config(&config)?;
            let mc = ModelConfig {
                cascade: cfg.cascade.clone(),
                predictor: cfg.predictor.clone(),
                joiner: cfg.joiner.clone(),
                vocab: cfg.vocab.clone(),
            };
            let model = FullModel::random(&mc, seed.unwrap_or(cfg.seed)).map_err(|e| Failure::Config(e.into()))?;
            save_checkpoint(&out, &model).map_err(anyhow::Error::new)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
