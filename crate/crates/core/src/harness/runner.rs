use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::{load_checkpoint, FullModel, ModelConfig};
use super::config::{ModelSource, RunConfig};
use super::features::load_features;
use super::manifest::ManifestEntry;
use crate::decoder::{parallel_decode, DecodeRecord, NeuralSource, SpaceMode, TableModel, TableSource};
use crate::encoder::{time_reduction, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, pooled_rtf, rtf, FailedUtterance, MetricsReport, TimingReport, UtteranceEval, UtteranceTiming};

/// Decoding model resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Neural(Box<FullModel>),
    Table {
        dir: PathBuf,
        fast_table: usize,
        slow_table: usize,
    },
}

pub fn load_model(cfg: &RunConfig) -> Result<LoadedModel> {
    let model_config = || ModelConfig {
        cascade: cfg.cascade.clone(),
        predictor: cfg.predictor.clone(),
        joiner: cfg.joiner.clone(),
        vocab: cfg.vocab.clone(),
    };
    Ok(match &cfg.model {
        ModelSource::Random => LoadedModel::Neural(Box::new(FullModel::random(&model_config(), cfg.seed)?)),
        ModelSource::Checkpoint { path } => {
            let m = load_checkpoint(path)?;
            if m.config() != model_config() {
                return Err(Error::Config(format!(
                    "model: checkpoint {} was built for a different model config",
                    path.display()
                )));
            }
            LoadedModel::Neural(Box::new(m))
        }
        ModelSource::Table {
            dir,
            fast_table,
            slow_table,
        } => LoadedModel::Table {
            dir: dir.clone(),
            fast_table: *fast_table,
            slow_table: *slow_table,
        },
    })
}

pub fn load_table(path: &Path) -> Result<TableModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: TableModel = serde_json::from_str(&text).map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))?;
    m.finish_load()
}

/// Decode record plus the wall-clock time of the decode call.
#[derive(Debug, Clone)]
pub struct DecodedUtterance {
    pub record: DecodeRecord,
    pub wall_ms: f64,
    pub audio_ms: f64,
}

/// Decodes one utterance; the wall-clock time excludes model loading.
pub fn decode_utterance(
    model: &LoadedModel,
    cfg: &RunConfig,
    id: &str,
    features: &FeatureMatrix,
) -> Result<DecodedUtterance> {
    if features.num_frames() == 0 {
        return Err(Error::Config(format!("{id}: feature file has no frames")));
    }
    let frame_ms = features.frame_shift_ms as f64 * cfg.time_reduction as f64;
    let audio_ms = features.duration_ms();
    match model {
        LoadedModel::Neural(m) => {
            let start = Instant::now();
            let reduced = time_reduction(features, cfg.time_reduction)?;
            if reduced.dim() != cfg.cascade.fast.input_dim {
                return Err(Error::shape(
                    "decode",
                    format!(
                        "{}-dim features stacked x{} give {}, encoder expects {}",
                        features.dim(),
                        cfg.time_reduction,
                        reduced.dim(),
                        cfg.cascade.fast.input_dim
                    ),
                ));
            }
            let mut source = NeuralSource::new(&m.cascade, &reduced.frames)?;
            let out = parallel_decode(&mut source, &m.joint, &cfg.decode, SpaceMode::Shared)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(DecodedUtterance {
                record: DecodeRecord::from_output(id, &out, &m.joint.vocab, frame_ms)?,
                wall_ms,
                audio_ms,
            })
        }
        LoadedModel::Table {
            dir,
            fast_table,
            slow_table,
        } => {
            let table = load_table(&dir.join(format!("{id}.json")))?;
            if table.output_dim() != cfg.vocab.output_dim() {
                return Err(Error::Config(format!(
                    "vocab: {} entries but table for {id} has output dim {}",
                    cfg.vocab.output_dim(),
                    table.output_dim()
                )));
            }
            let start = Instant::now();
            let mut source = TableSource::new(&table, *fast_table, *slow_table, &cfg.decode)?;
            let out = parallel_decode(&mut source, &table, &cfg.decode, SpaceMode::Shared)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(DecodedUtterance {
                record: DecodeRecord::from_output(id, &out, &cfg.vocab, frame_ms)?,
                wall_ms,
                audio_ms,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    /// Successful decodes in manifest order.
    pub records: Vec<DecodeRecord>,
    pub timing: TimingReport,
}

impl RunOutput {
    pub fn any_failed(&self) -> bool {
        !self.report.failed.is_empty()
    }
}

/// Decodes every manifest entry on `threads` workers and scores the results.
/// A failing utterance is reported and skipped; results do not depend on
/// the worker count.
pub fn run_manifest(cfg: &RunConfig, model: &LoadedModel, manifest: &[ManifestEntry], threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    let results: Vec<Result<DecodedUtterance>> = pool.install(|| {
        manifest
            .par_iter()
            .map(|e| {
                let f = load_features(&e.features)?;
                decode_utterance(model, cfg, &e.id, &f)
            })
            .collect()
    });

    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (e, r) in manifest.iter().zip(results) {
        match r {
            Ok(d) => ok.push((e, d)),
            Err(err) => failed.push(FailedUtterance {
                id: e.id.clone(),
                error: err.to_string(),
            }),
        }
    }
    let evals: Vec<UtteranceEval<'_>> = ok
        .iter()
        .map(|(e, d)| UtteranceEval {
            id: &e.id,
            reference: &e.reference,
            alignment_ms: e.alignment_ms.as_deref(),
            record: &d.record,
        })
        .collect();
    let report = evaluate(&evals, failed)?;
    let per_utterance = ok
        .iter()
        .map(|(e, d)| {
            Ok(UtteranceTiming {
                id: e.id.clone(),
                wall_ms: d.wall_ms,
                audio_ms: d.audio_ms,
                rtf: rtf(d.wall_ms, d.audio_ms)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = ok.iter().map(|(_, d)| (d.wall_ms, d.audio_ms)).collect();
    let timing = TimingReport {
        rtf: if pairs.is_empty() { None } else { Some(pooled_rtf(&pairs)?) },
        per_utterance,
    };
    Ok(RunOutput {
        report,
        records: ok.into_iter().map(|(_, d)| d.record).collect(),
        timing,
    })
}

/// Report JSON without wall-clock data, stable across runs and thread counts.
pub fn report_json(report: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}
