use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::DecodeConfig;
use crate::encoder::{CascadeConfig, EncoderConfig, DEFAULT_STRIDE};
use crate::error::{Error, Result};
use crate::transducer::{JoinerConfig, LossConfig, PredictorConfig, Vocabulary};

/// Where the decoding model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSource {
    /// Random weights drawn from `seed`.
    #[default]
    Random,
    Checkpoint { path: PathBuf },
    /// Lookup-table models, one `<dir>/<utterance id>.json` per utterance.
    Table {
        dir: PathBuf,
        #[serde(default)]
        fast_table: usize,
        #[serde(default = "one")]
        slow_table: usize,
    },
}

fn one() -> usize {
    1
}

fn default_stride() -> usize {
    DEFAULT_STRIDE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub joiner: JoinerConfig,
    pub vocab: Vocabulary,
    pub decode: DecodeConfig,
    #[serde(default)]
    pub loss: LossConfig,
    /// Input frames stacked into one encoder frame.
    #[serde(default = "default_stride")]
    pub time_reduction: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSource,
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        other => Error::Config(format!("{name}: {other}")),
    })
}

impl RunConfig {
    /// Small cascade matching the default decode geometry: fast segment 4,
    /// slow segment 8, right context 1.
    pub fn example(input_dim: usize, labels: usize) -> Self {
        let fast = EncoderConfig {
            input_dim: input_dim * DEFAULT_STRIDE,
            num_layers: 2,
            model_dim: 16,
            num_heads: 2,
            ffn_dim: 32,
            segment_size: 4,
            right_context: 1,
            max_history: None,
            shared_layer_range: None,
        };
        let slow = EncoderConfig {
            input_dim: 16,
            num_layers: 2,
            segment_size: 8,
            ..fast.clone()
        };
        Self {
            cascade: CascadeConfig {
                fast,
                slow,
                slow_segment_multiple: 2,
            },
            predictor: PredictorConfig::default(),
            joiner: JoinerConfig::default(),
            vocab: Vocabulary::synthetic(labels),
            decode: DecodeConfig::default(),
            loss: LossConfig::default(),
            time_reduction: DEFAULT_STRIDE,
            seed: 0,
            model: ModelSource::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        field("cascade", self.cascade.validate())?;
        field("decode", self.decode.validate())?;
        field("vocab", self.vocab.validate())?;
        field("predictor", self.predictor.validate())?;
        if self.joiner.hidden_dim == 0 {
            return Err(Error::Config("joiner: hidden_dim must be >= 1".into()));
        }
        field("loss", self.loss.validate())?;
        if self.time_reduction == 0 {
            return Err(Error::Config("time_reduction: must be >= 1".into()));
        }
        if !matches!(self.model, ModelSource::Table { .. }) {
            let c = &self.cascade;
            if self.decode.fast_segment != c.fast.segment_size || self.decode.slow_segment != c.slow.segment_size {
                return Err(Error::Config(format!(
                    "decode: segments {}/{} must match the cascade encoders' {}/{}",
                    self.decode.fast_segment, self.decode.slow_segment, c.fast.segment_size, c.slow.segment_size
                )));
            }
        }
        Ok(())
    }

    /// Parses and validates; relative model paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match &mut cfg.model {
            ModelSource::Checkpoint { path } | ModelSource::Table { dir: path, .. } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
