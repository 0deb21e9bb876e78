//! Limited-context streaming encoder with block processing and the fast/slow
//! cascade.
//!
//! Each layer is a pre-norm transformer layer (multi-head attention plus a
//! ReLU feed-forward). Block processing splits the encoder input into
//! segments; every segment is padded with `right_context` lookahead frames
//! and attends to at most `max_history` cached frames of its left context.
//! Only keys and values of the segment's own frames are cached: lookahead
//! frames are recomputed as ordinary frames by the next segment.
//!
//! Time convention: acoustic frames arrive every 10 ms; after stride-4 time
//! reduction one encoder frame covers 40 ms.

mod cascade;
mod oracle;
mod stream;
mod weights;

pub use cascade::{build_cascade, encode_cascade_segment, CascadeState, CascadeWeights, EncodedBlock, SegmentOutputs};
pub use oracle::{encode_offline_oracle, encode_offline_with_lookahead, visible_frames};
pub use stream::{segment_stream, time_reduction, BlockOutput, EncoderState, Segment};
pub use weights::{EncoderWeights, LayerParams, Linear};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Default duration of one acoustic frame.
pub const ACOUSTIC_FRAME_MS: f32 = 10.0;
/// Default time-reduction stride.
pub const DEFAULT_STRIDE: usize = 4;

/// Acoustic (or encoder-rate) features with their frame shift.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Matrix,
    pub frame_shift_ms: f32,
}

impl FeatureMatrix {
    pub fn new(frames: Matrix, frame_shift_ms: f32) -> Self {
        Self {
            frames,
            frame_shift_ms,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn duration_ms(&self) -> f64 {
        self.num_frames() as f64 * self.frame_shift_ms as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Width of the frames fed to the input projection.
    pub input_dim: usize,
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    /// Segment length in encoder frames.
    pub segment_size: usize,
    /// Lookahead frames appended to each segment.
    pub right_context: usize,
    /// Cap on cached left-context frames; `None` keeps everything.
    #[serde(default)]
    pub max_history: Option<usize>,
    /// 1-based inclusive range of layers tied to one parameter block.
    #[serde(default)]
    pub shared_layer_range: Option<(usize, usize)>,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.input_dim == 0 {
            return bad("encoder input_dim must be >= 1".into());
        }
        if self.num_layers == 0 {
            return bad("encoder num_layers must be >= 1".into());
        }
        if self.model_dim == 0 || self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return bad(format!(
                "encoder model_dim {} must be a positive multiple of num_heads {}",
                self.model_dim, self.num_heads
            ));
        }
        if self.ffn_dim == 0 {
            return bad("encoder ffn_dim must be >= 1".into());
        }
        if self.segment_size == 0 {
            return bad("encoder segment_size must be >= 1".into());
        }
        if let Some((a, b)) = self.shared_layer_range {
            if a < 1 || b < a || b > self.num_layers {
                return bad(format!(
                    "shared_layer_range ({a}, {b}) must satisfy 1 <= a <= b <= num_layers ({})",
                    self.num_layers
                ));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    /// Number of distinct per-layer parameter blocks after sharing.
    pub fn distinct_layer_blocks(&self) -> usize {
        match self.shared_layer_range {
            Some((a, b)) => self.num_layers - (b - a),
            None => self.num_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub fast: EncoderConfig,
    pub slow: EncoderConfig,
    /// Fast segments per slow segment.
    pub slow_segment_multiple: usize,
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        self.fast.validate()?;
        self.slow.validate()?;
        if self.slow_segment_multiple == 0 {
            return Err(Error::Config("slow_segment_multiple must be >= 1".into()));
        }
        if self.slow.segment_size != self.fast.segment_size * self.slow_segment_multiple {
            return Err(Error::Config(format!(
                "slow segment_size {} must equal fast segment_size {} x slow_segment_multiple {}",
                self.slow.segment_size, self.fast.segment_size, self.slow_segment_multiple
            )));
        }
        if self.slow.input_dim != self.fast.model_dim {
            return Err(Error::Config(format!(
                "slow input_dim {} must equal fast model_dim {}",
                self.slow.input_dim, self.fast.model_dim
            )));
        }
        if self.slow.right_context != self.fast.right_context {
            return Err(Error::Config(format!(
                "slow right_context {} must equal fast right_context {} (slow lookahead is the fast lookahead output)",
                self.slow.right_context, self.fast.right_context
            )));
        }
        if self.slow.model_dim != self.fast.model_dim {
            return Err(Error::Config(format!(
                "fast and slow model_dim must match for the shared joiner ({} vs {})",
                self.fast.model_dim, self.slow.model_dim
            )));
        }
        Ok(())
    }
}
