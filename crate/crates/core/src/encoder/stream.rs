use super::weights::multi_head_attention;
use super::{EncoderWeights, FeatureMatrix};
use crate::error::{Error, Result};
use crate::numerics::{AttentionMask, Matrix};

/// One block of the stream with its lookahead frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Index of the block's first frame in the stream.
    pub start: usize,
    pub block: Matrix,
    pub right_context: Matrix,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.block.rows()
    }
}

/// Splits `frames` into `segment_size` blocks, each followed by the next
/// `right_context` frames of the input (truncated at the end of the stream).
pub fn segment_stream(frames: &Matrix, segment_size: usize, right_context: usize) -> Result<Vec<Segment>> {
    if segment_size == 0 {
        return Err(Error::Config("segment_size must be >= 1".into()));
    }
    let total = frames.rows();
    let mut out = Vec::with_capacity(total.div_ceil(segment_size));
    let mut start = 0;
    while start < total {
        let end = (start + segment_size).min(total);
        let rc_end = (end + right_context).min(total);
        out.push(Segment {
            start,
            block: frames.slice_rows(start, end),
            right_context: frames.slice_rows(end, rc_end),
        });
        start = end;
    }
    Ok(out)
}

/// Stacks `stride` consecutive frames into one; trailing frames that do not
/// fill a whole group are dropped.
pub fn time_reduction(features: &FeatureMatrix, stride: usize) -> Result<FeatureMatrix> {
    if stride == 0 {
        return Err(Error::Config("time reduction stride must be >= 1".into()));
    }
    let dim = features.dim();
    let out_frames = features.num_frames() / stride;
    let data = features.frames.data()[..out_frames * stride * dim].to_vec();
    Ok(FeatureMatrix {
        frames: Matrix::new(out_frames, dim * stride, data)?,
        frame_shift_ms: features.frame_shift_ms * stride as f32,
    })
}

/// Cached keys and values of one layer's left context.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub keys: Matrix,
    pub values: Matrix,
}

/// Streaming state of one encoder: per-layer history keys/values.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    encoder_id: u64,
    layers: Vec<LayerCache>,
    frames_consumed: usize,
    max_history: Option<usize>,
}

impl EncoderState {
    pub fn new(weights: &EncoderWeights) -> Self {
        let cfg = weights.config();
        Self {
            encoder_id: weights.id(),
            layers: (0..cfg.num_layers)
                .map(|_| LayerCache {
                    keys: Matrix::zeros(0, cfg.model_dim),
                    values: Matrix::zeros(0, cfg.model_dim),
                })
                .collect(),
            frames_consumed: 0,
            max_history: cfg.max_history,
        }
    }

    pub fn encoder_id(&self) -> u64 {
        self.encoder_id
    }

    pub fn frames_consumed(&self) -> usize {
        self.frames_consumed
    }

    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }

    pub fn cached_frames(&self) -> usize {
        self.layers.first().map_or(0, |c| c.keys.rows())
    }

    fn push(&mut self, layer: usize, keys: Matrix, values: Matrix) -> Result<()> {
        let cache = &mut self.layers[layer];
        let mut k = Matrix::vstack(&[&cache.keys, &keys])?;
        let mut v = Matrix::vstack(&[&cache.values, &values])?;
        if let Some(cap) = self.max_history {
            if k.rows() > cap {
                let drop = k.rows() - cap;
                k = k.slice_rows(drop, k.rows());
                v = v.slice_rows(drop, v.rows());
            }
        }
        cache.keys = k;
        cache.values = v;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    /// One row per block frame.
    pub main_outputs: Matrix,
    /// One row per right-context frame, computed against this block's context.
    pub lookahead_outputs: Matrix,
    pub new_state: EncoderState,
}

impl EncoderWeights {
    /// Encodes one block and returns the outputs together with the advanced
    /// state; `state` itself is left untouched.
    pub fn encode_block(&self, block: &Matrix, rc: &Matrix, state: &EncoderState) -> Result<BlockOutput> {
        let mut new_state = state.clone();
        let (main_outputs, lookahead_outputs) = self.encode_block_in_place(block, rc, &mut new_state)?;
        Ok(BlockOutput {
            main_outputs,
            lookahead_outputs,
            new_state,
        })
    }

    /// Same as [`encode_block`](Self::encode_block) but advances `state` in place.
    pub fn encode_block_in_place(
        &self,
        block: &Matrix,
        rc: &Matrix,
        state: &mut EncoderState,
    ) -> Result<(Matrix, Matrix)> {
        let cfg = self.config();
        if state.encoder_id != self.id() {
            return Err(Error::StateMismatch {
                state_owner: state.encoder_id,
                encoder: self.id(),
            });
        }
        if state.layers.len() != cfg.num_layers {
            return Err(Error::shape(
                "encode_block",
                format!("state has {} layers, encoder {}", state.layers.len(), cfg.num_layers),
            ));
        }
        if block.cols() != cfg.input_dim || (rc.rows() > 0 && rc.cols() != cfg.input_dim) {
            return Err(Error::shape(
                "encode_block",
                format!(
                    "block dim {} / rc dim {} vs input_dim {}",
                    block.cols(),
                    rc.cols(),
                    cfg.input_dim
                ),
            ));
        }
        if block.rows() == 0 {
            return Err(Error::shape("encode_block", "empty block"));
        }
        if block.rows() > cfg.segment_size || rc.rows() > cfg.right_context {
            return Err(Error::shape(
                "encode_block",
                format!(
                    "block {} rows / rc {} rows exceed segment {} / right context {}",
                    block.rows(),
                    rc.rows(),
                    cfg.segment_size,
                    cfg.right_context
                ),
            ));
        }
        let n_main = block.rows();
        let input = Matrix::vstack(&[block, rc])?;
        let mut x = self.input_proj.forward(&input)?;
        for layer in 0..cfg.num_layers {
            let params = self.layer(layer);
            let (q, k, v) = params.project(&x)?;
            let cache = &state.layers[layer];
            let keys = Matrix::vstack(&[&cache.keys, &k])?;
            let values = Matrix::vstack(&[&cache.values, &v])?;
            let mask = AttentionMask::full(x.rows(), keys.rows());
            let attended = multi_head_attention(cfg.num_heads, &q, &keys, &values, &mask)?;
            x = params.finish(&x, &attended)?;
            state.push(layer, k.slice_rows(0, n_main), v.slice_rows(0, n_main))?;
        }
        state.frames_consumed += n_main;
        let out = self.final_norm(&x)?;
        if !out.all_finite() {
            return Err(Error::NonFinite("encoder output"));
        }
        Ok((out.slice_rows(0, n_main), out.slice_rows(n_main, out.rows())))
    }
}
