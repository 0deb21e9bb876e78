use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngExt};

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::{layer_norm, masked_attention, AttentionMask, Matrix};

static NEXT_ENCODER_ID: AtomicU64 = AtomicU64::new(1);

const LN_EPS: f32 = 1e-5;

/// Affine map `x · w + b` with `w` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Vec<f32>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(input, output),
            b: vec![0.0; output],
        }
    }

    pub fn random<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f32).sqrt();
        let w = (0..input * output)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b = (0..output).map(|_| rng.random_range(-0.1f32..0.1)).collect();
        Self {
            w: Matrix::new(input, output, w).expect("sized by construction"),
            b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul(&self.w)?;
        y.add_row_vector(&self.b)?;
        Ok(y)
    }

    /// Forward pass for a single vector.
    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                "Linear::apply",
                format!("input len {} vs {}", x.len(), self.input_dim()),
            ));
        }
        let mut y = self.b.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yj, w) in y.iter_mut().zip(self.w.row(i)) {
                *yj += xi * w;
            }
        }
        Ok(y)
    }

    pub fn parameter_count(&self) -> usize {
        self.w.data().len() + self.b.len()
    }
}

/// Parameters of one pre-norm transformer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub norm1_gain: Vec<f32>,
    pub norm1_bias: Vec<f32>,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub norm2_gain: Vec<f32>,
    pub norm2_bias: Vec<f32>,
    pub ffn1: Linear,
    pub ffn2: Linear,
}

impl LayerParams {
    fn random<R: Rng>(rng: &mut R, cfg: &EncoderConfig) -> Self {
        let d = cfg.model_dim;
        Self {
            norm1_gain: vec![1.0; d],
            norm1_bias: vec![0.0; d],
            q: Linear::random(rng, d, d),
            k: Linear::random(rng, d, d),
            v: Linear::random(rng, d, d),
            out: Linear::random(rng, d, d),
            norm2_gain: vec![1.0; d],
            norm2_bias: vec![0.0; d],
            ffn1: Linear::random(rng, d, cfg.ffn_dim),
            ffn2: Linear::random(rng, cfg.ffn_dim, d),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.norm1_gain.len()
            + self.norm1_bias.len()
            + self.q.parameter_count()
            + self.k.parameter_count()
            + self.v.parameter_count()
            + self.out.parameter_count()
            + self.norm2_gain.len()
            + self.norm2_bias.len()
            + self.ffn1.parameter_count()
            + self.ffn2.parameter_count()
    }

    /// Query, key and value projections of the normalized layer input.
    pub(crate) fn project(&self, x: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
        let h = layer_norm(x, &self.norm1_gain, &self.norm1_bias, LN_EPS)?;
        Ok((self.q.forward(&h)?, self.k.forward(&h)?, self.v.forward(&h)?))
    }

    /// Residual attention output followed by the residual feed-forward block.
    pub(crate) fn finish(&self, x: &Matrix, attended: &Matrix) -> Result<Matrix> {
        let mut y = x.clone();
        y.add_assign(&self.out.forward(attended)?)?;
        let h = layer_norm(&y, &self.norm2_gain, &self.norm2_bias, LN_EPS)?;
        let mut f = self.ffn1.forward(&h)?;
        f.map_inplace(|v| v.max(0.0));
        y.add_assign(&self.ffn2.forward(&f)?)?;
        Ok(y)
    }
}

/// Splits `q`, `k`, `v` into heads, attends per head and concatenates.
pub(crate) fn multi_head_attention(
    num_heads: usize,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &AttentionMask,
) -> Result<Matrix> {
    let dim = q.cols();
    let hd = dim / num_heads;
    let mut out = Matrix::zeros(q.rows(), dim);
    for h in 0..num_heads {
        let (s, e) = (h * hd, (h + 1) * hd);
        let head = masked_attention(&q.slice_cols(s, e), &k.slice_cols(s, e), &v.slice_cols(s, e), mask)?;
        out.set_cols(s, &head);
    }
    Ok(out)
}

/// Parameters of one streaming encoder.
///
/// `layer_block[i]` names the parameter block used by layer `i`; layers in
/// the configured shared range all point at the same block.
#[derive(Debug, Clone)]
pub struct EncoderWeights {
    id: u64,
    config: EncoderConfig,
    pub input_proj: Linear,
    blocks: Vec<LayerParams>,
    layer_block: Vec<usize>,
    pub final_norm_gain: Vec<f32>,
    pub final_norm_bias: Vec<f32>,
}

impl EncoderWeights {
    pub fn random<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layer_block = layer_block_map(config);
        let n_blocks = config.distinct_layer_blocks();
        let input_proj = Linear::random(rng, config.input_dim, config.model_dim);
        let blocks = (0..n_blocks).map(|_| LayerParams::random(rng, config)).collect();
        Ok(Self {
            id: NEXT_ENCODER_ID.fetch_add(1, Ordering::Relaxed),
            config: config.clone(),
            input_proj,
            blocks,
            layer_block,
            final_norm_gain: vec![1.0; config.model_dim],
            final_norm_bias: vec![0.0; config.model_dim],
        })
    }

    /// Identity used to reject states created for a different encoder.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layer(&self, index: usize) -> &LayerParams {
        &self.blocks[self.layer_block[index]]
    }

    pub fn blocks(&self) -> &[LayerParams] {
        &self.blocks
    }

    pub fn block_mut(&mut self, block: usize) -> &mut LayerParams {
        &mut self.blocks[block]
    }

    pub fn block_of_layer(&self, layer: usize) -> usize {
        self.layer_block[layer]
    }

    /// First layer index that uses each block; used to name blocks on disk.
    pub fn block_owner_layers(&self) -> Vec<usize> {
        let mut owners = vec![usize::MAX; self.blocks.len()];
        for (layer, &b) in self.layer_block.iter().enumerate() {
            owners[b] = owners[b].min(layer);
        }
        owners
    }

    pub fn distinct_layer_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Parameters held by the layer stack, counting each shared block once.
    pub fn layer_parameter_count(&self) -> usize {
        self.blocks.iter().map(LayerParams::parameter_count).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_parameter_count()
            + self.input_proj.parameter_count()
            + self.final_norm_gain.len()
            + self.final_norm_bias.len()
    }

    pub(crate) fn final_norm(&self, x: &Matrix) -> Result<Matrix> {
        layer_norm(x, &self.final_norm_gain, &self.final_norm_bias, LN_EPS)
    }
}

fn layer_block_map(config: &EncoderConfig) -> Vec<usize> {
    let mut map = Vec::with_capacity(config.num_layers);
    let mut next = 0;
    for layer in 0..config.num_layers {
        let one_based = layer + 1;
        match config.shared_layer_range {
            Some((a, b)) if one_based > a && one_based <= b => map.push(map[a - 1]),
            _ => {
                map.push(next);
                next += 1;
            }
        }
    }
    map
}
