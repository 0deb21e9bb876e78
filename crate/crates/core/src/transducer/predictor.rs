//! Small gated recurrent predictor.
//!
//! Each layer is a GRU cell:
//!
//! ```text
//! z  = σ(Wz·x + Uz·h)      r = σ(Wr·x + Ur·h)
//! n  = tanh(Wn·x + r ⊙ (Un·h))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! (every `W·` and `U·` carries its own bias). The start-of-sequence input
//! is the zero vector; the top hidden state is projected to the joiner's
//! input width.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::encoder::Linear;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Width of the embedding handed to the joiner.
    pub output_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden_dim: 32,
            num_layers: 2,
            output_dim: 32,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 || self.output_dim == 0 {
            return Err(Error::Config("predictor dims and num_layers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub input_z: Linear,
    pub input_r: Linear,
    pub input_n: Linear,
    pub hidden_z: Linear,
    pub hidden_r: Linear,
    pub hidden_n: Linear,
}

impl GruLayer {
    fn random<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Self {
            input_z: Linear::random(rng, input, hidden),
            input_r: Linear::random(rng, input, hidden),
            input_n: Linear::random(rng, input, hidden),
            hidden_z: Linear::random(rng, hidden, hidden),
            hidden_r: Linear::random(rng, hidden, hidden),
            hidden_n: Linear::random(rng, hidden, hidden),
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_z: Linear::zeros(input, hidden),
            input_r: Linear::zeros(input, hidden),
            input_n: Linear::zeros(input, hidden),
            hidden_z: Linear::zeros(hidden, hidden),
            hidden_r: Linear::zeros(hidden, hidden),
            hidden_n: Linear::zeros(hidden, hidden),
        }
    }

    fn step(&self, x: &[f32], h: &[f32]) -> Result<Vec<f32>> {
        let xz = self.input_z.apply(x)?;
        let xr = self.input_r.apply(x)?;
        let xn = self.input_n.apply(x)?;
        let hz = self.hidden_z.apply(h)?;
        let hr = self.hidden_r.apply(h)?;
        let hn = self.hidden_n.apply(h)?;
        Ok((0..h.len())
            .map(|i| {
                let z = sigmoid(xz[i] + hz[i]);
                let r = sigmoid(xr[i] + hr[i]);
                let n = (xn[i] + r * hn[i]).tanh();
                (1.0 - z) * n + z * h[i]
            })
            .collect())
    }

    pub fn linears(&self) -> [(&'static str, &Linear); 6] {
        [
            ("wz", &self.input_z),
            ("wr", &self.input_r),
            ("wn", &self.input_n),
            ("uz", &self.hidden_z),
            ("ur", &self.hidden_r),
            ("un", &self.hidden_n),
        ]
    }

    pub fn linears_mut(&mut self) -> [(&'static str, &mut Linear); 6] {
        [
            ("wz", &mut self.input_z),
            ("wr", &mut self.input_r),
            ("wn", &mut self.input_n),
            ("uz", &mut self.hidden_z),
            ("ur", &mut self.hidden_r),
            ("un", &mut self.hidden_n),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    pub config: PredictorConfig,
    /// One row per output symbol.
    pub embedding: Matrix,
    pub layers: Vec<GruLayer>,
    pub output: Linear,
}

/// Recurrent hidden state after consuming a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub hidden: Vec<Vec<f32>>,
    pub consumed: usize,
}

impl PredictorWeights {
    pub fn random<R: Rng>(config: &PredictorConfig, vocab_size: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let emb = Linear::random(rng, vocab_size, config.embed_dim).w;
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.embed_dim } else { config.hidden_dim };
                GruLayer::random(rng, input, config.hidden_dim)
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            embedding: emb,
            layers,
            output: Linear::random(rng, config.hidden_dim, config.output_dim),
        })
    }

    pub fn zeros(config: &PredictorConfig, vocab_size: usize) -> Self {
        Self {
            config: config.clone(),
            embedding: Matrix::zeros(vocab_size, config.embed_dim),
            layers: (0..config.num_layers)
                .map(|l| {
                    let input = if l == 0 { config.embed_dim } else { config.hidden_dim };
                    GruLayer::zeros(input, config.hidden_dim)
                })
                .collect(),
            output: Linear::zeros(config.hidden_dim, config.output_dim),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn initial_state(&self) -> PredictorState {
        PredictorState {
            hidden: vec![vec![0.0; self.config.hidden_dim]; self.config.num_layers],
            consumed: 0,
        }
    }

    /// Consumes `token` (`None` = start of sequence) and returns the joiner
    /// input together with the advanced state.
    pub fn step(&self, token: Option<TokenId>, state: &PredictorState) -> Result<(Vec<f32>, PredictorState)> {
        let mut x = match token {
            None => vec![0.0; self.config.embed_dim],
            Some(t) if t < self.vocab_size() => self.embedding.row(t).to_vec(),
            Some(t) => {
                return Err(Error::InvalidToken {
                    token: t,
                    dim: self.vocab_size(),
                })
            }
        };
        if state.hidden.len() != self.layers.len() {
            return Err(Error::shape(
                "predictor_step",
                format!("state has {} layers, predictor {}", state.hidden.len(), self.layers.len()),
            ));
        }
        let mut hidden = Vec::with_capacity(self.layers.len());
        for (layer, h) in self.layers.iter().zip(&state.hidden) {
            let h_new = layer.step(&x, h)?;
            x = h_new.clone();
            hidden.push(h_new);
        }
        let out = self.output.apply(&x)?;
        Ok((
            out,
            PredictorState {
                hidden,
                consumed: state.consumed + usize::from(token.is_some()),
            },
        ))
    }
}
