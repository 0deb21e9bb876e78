use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Linear;
use crate::error::{Error, Result};
use crate::numerics::log_softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinerConfig {
    pub hidden_dim: usize,
}

impl Default for JoinerConfig {
    fn default() -> Self {
        Self { hidden_dim: 32 }
    }
}

/// `log_softmax(W_out · tanh(W_enc·e + W_pred·p))`.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinerWeights {
    pub enc_proj: Linear,
    pub pred_proj: Linear,
    pub output: Linear,
}

impl JoinerWeights {
    pub fn random<R: Rng>(enc_dim: usize, pred_dim: usize, cfg: &JoinerConfig, vocab_size: usize, rng: &mut R) -> Self {
        Self {
            enc_proj: Linear::random(rng, enc_dim, cfg.hidden_dim),
            pred_proj: Linear::random(rng, pred_dim, cfg.hidden_dim),
            output: Linear::random(rng, cfg.hidden_dim, vocab_size),
        }
    }

    pub fn zeros(enc_dim: usize, pred_dim: usize, cfg: &JoinerConfig, vocab_size: usize) -> Self {
        Self {
            enc_proj: Linear::zeros(enc_dim, cfg.hidden_dim),
            pred_proj: Linear::zeros(pred_dim, cfg.hidden_dim),
            output: Linear::zeros(cfg.hidden_dim, vocab_size),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    /// Pre-softmax scores.
    pub fn logits(&self, enc_frame: &[f32], pred: &[f32]) -> Result<Vec<f32>> {
        if enc_frame.len() != self.enc_proj.input_dim() || pred.len() != self.pred_proj.input_dim() {
            return Err(Error::shape(
                "joiner",
                format!(
                    "encoder frame {} / predictor output {} vs {} / {}",
                    enc_frame.len(),
                    pred.len(),
                    self.enc_proj.input_dim(),
                    self.pred_proj.input_dim()
                ),
            ));
        }
        let e = self.enc_proj.apply(enc_frame)?;
        let p = self.pred_proj.apply(pred)?;
        let h: Vec<f32> = e.iter().zip(&p).map(|(a, b)| (a + b).tanh()).collect();
        self.output.apply(&h)
    }

    /// Normalized log distribution over the output symbols.
    pub fn log_probs(&self, enc_frame: &[f32], pred: &[f32]) -> Result<Vec<f64>> {
        let logits: Vec<f64> = self.logits(enc_frame, pred)?.into_iter().map(f64::from).collect();
        log_softmax(&logits)
    }
}
