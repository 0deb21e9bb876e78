use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::error::{Error, Result};

/// Joiner log-probabilities for every (frame, prefix length) node together
/// with the target sequence.
///
/// `log_probs[(t * (U + 1) + u) * V + k]` is `log P(k | t, y[..u])`, where
/// `V` is the output dimension including blank.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLattice {
    frames: usize,
    target: Vec<TokenId>,
    vocab: usize,
    blank: TokenId,
    log_probs: Vec<f64>,
}

/// On-disk form of a lattice; `V` counts every output symbol, blank included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeFixture {
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(rename = "U")]
    pub target_len: usize,
    #[serde(rename = "V")]
    pub vocab: usize,
    #[serde(default)]
    pub blank: TokenId,
    pub log_probs: Vec<f64>,
    pub target: Vec<TokenId>,
    /// Loss computed by path enumeration when the fixture was generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_loss: Option<f64>,
}

impl LossLattice {
    pub fn new(frames: usize, target: Vec<TokenId>, vocab: usize, blank: TokenId, log_probs: Vec<f64>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::shape("LossLattice", "T must be >= 1"));
        }
        if blank >= vocab {
            return Err(Error::InvalidToken { token: blank, dim: vocab });
        }
        if let Some(&bad) = target.iter().find(|&&k| k >= vocab || k == blank) {
            return Err(Error::InvalidToken { token: bad, dim: vocab });
        }
        let expect = frames * (target.len() + 1) * vocab;
        if log_probs.len() != expect {
            return Err(Error::shape(
                "LossLattice",
                format!("{} log-probs, expected T*(U+1)*V = {expect}", log_probs.len()),
            ));
        }
        if log_probs.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("lattice log-probs"));
        }
        Ok(Self {
            frames,
            target,
            vocab,
            blank,
            log_probs,
        })
    }

    pub fn from_fixture(f: &LatticeFixture) -> Result<Self> {
        if f.target.len() != f.target_len {
            return Err(Error::Fixture(format!("U = {} but target has {} tokens", f.target_len, f.target.len())));
        }
        Self::new(f.frames, f.target.clone(), f.vocab, f.blank, f.log_probs.clone())
    }

    pub fn to_fixture(&self, oracle_loss: Option<f64>) -> LatticeFixture {
        LatticeFixture {
            frames: self.frames,
            target_len: self.target.len(),
            vocab: self.vocab,
            blank: self.blank,
            log_probs: self.log_probs.clone(),
            target: self.target.clone(),
            oracle_loss,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn target(&self) -> &[TokenId] {
        &self.target
    }

    pub fn target_len(&self) -> usize {
        self.target.len()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn blank(&self) -> TokenId {
        self.blank
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn index(&self, t: usize, u: usize, k: TokenId) -> usize {
        (t * (self.target.len() + 1) + u) * self.vocab + k
    }

    pub fn at(&self, t: usize, u: usize, k: TokenId) -> f64 {
        self.log_probs[self.index(t, u, k)]
    }

    pub fn blank_at(&self, t: usize, u: usize) -> f64 {
        self.at(t, u, self.blank)
    }

    /// Log-probability of emitting the next target token from node `(t, u)`.
    pub fn label_at(&self, t: usize, u: usize) -> f64 {
        self.at(t, u, self.target[u])
    }

    /// Copy with one entry replaced; used by finite-difference checks.
    pub fn with_entry(&self, index: usize, value: f64) -> Self {
        let mut c = self.clone();
        c.log_probs[index] = value;
        c
    }
}
