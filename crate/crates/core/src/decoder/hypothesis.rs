use std::cmp::Ordering;

use super::space::NodeHandle;
use crate::error::{Error, Result};
use crate::numerics::log_add;
use crate::transducer::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Cumulative `log Pr(y)`.
    pub log_prob: f64,
    pub node: NodeHandle,
    /// Encoder frame at which each token first entered this hypothesis.
    pub token_emit_frames: Vec<usize>,
}

impl Hypothesis {
    pub fn empty(node: NodeHandle) -> Self {
        Self {
            tokens: Vec::new(),
            log_prob: 0.0,
            node,
            token_emit_frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `log Pr(y) / max(1, |y|)`.
    pub fn normalized_score(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }
}

/// Beam order: higher `log_prob` first, then shorter, then smaller token ids.
pub fn beam_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// At most `beam_size` hypotheses with distinct token sequences, sorted by
/// [`beam_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSet {
    hyps: Vec<Hypothesis>,
    beam_size: usize,
}

impl BeamSet {
    pub fn new(beam_size: usize) -> Self {
        Self {
            hyps: Vec::new(),
            beam_size,
        }
    }

    pub fn singleton(hyp: Hypothesis, beam_size: usize) -> Self {
        Self::from_hypotheses(vec![hyp], beam_size)
    }

    /// Merges duplicate token sequences by log-sum-exp, sorts and truncates.
    /// A merged entry keeps the bookkeeping of its most probable member.
    pub fn from_hypotheses(hyps: Vec<Hypothesis>, beam_size: usize) -> Self {
        let mut merged: Vec<Hypothesis> = Vec::with_capacity(hyps.len());
        for h in hyps {
            match merged.iter_mut().find(|m| m.tokens == h.tokens) {
                Some(m) => {
                    let total = log_add(m.log_prob, h.log_prob);
                    if h.log_prob > m.log_prob {
                        *m = h;
                    }
                    m.log_prob = total;
                }
                None => merged.push(h),
            }
        }
        merged.sort_by(beam_order);
        merged.truncate(beam_size);
        Self {
            hyps: merged,
            beam_size,
        }
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hyps
    }

    pub fn hypotheses_mut(&mut self) -> &mut [Hypothesis] {
        &mut self.hyps
    }

    pub fn into_hypotheses(self) -> Vec<Hypothesis> {
        self.hyps
    }

    pub fn beam_size(&self) -> usize {
        self.beam_size
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    /// Most probable hypothesis (the 1-best partial result).
    pub fn top(&self) -> Option<&Hypothesis> {
        self.hyps.first()
    }

    pub fn token_sequences(&self) -> Vec<Vec<TokenId>> {
        self.hyps.iter().map(|h| h.tokens.clone()).collect()
    }
}

/// Hypothesis maximizing `log Pr(y) / max(1, |y|)`; ties go to the shorter
/// sequence, then to the smaller token ids.
pub fn best_hypothesis(beam: &BeamSet) -> Result<&Hypothesis> {
    beam.hyps
        .iter()
        .min_by(|a, b| {
            b.normalized_score()
                .total_cmp(&a.normalized_score())
                .then_with(|| a.tokens.len().cmp(&b.tokens.len()))
                .then_with(|| a.tokens.cmp(&b.tokens))
        })
        .ok_or(Error::EmptyBeam)
}
