use serde::{Deserialize, Serialize};

use super::parallel::{DecodeOutput, Pass};
use crate::error::Result;
use crate::transducer::{word_end_indices, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmission {
    pub piece: String,
    pub emit_frame: usize,
    pub emit_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub audio_ms: f64,
    pub source: Pass,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounters {
    pub predictor_evals: u64,
    pub joiner_evals: u64,
}

/// JSON summary of one decoded utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: String,
    pub final_text: String,
    pub fast_final_text: String,
    pub tokens: Vec<TokenEmission>,
    pub timeline: Vec<TimelineEntry>,
    pub counters: RecordCounters,
}

impl DecodeRecord {
    /// `frame_ms` is the duration of one encoder frame.
    pub fn from_output(id: &str, out: &DecodeOutput, vocab: &Vocabulary, frame_ms: f64) -> Result<Self> {
        let tokens = out
            .final_hyp
            .tokens
            .iter()
            .zip(&out.final_hyp.token_emit_frames)
            .map(|(&t, &f)| {
                Ok(TokenEmission {
                    piece: vocab.piece(t)?.to_string(),
                    emit_frame: f,
                    emit_ms: f as f64 * frame_ms,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let timeline = out
            .timeline
            .records()
            .iter()
            .map(|r| TimelineEntry {
                audio_ms: r.audio_frame as f64 * frame_ms,
                source: r.source,
                text: vocab.detokenize(&r.tokens),
            })
            .collect();
        Ok(Self {
            id: id.to_string(),
            final_text: vocab.detokenize(&out.final_hyp.tokens),
            fast_final_text: vocab.detokenize(&out.fast_final.tokens),
            tokens,
            timeline,
            counters: RecordCounters {
                predictor_evals: out.counters.predictor_evals,
                joiner_evals: out.counters.joiner_evals,
            },
        })
    }

    /// Emit time of the last piece of each word of `final_text`.
    pub fn word_emit_ms(&self) -> Vec<f64> {
        word_end_indices(self.tokens.iter().map(|t| t.piece.as_str()))
            .into_iter()
            .map(|i| self.tokens[i].emit_ms)
            .collect()
    }
}
