//! Whole-utterance reference for the streaming encoder.
//!
//! The utterance is laid out once as `[main frames; rc copies of segment 0;
//! rc copies of segment 1; ...]` and every layer runs a single dense masked
//! attention over that sequence. Lookahead frames appear twice: as main
//! frames of the segment that owns them and as copies attached to the
//! preceding segment, which is how block processing sees them.

use super::weights::multi_head_attention;
use super::{EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::numerics::{AttentionMask, Matrix};

/// Original frame indices visible to frame `t` under block processing.
pub fn visible_frames(cfg: &EncoderConfig, total_frames: usize, t: usize) -> Vec<usize> {
    let seg = t / cfg.segment_size;
    let start = seg * cfg.segment_size;
    let end = (start + cfg.segment_size).min(total_frames);
    let hist = cfg.max_history.map_or(start, |h| h.min(start));
    let rc_end = (end + cfg.right_context).min(total_frames);
    (start - hist..rc_end).collect()
}

/// Main outputs for `features` (encoder-rate input frames).
pub fn encode_offline_oracle(weights: &EncoderWeights, features: &Matrix) -> Result<Matrix> {
    let cfg = weights.config();
    let total = features.rows();
    let rc_copies: Vec<Matrix> = (0..total.div_ceil(cfg.segment_size))
        .map(|j| {
            let end = ((j + 1) * cfg.segment_size).min(total);
            features.slice_rows(end, (end + cfg.right_context).min(total))
        })
        .collect();
    Ok(encode_offline_with_lookahead(weights, features, &rc_copies)?.0)
}

/// Dense reference with explicitly supplied lookahead rows per segment.
///
/// Returns the main outputs and, per segment, the lookahead outputs.
pub fn encode_offline_with_lookahead(
    weights: &EncoderWeights,
    main: &Matrix,
    rc_copies: &[Matrix],
) -> Result<(Matrix, Vec<Matrix>)> {
    let cfg = weights.config();
    let total = main.rows();
    let n_segments = total.div_ceil(cfg.segment_size);
    if rc_copies.len() != n_segments {
        return Err(Error::shape(
            "encode_offline_with_lookahead",
            format!("{} rc blocks for {n_segments} segments", rc_copies.len()),
        ));
    }
    if total == 0 {
        return Ok((Matrix::zeros(0, cfg.model_dim), Vec::new()));
    }

    // owner[r]: segment of row r; is_copy[r]: row is a lookahead copy
    let mut owner: Vec<usize> = (0..total).map(|t| t / cfg.segment_size).collect();
    let mut is_copy = vec![false; total];
    let mut parts = vec![main];
    for (j, rc) in rc_copies.iter().enumerate() {
        owner.extend(std::iter::repeat_n(j, rc.rows()));
        is_copy.extend(std::iter::repeat_n(true, rc.rows()));
        parts.push(rc);
    }
    let input = Matrix::vstack(&parts)?;
    let n = input.rows();

    let mask = AttentionMask::from_fn(n, n, |i, r| {
        let j = owner[i];
        if is_copy[r] {
            return owner[r] == j;
        }
        let start = j * cfg.segment_size;
        let end = (start + cfg.segment_size).min(total);
        let hist = cfg.max_history.map_or(start, |h| h.min(start));
        r >= start - hist && r < end
    });

    let mut x = weights.input_proj.forward(&input)?;
    for layer in 0..cfg.num_layers {
        let params = weights.layer(layer);
        let (q, k, v) = params.project(&x)?;
        let attended = multi_head_attention(cfg.num_heads, &q, &k, &v, &mask)?;
        x = params.finish(&x, &attended)?;
    }
    let out = weights.final_norm(&x)?;

    let mut lookahead = Vec::with_capacity(n_segments);
    let mut offset = total;
    for rc in rc_copies {
        lookahead.push(out.slice_rows(offset, offset + rc.rows()));
        offset += rc.rows();
    }
    Ok((out.slice_rows(0, total), lookahead))
}
