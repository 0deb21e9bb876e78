//! Transducer beam search over a block of encoder frames.
//!
//! Per frame, `A` holds prefixes whose probability mass has not yet been
//! pushed through the frame and `B` collects prefixes that end the frame with
//! a blank. The most probable entry of `A` is popped, its blank extension goes
//! to `B` and its label extensions go back to `A`. Mass arriving at a prefix
//! that was already popped becomes a fresh `A` entry, and `B` merges repeated
//! arrivals by log-sum-exp, so with a large enough beam the result is the
//! exact path sum. The frame ends once `B` holds `beam_size` entries more
//! probable than anything left in `A`.

use std::collections::HashMap;

use super::hypothesis::{beam_order, BeamSet, Hypothesis};
use super::model::JointModel;
use super::space::{NodeHandle, SearchSpace};
use crate::error::{Error, Result};
use crate::numerics::{log_add, Matrix};
use crate::transducer::TokenId;

pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 10;

struct Pending {
    hyp: Hypothesis,
    emitted: usize,
}

/// Joiner outputs for one frame, keyed by predictor node.
struct FrameCache {
    logits: HashMap<usize, Vec<f64>>,
}

impl FrameCache {
    fn get<M: JointModel>(
        &mut self,
        frame: &[f32],
        node: NodeHandle,
        space: &mut SearchSpace<M::State>,
        model: &M,
    ) -> Result<&[f64]> {
        if !self.logits.contains_key(&node.node()) {
            let pred = space.prediction(node, model)?;
            let lp = model.joint(frame, &pred)?;
            if lp.len() != model.output_dim() {
                return Err(Error::shape("beam_search", format!("joiner returned {} scores", lp.len())));
            }
            space.count_joiner_eval();
            self.logits.insert(node.node(), lp);
        }
        Ok(&self.logits[&node.node()])
    }
}

fn pop_best(a: &mut Vec<Pending>) -> Option<Pending> {
    let i = (0..a.len()).min_by(|&i, &j| beam_order(&a[i].hyp, &a[j].hyp))?;
    Some(a.swap_remove(i))
}

fn push_pending(a: &mut Vec<Pending>, p: Pending) {
    match a.iter_mut().find(|q| q.hyp.tokens == p.hyp.tokens) {
        Some(q) => {
            let total = log_add(q.hyp.log_prob, p.hyp.log_prob);
            let emitted = q.emitted.min(p.emitted);
            if p.hyp.log_prob > q.hyp.log_prob {
                q.hyp = p.hyp;
            }
            q.hyp.log_prob = total;
            q.emitted = emitted;
        }
        None => a.push(p),
    }
}

fn push_final(b: &mut Vec<Hypothesis>, h: Hypothesis) {
    match b.iter_mut().find(|q| q.tokens == h.tokens) {
        Some(q) => {
            let total = log_add(q.log_prob, h.log_prob);
            if h.log_prob > q.log_prob {
                *q = h;
            }
            q.log_prob = total;
        }
        None => b.push(h),
    }
}

/// Runs the search over every row of `enc`, starting from `beam_in`.
///
/// Row `i` is global encoder frame `frame_offset + i`, which is the frame
/// recorded for any token emitted while processing it. An empty `beam_in`
/// starts from the empty prefix at the root of `space`. At most
/// `max_symbols` labels are emitted per frame along any path.
pub fn beam_search<M: JointModel>(
    enc: &Matrix,
    frame_offset: usize,
    beam_in: &BeamSet,
    beam_size: usize,
    max_symbols: usize,
    space: &mut SearchSpace<M::State>,
    model: &M,
) -> Result<BeamSet> {
    if beam_size == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    if enc.rows() == 0 {
        return Ok(beam_in.clone());
    }
    for h in beam_in.hypotheses() {
        space.check(h.node)?;
    }
    let blank = model.blank_id();
    let mut beam: Vec<Hypothesis> = if beam_in.is_empty() {
        vec![Hypothesis::empty(space.root())]
    } else {
        beam_in.hypotheses().to_vec()
    };

    for r in 0..enc.rows() {
        let frame = enc.row(r);
        let global = frame_offset + r;
        let mut cache = FrameCache { logits: HashMap::new() };
        let mut a: Vec<Pending> = beam.into_iter().map(|hyp| Pending { hyp, emitted: 0 }).collect();
        let mut b: Vec<Hypothesis> = Vec::new();

        loop {
            let Some(best_a) = a.iter().map(|p| p.hyp.log_prob).max_by(f64::total_cmp) else {
                break;
            };
            let ahead = b.iter().filter(|h| h.log_prob > best_a).count();
            if ahead >= beam_size {
                break;
            }
            let Pending { hyp, emitted } = pop_best(&mut a).expect("nonempty");
            let lp = cache.get(frame, hyp.node, space, model)?.to_vec();

            if emitted < max_symbols {
                for (k, &p) in lp.iter().enumerate() {
                    if k == blank || p == f64::NEG_INFINITY {
                        continue;
                    }
                    let node = space.child(hyp.node, k)?;
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(k as TokenId);
                    let mut frames = hyp.token_emit_frames.clone();
                    frames.push(global);
                    push_pending(
                        &mut a,
                        Pending {
                            hyp: Hypothesis {
                                tokens,
                                log_prob: hyp.log_prob + p,
                                node,
                                token_emit_frames: frames,
                            },
                            emitted: emitted + 1,
                        },
                    );
                }
            }
            if lp[blank] > f64::NEG_INFINITY {
                let log_prob = hyp.log_prob + lp[blank];
                push_final(&mut b, Hypothesis { log_prob, ..hyp });
            }
        }
        b.sort_by(beam_order);
        b.truncate(beam_size);
        beam = b;
    }
    Ok(BeamSet::from_hypotheses(beam, beam_size))
}
