//! Parallel fast/slow beam search.
//!
//! Every fast segment extends `B_fast` with the fast encoder outputs. When a
//! slow block completes (or the stream ends) the slow search extends the
//! previous `B_slow` over the slow outputs of that block, and `B_fast` is
//! replaced by the top of `B_slow`. Both searches normally share one
//! [`SearchSpace`], so a prefix explored by either pass is predicted once.

use serde::{Deserialize, Serialize};

use super::beam::{beam_search, DEFAULT_MAX_SYMBOLS_PER_FRAME};
use super::hypothesis::{best_hypothesis, BeamSet, Hypothesis};
use super::model::JointModel;
use super::space::{SearchSpace, SpaceCounters};
use super::table::TableModel;
use crate::encoder::{encode_cascade_segment, segment_stream, CascadeState, CascadeWeights, Segment};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::transducer::TokenId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    /// Fast segment length in encoder frames.
    pub fast_segment: usize,
    /// Slow segment length in encoder frames; a multiple of `fast_segment`.
    pub slow_segment: usize,
    pub fast_beam: usize,
    pub slow_beam: usize,
    #[serde(default = "default_max_symbols")]
    pub max_symbols_per_frame: usize,
}

fn default_max_symbols() -> usize {
    DEFAULT_MAX_SYMBOLS_PER_FRAME
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            fast_segment: 4,
            slow_segment: 8,
            fast_beam: 4,
            slow_beam: 4,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fast_segment == 0 {
            return Err(Error::Config("decode.fast_segment must be >= 1".into()));
        }
        if self.slow_segment == 0 || self.slow_segment % self.fast_segment != 0 {
            return Err(Error::Config(format!(
                "decode.slow_segment ({}) must be a positive multiple of decode.fast_segment ({})",
                self.slow_segment, self.fast_segment
            )));
        }
        if self.fast_beam == 0 || self.slow_beam == 0 {
            return Err(Error::Config("decode.fast_beam and decode.slow_beam must be >= 1".into()));
        }
        if self.max_symbols_per_frame == 0 {
            return Err(Error::Config("decode.max_symbols_per_frame must be >= 1".into()));
        }
        Ok(())
    }

    pub fn slow_multiple(&self) -> usize {
        self.slow_segment / self.fast_segment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineRecord {
    /// Encoder frames consumed when the search finished.
    pub audio_frame: usize,
    pub source: Pass,
    pub tokens: Vec<TokenId>,
}

/// Best hypothesis after every search, in decode order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialTimeline {
    records: Vec<TimelineRecord>,
}

impl PartialTimeline {
    pub fn records(&self) -> &[TimelineRecord] {
        &self.records
    }

    fn push(&mut self, record: TimelineRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.audio_frame <= record.audio_frame));
        self.records.push(record);
    }
}

/// Whether the two passes share one prefix store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceMode {
    Shared,
    /// One store per pass; merged hypotheses are re-inserted into the fast
    /// store. Used to measure what sharing saves.
    Isolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub final_hyp: Hypothesis,
    /// Best fast hypothesis just before the last merge.
    pub fast_final: Hypothesis,
    pub timeline: PartialTimeline,
    /// Summed over both stores in isolated mode.
    pub counters: SpaceCounters,
    pub frames: usize,
}

/// Encoder outputs for one fast segment.
#[derive(Debug, Clone)]
pub struct SourceStep {
    pub start: usize,
    pub fast: Matrix,
    /// First frame and outputs of a completed slow block.
    pub slow: Option<(usize, Matrix)>,
}

/// Anything that can feed encoder outputs to [`parallel_decode`].
pub trait CascadeSource {
    fn next_step(&mut self) -> Result<Option<SourceStep>>;
}

/// Runs the neural cascade over time-reduced features.
pub struct NeuralSource<'a> {
    weights: &'a CascadeWeights,
    state: CascadeState,
    segments: std::vec::IntoIter<Segment>,
    slow_start: usize,
}

impl<'a> NeuralSource<'a> {
    pub fn new(weights: &'a CascadeWeights, frames: &Matrix) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::Config("no encoder frames to decode".into()));
        }
        let fast = &weights.config.fast;
        let segments = segment_stream(frames, fast.segment_size, fast.right_context)?;
        Ok(Self {
            weights,
            state: CascadeState::new(weights),
            segments: segments.into_iter(),
            slow_start: 0,
        })
    }
}

impl CascadeSource for NeuralSource<'_> {
    fn next_step(&mut self) -> Result<Option<SourceStep>> {
        let Some(seg) = self.segments.next() else {
            return Ok(None);
        };
        let last = self.segments.len() == 0;
        let out = encode_cascade_segment(self.weights, &mut self.state, &seg.block, &seg.right_context, last)?;
        let slow = out.slow.map(|s| {
            let start = self.slow_start;
            self.slow_start = seg.end();
            (start, s.main)
        });
        Ok(Some(SourceStep {
            start: seg.start,
            fast: out.fast.main,
            slow,
        }))
    }
}

/// Feeds [`TableModel`] rows: fast searches read `fast_table`, slow searches
/// read `slow_table`.
pub struct TableSource {
    fast_table: usize,
    slow_table: usize,
    frames: usize,
    fast_segment: usize,
    slow_segment: usize,
    pos: usize,
    slow_start: usize,
}

impl TableSource {
    pub fn new(model: &TableModel, fast_table: usize, slow_table: usize, config: &DecodeConfig) -> Result<Self> {
        config.validate()?;
        if fast_table >= model.tables() || slow_table >= model.tables() {
            return Err(Error::Config(format!("table model has {} tables", model.tables())));
        }
        if model.frames() == 0 {
            return Err(Error::Config("no encoder frames to decode".into()));
        }
        Ok(Self {
            fast_table,
            slow_table,
            frames: model.frames(),
            fast_segment: config.fast_segment,
            slow_segment: config.slow_segment,
            pos: 0,
            slow_start: 0,
        })
    }
}

impl CascadeSource for TableSource {
    fn next_step(&mut self) -> Result<Option<SourceStep>> {
        if self.pos >= self.frames {
            return Ok(None);
        }
        let start = self.pos;
        let end = (start + self.fast_segment).min(self.frames);
        self.pos = end;
        let slow = (end % self.slow_segment == 0 || end == self.frames).then(|| {
            let s = self.slow_start;
            self.slow_start = end;
            (s, TableModel::encoder_rows(self.slow_table, s, end))
        });
        Ok(Some(SourceStep {
            start,
            fast: TableModel::encoder_rows(self.fast_table, start, end),
            slow,
        }))
    }
}

/// `B_fast <- B_slow`, truncated to the fast beam size.
pub fn merge_beams<S: Clone>(fast: &BeamSet, slow: &BeamSet, space: &SearchSpace<S>) -> Result<BeamSet> {
    for h in fast.hypotheses().iter().chain(slow.hypotheses()) {
        space.check(h.node)?;
    }
    let mut hyps = slow.hypotheses().to_vec();
    hyps.truncate(fast.beam_size());
    Ok(BeamSet::from_hypotheses(hyps, fast.beam_size()))
}

/// Emit frames after a slow search: tokens on the surfaced fast 1-best keep
/// its frames, tokens inherited from the previous slow beam keep theirs, and
/// anything else is stamped with the slow boundary.
fn restamp(slow: &mut BeamSet, surfaced: &Hypothesis, prior: &BeamSet, boundary: usize) {
    for h in slow.hypotheses_mut() {
        for i in 0..h.tokens.len() {
            let prefix = &h.tokens[..=i];
            if surfaced.tokens.starts_with(prefix) {
                h.token_emit_frames[i] = surfaced.token_emit_frames[i];
            } else if !prior.hypotheses().iter().any(|p| p.tokens.starts_with(prefix)) {
                h.token_emit_frames[i] = boundary;
            }
        }
    }
}

fn add_counters(a: SpaceCounters, b: SpaceCounters) -> SpaceCounters {
    SpaceCounters {
        predictor_evals: a.predictor_evals + b.predictor_evals,
        joiner_evals: a.joiner_evals + b.joiner_evals,
        cache_hits: a.cache_hits + b.cache_hits,
        cache_misses: a.cache_misses + b.cache_misses,
    }
}

/// Decodes one utterance with the parallel fast/slow search.
pub fn parallel_decode<M: JointModel, C: CascadeSource>(
    source: &mut C,
    model: &M,
    config: &DecodeConfig,
    mode: SpaceMode,
) -> Result<DecodeOutput> {
    config.validate()?;
    let mut fast_space = SearchSpace::new();
    let mut slow_space = match mode {
        SpaceMode::Shared => None,
        SpaceMode::Isolated => Some(SearchSpace::new()),
    };
    let mut b_fast = BeamSet::singleton(Hypothesis::empty(fast_space.root()), config.fast_beam);
    let slow_root = slow_space.as_ref().map_or(fast_space.root(), |s| s.root());
    let mut b_slow = BeamSet::singleton(Hypothesis::empty(slow_root), config.slow_beam);
    let mut timeline = PartialTimeline::default();
    let mut fast_final = None;
    let mut frames = 0;
    let max_sym = config.max_symbols_per_frame;

    while let Some(step) = source.next_step()? {
        let end = step.start + step.fast.rows();
        frames = frames.max(end);
        b_fast = beam_search(&step.fast, step.start, &b_fast, config.fast_beam, max_sym, &mut fast_space, model)?;
        let surfaced = best_hypothesis(&b_fast)?.clone();
        timeline.push(TimelineRecord {
            audio_frame: end,
            source: Pass::Fast,
            tokens: surfaced.tokens.clone(),
        });

        let Some((slow_start, slow_out)) = step.slow else {
            continue;
        };
        let space = slow_space.as_mut().unwrap_or(&mut fast_space);
        let prior = b_slow;
        b_slow = beam_search(&slow_out, slow_start, &prior, config.slow_beam, max_sym, space, model)?;
        restamp(&mut b_slow, &surfaced, &prior, end);
        timeline.push(TimelineRecord {
            audio_frame: end,
            source: Pass::Slow,
            tokens: best_hypothesis(&b_slow)?.tokens.clone(),
        });
        fast_final = Some(surfaced);
        b_fast = match &slow_space {
            None => merge_beams(&b_fast, &b_slow, &fast_space)?,
            Some(_) => {
                let mut hyps = b_slow.hypotheses().to_vec();
                hyps.truncate(config.fast_beam);
                for h in &mut hyps {
                    h.node = fast_space.lookup_or_insert(&h.tokens);
                }
                BeamSet::from_hypotheses(hyps, config.fast_beam)
            }
        };
    }

    let final_hyp = best_hypothesis(&b_slow)?.clone();
    let fast_final = fast_final.ok_or(Error::EmptyBeam)?;
    let counters = match &slow_space {
        None => fast_space.counters(),
        Some(s) => add_counters(fast_space.counters(), s.counters()),
    };
    Ok(DecodeOutput {
        final_hyp,
        fast_final,
        timeline,
        counters,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(fast: usize, slow: usize, beam: usize) -> DecodeConfig {
        DecodeConfig {
            fast_segment: fast,
            slow_segment: slow,
            fast_beam: beam,
            slow_beam: beam,
            max_symbols_per_frame: 10,
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(4, 8, 2).validate().is_ok());
        assert!(cfg(4, 6, 2).validate().is_err());
        assert!(cfg(0, 8, 2).validate().is_err());
        assert!(cfg(4, 8, 0).validate().is_err());
    }

    #[test]
    fn fig2_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = TableModel::random(&mut rng, 3, 3, 14, 2, 1.0);
        let c = cfg(4, 8, 3);
        let mut src = TableSource::new(&m, 0, 1, &c).unwrap();
        let out = parallel_decode(&mut src, &m, &c, SpaceMode::Shared).unwrap();
        let slow: Vec<usize> = out
            .timeline
            .records()
            .iter()
            .filter(|r| r.source == Pass::Slow)
            .map(|r| r.audio_frame)
            .collect();
        assert_eq!(slow, vec![8, 14]);
        let fast = out.timeline.records().iter().filter(|r| r.source == Pass::Fast).count();
        assert_eq!(fast, 4);
    }

    #[test]
    fn merge_truncates_and_checks_space() {
        let mut space: SearchSpace<Vec<TokenId>> = SearchSpace::new();
        let hyps: Vec<Hypothesis> = (1..=10)
            .map(|k| Hypothesis {
                tokens: vec![k],
                log_prob: -(k as f64),
                node: space.lookup_or_insert(&[k]),
                token_emit_frames: vec![0],
            })
            .collect();
        let slow = BeamSet::from_hypotheses(hyps, 10);
        let fast = BeamSet::new(2);
        let before = space.counters();
        let merged = merge_beams(&fast, &slow, &space).unwrap();
        assert_eq!(merged.token_sequences(), vec![vec![1], vec![2]]);
        assert_eq!(space.counters(), before);
        let identity = merge_beams(&slow, &slow, &space).unwrap();
        assert_eq!(identity, slow);
        let other: SearchSpace<Vec<TokenId>> = SearchSpace::new();
        assert!(matches!(merge_beams(&fast, &slow, &other), Err(Error::CrossSpaceHandle { .. })));
    }

    #[test]
    fn degenerate_cascade_matches_beam_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = TableModel::random(&mut rng, 3, 4, 9, 1, 2.0);
            let c = cfg(3, 3, 3);
            let mut src = TableSource::new(&m, 0, 0, &c).unwrap();
            let out = parallel_decode(&mut src, &m, &c, SpaceMode::Shared).unwrap();
            let mut space = SearchSpace::new();
            let enc = TableModel::encoder_rows(0, 0, 9);
            let plain = beam_search(&enc, 0, &BeamSet::new(3), 3, 10, &mut space, &m).unwrap();
            assert_eq!(out.final_hyp.tokens, best_hypothesis(&plain).unwrap().tokens);
        }
    }

    #[test]
    fn after_merge_fast_beam_is_truncated_slow_beam() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = TableModel::random(&mut rng, 3, 4, 8, 2, 2.0);
        let c = DecodeConfig {
            fast_beam: 2,
            slow_beam: 5,
            ..cfg(4, 8, 0)
        };
        let mut src = TableSource::new(&m, 0, 1, &c).unwrap();
        let out = parallel_decode(&mut src, &m, &c, SpaceMode::Shared).unwrap();
        assert_eq!(out.timeline.records().last().unwrap().tokens, out.final_hyp.tokens);
    }

    #[test]
    fn shared_space_never_costs_more() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let m = TableModel::random(&mut rng, 3, 4, 8, 2, 2.0);
            let c = cfg(2, 4, 3);
            let shared = parallel_decode(&mut TableSource::new(&m, 0, 1, &c).unwrap(), &m, &c, SpaceMode::Shared).unwrap();
            let iso = parallel_decode(&mut TableSource::new(&m, 0, 1, &c).unwrap(), &m, &c, SpaceMode::Isolated).unwrap();
            assert_eq!(shared.final_hyp.tokens, iso.final_hyp.tokens);
            assert!(shared.counters.predictor_evals < iso.counters.predictor_evals);
        }
    }

    #[test]
    fn emit_frames_never_precede_decoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = TableModel::random(&mut rng, 3, 4, 8, 2, 2.0);
            let c = cfg(2, 4, 3);
            let out = parallel_decode(&mut TableSource::new(&m, 0, 1, &c).unwrap(), &m, &c, SpaceMode::Shared).unwrap();
            let f = &out.final_hyp.token_emit_frames;
            assert_eq!(f.len(), out.final_hyp.tokens.len());
            assert!(f.iter().all(|&x| x <= 8));
        }
    }
}
