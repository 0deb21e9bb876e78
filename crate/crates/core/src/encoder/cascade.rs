use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CascadeConfig, EncoderState, EncoderWeights};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Fast and slow encoder parameters of one cascade.
#[derive(Debug, Clone)]
pub struct CascadeWeights {
    pub config: CascadeConfig,
    pub fast: EncoderWeights,
    pub slow: EncoderWeights,
}

impl CascadeWeights {
    pub fn new(config: CascadeConfig, fast: EncoderWeights, slow: EncoderWeights) -> Result<Self> {
        config.validate()?;
        if fast.config() != &config.fast || slow.config() != &config.slow {
            return Err(Error::Config("encoder weights do not match cascade config".into()));
        }
        Ok(Self { config, fast, slow })
    }
}

/// Deterministic random initialization of both encoders from `seed`.
pub fn build_cascade(config: &CascadeConfig, seed: u64) -> Result<CascadeWeights> {
    config.validate()?;
    let mut fast_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slow_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_51_0E);
    let fast = EncoderWeights::random(&config.fast, &mut fast_rng)?;
    let slow = EncoderWeights::random(&config.slow, &mut slow_rng)?;
    CascadeWeights::new(config.clone(), fast, slow)
}

/// Streaming state of a cascade: both encoder histories plus the fast
/// outputs waiting for the next slow block.
#[derive(Debug, Clone)]
pub struct CascadeState {
    pub fast: EncoderState,
    pub slow: EncoderState,
    buffer: Vec<Matrix>,
}

impl CascadeState {
    pub fn new(weights: &CascadeWeights) -> Self {
        Self {
            fast: EncoderState::new(&weights.fast),
            slow: EncoderState::new(&weights.slow),
            buffer: Vec::new(),
        }
    }

    /// Fast segments currently buffered for the slow encoder.
    pub fn buffered_segments(&self) -> usize {
        self.buffer.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBlock {
    pub main: Matrix,
    pub lookahead: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutputs {
    pub fast: EncodedBlock,
    /// Present when this segment completed a slow block.
    pub slow: Option<EncodedBlock>,
}

/// Runs the fast encoder on one segment and, once `slow_segment_multiple`
/// fast segments are buffered (or the stream ends), the slow encoder on the
/// buffered fast outputs with the latest fast lookahead as right context.
pub fn encode_cascade_segment(
    weights: &CascadeWeights,
    state: &mut CascadeState,
    block: &Matrix,
    rc: &Matrix,
    end_of_stream: bool,
) -> Result<SegmentOutputs> {
    let multiple = weights.config.slow_segment_multiple;
    if state.buffer.len() >= multiple {
        return Err(Error::Config(format!(
            "slow buffer holds {} segments, limit {}",
            state.buffer.len(),
            multiple
        )));
    }
    let (main, lookahead) = weights.fast.encode_block_in_place(block, rc, &mut state.fast)?;
    state.buffer.push(main.clone());

    let slow = if state.buffer.len() == multiple || end_of_stream {
        let parts: Vec<&Matrix> = state.buffer.iter().collect();
        let slow_block = Matrix::vstack(&parts)?;
        let slow_rc = if end_of_stream {
            Matrix::zeros(0, lookahead.cols())
        } else {
            lookahead.clone()
        };
        let (slow_main, slow_look) = weights.slow.encode_block_in_place(&slow_block, &slow_rc, &mut state.slow)?;
        state.buffer.clear();
        Some(EncodedBlock {
            main: slow_main,
            lookahead: slow_look,
        })
    } else {
        None
    };

    Ok(SegmentOutputs {
        fast: EncodedBlock { main, lookahead },
        slow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_offline_with_lookahead, segment_stream, EncoderConfig};
    use rand::RngExt;

    fn cascade_cfg(multiple: usize) -> CascadeConfig {
        let fast = EncoderConfig {
            input_dim: 6,
            num_layers: 2,
            model_dim: 8,
            num_heads: 2,
            ffn_dim: 12,
            segment_size: 4,
            right_context: 1,
            max_history: None,
            shared_layer_range: None,
        };
        let slow = EncoderConfig {
            input_dim: 8,
            num_layers: 1,
            segment_size: 4 * multiple,
            ..fast.clone()
        };
        CascadeConfig {
            fast,
            slow,
            slow_segment_multiple: multiple,
        }
    }

    fn input(frames: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::new(frames, 6, (0..frames * 6).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
    }

    struct Trace {
        fast_main: Vec<Matrix>,
        fast_look: Vec<Matrix>,
        slow: Vec<(usize, EncodedBlock)>,
    }

    fn run(w: &CascadeWeights, x: &Matrix) -> Trace {
        let c = &w.config.fast;
        let segs = segment_stream(x, c.segment_size, c.right_context).unwrap();
        let mut state = CascadeState::new(w);
        let mut trace = Trace {
            fast_main: vec![],
            fast_look: vec![],
            slow: vec![],
        };
        let n = segs.len();
        for (j, s) in segs.iter().enumerate() {
            let out = encode_cascade_segment(w, &mut state, &s.block, &s.right_context, j + 1 == n).unwrap();
            trace.fast_main.push(out.fast.main);
            trace.fast_look.push(out.fast.lookahead);
            if let Some(slow) = out.slow {
                trace.slow.push((j, slow));
            }
        }
        trace
    }

    #[test]
    fn slow_runs_every_second_segment_with_fast_lookahead() {
        let w = build_cascade(&cascade_cfg(2), 11).unwrap();
        let x = input(16, 1);
        let t = run(&w, &x);
        // 4 fast calls, slow after segments 1 and 3
        assert_eq!(t.fast_main.len(), 4);
        assert_eq!(t.slow.iter().map(|s| s.0).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(t.slow[0].1.main.rows(), 8);
        assert_eq!(t.slow[0].1.lookahead.rows(), 1);
        // stream end: empty slow rc
        assert_eq!(t.slow[1].1.lookahead.rows(), 0);

        // slow main outputs equal the dense reference over the fast outputs,
        // with the fast lookahead Ô_8 as the first slow block's rc
        let fast_all = Matrix::vstack(&t.fast_main.iter().collect::<Vec<_>>()).unwrap();
        let rcs = vec![t.fast_look[1].clone(), Matrix::zeros(0, 8)];
        let (slow_ref, _) = encode_offline_with_lookahead(&w.slow, &fast_all, &rcs).unwrap();
        let slow_all = Matrix::vstack(&t.slow.iter().map(|s| &s.1.main).collect::<Vec<_>>()).unwrap();
        assert!(slow_all.max_abs_diff(&slow_ref) <= 1e-5);
    }

    #[test]
    fn multiple_one_runs_slow_every_segment() {
        let mut cfg = cascade_cfg(1);
        cfg.slow.num_layers = 2;
        let w = build_cascade(&cfg, 3).unwrap();
        let t = run(&w, &input(12, 2));
        assert_eq!(t.slow.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn stream_ending_mid_buffer_flushes_partial_block() {
        let w = build_cascade(&cascade_cfg(2), 5).unwrap();
        // 10 frames: fast segments [0..4), [4..8), [8..10)
        let x = input(10, 3);
        let t = run(&w, &x);
        assert_eq!(t.slow.iter().map(|s| s.0).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(t.slow[1].1.main.rows(), 2);
        assert_eq!(t.slow[1].1.lookahead.rows(), 0);
        let fast_all = Matrix::vstack(&t.fast_main.iter().collect::<Vec<_>>()).unwrap();
        let rcs = vec![t.fast_look[1].clone(), Matrix::zeros(0, 8)];
        let (slow_ref, _) = encode_offline_with_lookahead(&w.slow, &fast_all, &rcs).unwrap();
        let slow_all = Matrix::vstack(&t.slow.iter().map(|s| &s.1.main).collect::<Vec<_>>()).unwrap();
        assert!(slow_all.max_abs_diff(&slow_ref) <= 1e-5);
    }

    #[test]
    fn deterministic_build() {
        let a = build_cascade(&cascade_cfg(2), 42).unwrap();
        let b = build_cascade(&cascade_cfg(2), 42).unwrap();
        assert_eq!(a.fast.blocks(), b.fast.blocks());
        assert_eq!(a.slow.input_proj, b.slow.input_proj);
        let x = input(9, 8);
        let ta = run(&a, &x);
        let tb = run(&b, &x);
        assert_eq!(ta.fast_main, tb.fast_main);
    }
}
