//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fastslow::decoder::{
    beam_search, best_hypothesis, parallel_decode, BeamSet, DecodeConfig, DecodeRecord, Pass, RecordCounters,
    SearchSpace, SpaceMode, TableModel, TableSource, TimelineEntry, TokenEmission, DEFAULT_MAX_SYMBOLS_PER_FRAME,
};
use fastslow::encoder::{
    encode_offline_oracle, segment_stream, EncoderConfig, EncoderState, EncoderWeights, FeatureMatrix,
};
use fastslow::harness::{
    load_manifest, load_model, random_lattice, run_manifest, scripted_corpus, write_features, write_manifest, write_scripted_corpus,
    ManifestEntry, RunConfig, ScriptedUtterance,
};
use fastslow::metrics::{evaluate, nearest_rank, wer, UtteranceEval};
use fastslow::numerics::Matrix;
use fastslow::transducer::oracle::{enumerated_loss, max_gradient_error};
use fastslow::transducer::{
    cascade_loss, combined_loss, fastemit_loss, restricted_loss, transducer_loss, LossConfig, LossLattice,
    PathRestriction, TokenId, Vocabulary,
};
use fastslow::Error;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fastslow-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}

fn loss_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let n = 600;
    for _ in 0..n {
        let t = rng.random_range(1..=4);
        let u = rng.random_range(0..=3);
        let v = rng.random_range(2..=4);
        let lat = random_lattice(&mut rng, t, u, v, 3.0);
        let dp = transducer_loss(&lat).map_err(err)?.loss;
        worst = worst.max((dp - enumerated_loss(&lat, None)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-8, || format!("max |dp - enumeration| = {worst:e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{n} lattices, max error {worst:.2e}, {secs:.2} s"))
}

fn random_restriction(rng: &mut ChaCha8Rng, lat: &LossLattice) -> PathRestriction {
    let mut align: Vec<usize> = (0..lat.target_len()).map(|_| rng.random_range(0..lat.frames())).collect();
    align.sort_unstable();
    let mut slack = || rng.random_bool(0.8).then(|| rng.random_range(0..=2));
    PathRestriction {
        token_alignment: align,
        left_slack: slack(),
        right_slack: slack(),
    }
}

fn frozen_blank_objective(base: &LossLattice, fe: f64) -> impl Fn(&LossLattice) -> f64 + '_ {
    move |x: &LossLattice| {
        let mut frozen = x.clone();
        for t in 0..x.frames() {
            for u in 0..=x.target_len() {
                let i = x.index(t, u, x.blank());
                frozen = frozen.with_entry(i, base.log_probs()[i]);
            }
        }
        let l = |y: &LossLattice| transducer_loss(y).map_or(f64::NAN, |o| o.loss);
        l(x) + fe * l(&frozen)
    }
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let n = 120;
    let mut worst = [0.0f64; 3];
    for _ in 0..n {
        let (t, u, v) = (rng.random_range(1..=4), rng.random_range(0..=3), rng.random_range(2..=4));
        let lat = random_lattice(&mut rng, t, u, v, 3.0);
        let plain = transducer_loss(&lat).map_err(err)?;
        worst[0] = worst[0].max(max_gradient_error(&lat, &plain.grad, h, &|l| {
            transducer_loss(l).map_or(f64::NAN, |o| o.loss)
        }));

        let (r, out) = loop {
            let r = random_restriction(&mut rng, &lat);
            if let Ok(out) = restricted_loss(&lat, &r) {
                break (r, out);
            }
        };
        worst[1] = worst[1].max(max_gradient_error(&lat, &out.grad, h, &|l| {
            restricted_loss(l, &r).map_or(f64::NAN, |o| o.loss)
        }));

        let fe = rng.random_range(0.001..0.5);
        let out = fastemit_loss(&lat, fe).map_err(err)?;
        let objective = frozen_blank_objective(&lat, fe);
        ensure((objective(&lat) - out.loss).abs() <= 1e-10, || "fast-emit value differs from J".into())?;
        worst[2] = worst[2].max(max_gradient_error(&lat, &out.grad, h, &objective));
    }
    ensure(worst.iter().all(|&w| w <= 1e-4), || {
        format!("max rel error plain {:.2e}, restricted {:.2e}, fast-emit {:.2e}", worst[0], worst[1], worst[2])
    })?;
    Ok(format!(
        "{n} instances each; max rel error plain {:.2e}, restricted {:.2e}, fast-emit {:.2e}",
        worst[0], worst[1], worst[2]
    ))
}

fn cascade_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100;
    for _ in 0..n {
        let t = rng.random_range(1..=4);
        let u = rng.random_range(0..=3);
        let v = rng.random_range(2..=4);
        let fast = random_lattice(&mut rng, t, u, v, 3.0);
        let other = random_lattice(&mut rng, t, u, v, 3.0);
        let slow = LossLattice::new(t, fast.target().to_vec(), v, 0, other.log_probs().to_vec()).map_err(err)?;
        let lambda = rng.random_range(0.01..0.99);
        let cfg = LossConfig {
            lambda,
            ..LossConfig::default()
        };
        let c = cascade_loss(&fast, &slow, None, &cfg).map_err(err)?;
        let gf = transducer_loss(&fast).map_err(err)?;
        let gs = transducer_loss(&slow).map_err(err)?;
        let scaled: Vec<f64> = gf.grad.iter().map(|g| lambda * g).collect();
        ensure(c.grad_fast == scaled, || "fast gradient is not lambda * dL_fast".into())?;
        ensure(c.grad_slow == gs.grad, || "slow gradient is not dL_slow".into())?;
        ensure(c.loss == gs.loss + lambda * gf.loss, || "value is not L_slow + lambda L_fast".into())?;
    }
    for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN, f64::INFINITY] {
        ensure(matches!(combined_loss(1.0, 1.0, bad), Err(Error::LambdaOutOfRange(_))), || {
            format!("lambda {bad} accepted")
        })?;
        let cfg = LossConfig {
            lambda: bad,
            ..LossConfig::default()
        };
        let lat = random_lattice(&mut rng, 2, 1, 3, 1.0);
        ensure(cascade_loss(&lat, &lat, None, &cfg).is_err(), || format!("cascade accepted lambda {bad}"))?;
    }
    Ok(format!("{n} lattice pairs exact; 6 out-of-range lambdas rejected"))
}

fn random_encoder_config(rng: &mut ChaCha8Rng, layers: usize) -> EncoderConfig {
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let model_dim = heads * 2 * rng.random_range(1..=16 / heads);
    EncoderConfig {
        input_dim: rng.random_range(1..=8),
        num_layers: layers,
        model_dim,
        num_heads: heads,
        ffn_dim: rng.random_range(4..=32),
        segment_size: [2, 4, 8][rng.random_range(0..3)],
        right_context: rng.random_range(0..=2),
        max_history: rng.random_bool(0.5).then(|| rng.random_range(1..=8)),
        shared_layer_range: None,
    }
}

fn random_frames(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect()).expect("sized")
}

/// Max abs difference between streamed main outputs and the offline oracle.
fn streaming_gap(w: &EncoderWeights, x: &Matrix) -> Result<f32, String> {
    let cfg = w.config();
    let mut state = EncoderState::new(w);
    let mut parts = Vec::new();
    for seg in segment_stream(x, cfg.segment_size, cfg.right_context).map_err(err)? {
        let (main, _) = w.encode_block_in_place(&seg.block, &seg.right_context, &mut state).map_err(err)?;
        parts.push(main);
    }
    let refs: Vec<&Matrix> = parts.iter().collect();
    let streamed = Matrix::vstack(&refs).map_err(err)?;
    let offline = encode_offline_oracle(w, x).map_err(err)?;
    ensure(streamed.all_finite(), || "non-finite streaming output".into())?;
    ensure(streamed.rows() == x.rows(), || format!("{} outputs for {} frames", streamed.rows(), x.rows()))?;
    Ok(streamed.max_abs_diff(&offline))
}

fn streaming_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 24;
    let mut worst: f32 = 0.0;
    for i in 0..n {
        let cfg = random_encoder_config(&mut rng, 1 + i % 4);
        cfg.validate().map_err(err)?;
        let w = EncoderWeights::random(&cfg, &mut rng).map_err(err)?;
        let rows = rng.random_range(1..=30);
        let x = random_frames(&mut rng, rows, cfg.input_dim);
        let gap = streaming_gap(&w, &x)?;
        ensure(gap <= 1e-5, || format!("config {cfg:?}: max abs diff {gap:e}"))?;
        worst = worst.max(gap);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{n} configs, max abs diff {worst:.2e}, {secs:.2} s"))
}

fn degenerate_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100;
    for i in 0..n {
        let output_dim = rng.random_range(2..=4);
        let frames = rng.random_range(1..=10);
        let m = TableModel::random(&mut rng, output_dim, 4, frames, 1, 2.0);
        let seg = rng.random_range(1..=4);
        let beam = rng.random_range(1..=5);
        let cfg = DecodeConfig {
            fast_segment: seg,
            slow_segment: seg,
            fast_beam: beam,
            slow_beam: beam,
            ..DecodeConfig::default()
        };
        let mut src = TableSource::new(&m, 0, 0, &cfg).map_err(err)?;
        let out = parallel_decode(&mut src, &m, &cfg, SpaceMode::Shared).map_err(err)?;
        let mut space = SearchSpace::new();
        let plain = beam_search(
            &TableModel::encoder_rows(0, 0, frames),
            0,
            &BeamSet::new(beam),
            beam,
            DEFAULT_MAX_SYMBOLS_PER_FRAME,
            &mut space,
            &m,
        )
        .map_err(err)?;
        let want = best_hypothesis(&plain).map_err(err)?;
        ensure(out.final_hyp.tokens == want.tokens, || {
            format!("instance {i}: parallel {:?} vs beam search {:?}", out.final_hyp.tokens, want.tokens)
        })?;
    }
    Ok(format!("{n}/{n} token-identical"))
}

/// Every sequence of up to `max_len` labels over `labels` symbols.
fn all_sequences(labels: usize, max_len: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for k in 1..=labels {
                let mut q: Vec<TokenId> = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn search_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (frames, max_len, labels) = (3, 2, 2);
    let seqs = all_sequences(labels, max_len);
    let beam = 16;
    ensure(beam >= seqs.len(), || "beam below prefix count".into())?;
    let n = 100;
    let mut hits = 0;
    let mut misses = Vec::new();
    for i in 0..n {
        let m = TableModel::random(&mut rng, labels + 1, max_len, frames, 2, 2.0);
        let cfg = DecodeConfig {
            fast_segment: 1,
            slow_segment: frames,
            fast_beam: beam,
            slow_beam: beam,
            ..DecodeConfig::default()
        };
        let mut src = TableSource::new(&m, 0, 1, &cfg).map_err(err)?;
        let out = parallel_decode(&mut src, &m, &cfg, SpaceMode::Shared).map_err(err)?;
        let mut best: Option<(f64, &Vec<TokenId>)> = None;
        for s in &seqs {
            let lp = -enumerated_loss(&m.lattice(1, s).map_err(err)?, None);
            let score = lp / s.len().max(1) as f64;
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, s));
            }
        }
        let (score, want) = best.expect("non-empty");
        if &out.final_hyp.tokens == want && (out.final_hyp.normalized_score() - score).abs() <= 1e-9 {
            hits += 1;
        } else {
            misses.push(i);
        }
    }
    ensure(hits == n, || format!("{hits}/{n} match the exhaustive argmax; misses {misses:?}"))?;
    Ok(format!("{hits}/{n} match the exhaustive argmax ({} sequences, beam {beam})", seqs.len()))
}

fn correction_behavior() -> Outcome {
    let script = |at: &[(usize, TokenId)]| {
        let mut s = vec![Vec::new(); 8];
        for &(f, k) in at {
            s[f].push(k);
        }
        s
    };
    let flipped = ScriptedUtterance {
        id: "flip".into(),
        fast: script(&[(1, 1), (5, 2)]),
        slow: script(&[(1, 1), (5, 3)]),
        reference: vec![1, 3],
        alignment_ms: vec![40.0, 200.0],
    };
    let steady = ScriptedUtterance {
        id: "steady".into(),
        fast: script(&[(0, 2), (3, 3), (6, 4)]),
        slow: script(&[(0, 2), (3, 3), (6, 4)]),
        reference: vec![2, 3, 4],
        alignment_ms: vec![0.0, 120.0, 240.0],
    };
    let dir = scratch_dir("correction");
    let cfg_path = write_scripted_corpus(&dir, &[flipped, steady], 4, 8).map_err(err)?;
    let cfg = RunConfig::load(&cfg_path).map_err(err)?;
    let model = load_model(&cfg).map_err(err)?;
    let manifest = load_manifest(&dir.join("manifest.jsonl")).map_err(err)?;
    let run = run_manifest(&cfg, &model, &manifest, 1).map_err(err)?;
    let _ = std::fs::remove_dir_all(&dir);

    let rec = &run.records[0];
    let boundary_ms = 8.0 * 40.0;
    let at_boundary: Vec<&TimelineEntry> = rec.timeline.iter().filter(|e| e.audio_ms == boundary_ms).collect();
    let fast_pos = at_boundary.iter().position(|e| e.source == Pass::Fast && e.text == "w0 w1");
    let slow_pos = at_boundary.iter().position(|e| e.source == Pass::Slow && e.text == "w0 w2");
    ensure(matches!((fast_pos, slow_pos), (Some(f), Some(s)) if f < s), || {
        format!("timeline {:?}", rec.timeline)
    })?;
    let earlier_slow = rec.timeline.iter().any(|e| e.source == Pass::Slow && e.audio_ms < boundary_ms);
    ensure(!earlier_slow, || "slow record before the slow boundary".into())?;
    ensure(rec.final_text == "w0 w2" && rec.fast_final_text == "w0 w1", || format!("record {rec:?}"))?;

    // flip: 1 substitution of 2 words; steady: 0 of 3
    let hand = 1.0 / 5.0 - 0.0 / 5.0;
    ensure(run.report.cr == hand, || format!("CR {} vs hand {hand}", run.report.cr))?;
    Ok(format!("fast \"w0 w1\" then slow \"w0 w2\" at {boundary_ms} ms; CR {} == {hand}", run.report.cr))
}

fn shared_space() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 100;
    let mut strict = 0;
    let (mut shared_total, mut isolated_total) = (0u64, 0u64);
    for i in 0..n {
        let frames = rng.random_range(4..=12);
        let output_dim = rng.random_range(2..=4);
        let m = TableModel::random(&mut rng, output_dim, 4, frames, 2, 2.0);
        let fast_segment = rng.random_range(1..=3);
        let cfg = DecodeConfig {
            fast_segment,
            slow_segment: fast_segment * rng.random_range(1..=3),
            fast_beam: rng.random_range(1..=4),
            slow_beam: rng.random_range(1..=4),
            ..DecodeConfig::default()
        };
        let run = |mode| -> Result<_, String> {
            let mut src = TableSource::new(&m, 0, 1, &cfg).map_err(err)?;
            parallel_decode(&mut src, &m, &cfg, mode).map_err(err)
        };
        let s = run(SpaceMode::Shared)?;
        let iso = run(SpaceMode::Isolated)?;
        ensure(s.final_hyp.tokens == iso.final_hyp.tokens, || format!("instance {i}: modes decode differently"))?;
        let (a, b) = (s.counters.predictor_evals, iso.counters.predictor_evals);
        ensure(a <= b, || format!("instance {i}: shared {a} > isolated {b}"))?;
        strict += usize::from(a < b);
        shared_total += a;
        isolated_total += b;
    }
    ensure(strict >= 1, || "never strictly smaller".into())?;
    Ok(format!(
        "shared <= isolated on {n}/{n}, strictly smaller on {strict}; totals {shared_total} vs {isolated_total}"
    ))
}

/// Table whose distributions favour the scripted token by `bias` nats over
/// noise in `[-noise, noise]`.
fn biased_table<R: Rng>(rng: &mut R, output_dim: usize, script: &[Vec<TokenId>], biases: [f64; 2], noise: f64) -> TableModel {
    let flat: Vec<TokenId> = script.iter().flatten().copied().collect();
    let mut ends = Vec::new();
    let mut acc = 0;
    for e in script {
        acc += e.len();
        ends.push(acc);
    }
    TableModel::from_fn(output_dim, flat.len() + 2, script.len(), 2, |tb, t, prefix| {
        let mut logits: Vec<f64> = (0..output_dim).map(|_| rng.random_range(-noise..noise)).collect();
        let u = prefix.len();
        let want = if u < ends[t] && prefix == &flat[..u] { flat[u] } else { 0 };
        logits[want] += biases[tb];
        logits
    })
}

fn beam_tradeoff() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (labels, frames, n) = (3, 12, 30);
    let mut errors = [0usize; 2];
    let mut fast_errors = [0usize; 2];
    let mut words = 0;
    let mut worse = Vec::new();
    for i in 0..n {
        let mut script = vec![Vec::new(); frames];
        for _ in 0..rng.random_range(1..=4) {
            let f = rng.random_range(0..frames);
            script[f].push(rng.random_range(1..=labels));
        }
        let reference: Vec<TokenId> = script.iter().flatten().copied().collect();
        let m = biased_table(&mut rng, labels + 1, &script, [1.0, 2.5], 1.5);
        words += reference.len();
        let mut evals = [0u64; 2];
        for (k, beam) in [2, 10].into_iter().enumerate() {
            let cfg = DecodeConfig {
                fast_segment: 4,
                slow_segment: 8,
                fast_beam: beam,
                slow_beam: 4,
                ..DecodeConfig::default()
            };
            let mut src = TableSource::new(&m, 0, 1, &cfg).map_err(err)?;
            let out = parallel_decode(&mut src, &m, &cfg, SpaceMode::Shared).map_err(err)?;
            evals[k] = out.counters.predictor_evals + out.counters.joiner_evals;
            errors[k] += wer(&reference, &out.final_hyp.tokens).errors();
            fast_errors[k] += wer(&reference, &out.fast_final.tokens).errors();
        }
        if evals[0] > evals[1] {
            worse.push((i, evals[0], evals[1]));
        }
    }
    let rate = |e: usize| e as f64 / words as f64;
    ensure(worse.is_empty(), || format!("beam 2 used more evaluations on {worse:?}"))?;
    ensure(rate(errors[0]) >= rate(errors[1]), || {
        format!("WER beam 2 {:.4} < beam 10 {:.4}", rate(errors[0]), rate(errors[1]))
    })?;
    Ok(format!(
        "evals(2) <= evals(10) on {n}/{n}; final WER {:.4} vs {:.4}; fast-pass WER {:.4} vs {:.4}",
        rate(errors[0]),
        rate(errors[1]),
        rate(fast_errors[0]),
        rate(fast_errors[1])
    ))
}

fn layer_sharing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let base = EncoderConfig {
        input_dim: 6,
        num_layers: 20,
        model_dim: 16,
        num_heads: 2,
        ffn_dim: 32,
        segment_size: 4,
        right_context: 1,
        max_history: None,
        shared_layer_range: None,
    };
    let shared_cfg = EncoderConfig {
        shared_layer_range: Some((2, 14)),
        ..base.clone()
    };
    let shared = EncoderWeights::random(&shared_cfg, &mut rng).map_err(err)?;
    let unshared = EncoderWeights::random(&base, &mut rng).map_err(err)?;
    ensure(shared.distinct_layer_blocks() == 8 && shared_cfg.distinct_layer_blocks() == 8, || {
        format!("{} distinct blocks", shared.distinct_layer_blocks())
    })?;
    let (s, u) = (shared.layer_parameter_count(), unshared.layer_parameter_count());
    ensure(s * 20 == u * 8, || format!("layer parameters {s} vs {u}"))?;
    let x = random_frames(&mut rng, 23, 6);
    let gap = streaming_gap(&shared, &x)?;
    ensure(gap <= 1e-5, || format!("streaming gap {gap:e}"))?;
    Ok(format!("8 blocks, layer parameters {s}/{u} = 8/20, streaming gap {gap:.2e}"))
}

fn edit_distance(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let (x, xs) = a.split_last().expect("non-empty");
    let (y, ys) = b.split_last().expect("non-empty");
    let d = (edit_distance(xs, ys, memo) + usize::from(x != y))
        .min(edit_distance(xs, b, memo) + 1)
        .min(edit_distance(a, ys, memo) + 1);
    memo.insert((a.len(), b.len()), d);
    d
}

/// Smallest value with at least `pct`% of the values at or below it.
fn rank_statistic(values: &[f64], pct: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    *v.iter()
        .enumerate()
        .find(|(i, _)| (i + 1) * 100 >= pct * n)
        .expect("non-empty")
        .1
}

fn record_for(id: &str, words: &[usize], emit_ms: &[f64], vocab: &Vocabulary) -> DecodeRecord {
    let ids: Vec<TokenId> = words.iter().map(|w| w + 1).collect();
    DecodeRecord {
        id: id.into(),
        final_text: vocab.detokenize(&ids),
        fast_final_text: vocab.detokenize(&ids),
        tokens: ids
            .iter()
            .zip(emit_ms)
            .map(|(&k, &ms)| TokenEmission {
                piece: vocab.piece(k).expect("in vocab").to_string(),
                emit_frame: (ms / 40.0) as usize,
                emit_ms: ms,
            })
            .collect(),
        timeline: Vec::new(),
        counters: RecordCounters {
            predictor_evals: 0,
            joiner_evals: 0,
        },
    }
}

fn write_neural_corpus(dir: &Path, rng: &mut ChaCha8Rng) -> Result<PathBuf, String> {
    let labels = 5;
    let vocab = Vocabulary::synthetic(labels);
    let cfg = RunConfig::example(3, labels);
    std::fs::create_dir_all(dir.join("features")).map_err(err)?;
    let mut entries = Vec::new();
    for i in 0..8 {
        let id = format!("n{i:02}");
        let frames = rng.random_range(20..=90);
        let path = dir.join("features").join(format!("{id}.ftrs"));
        write_features(&path, &FeatureMatrix::new(random_frames(rng, frames, 3), 10.0)).map_err(err)?;
        let words = rng.random_range(1..=4);
        let ids: Vec<TokenId> = (0..words).map(|_| rng.random_range(1..=labels)).collect();
        entries.push(ManifestEntry {
            id,
            features: PathBuf::from("features").join(path.file_name().expect("file")),
            reference: vocab.detokenize(&ids),
            alignment_ms: Some((0..words).map(|w| 60.0 * w as f64).collect()),
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &entries).map_err(err)?;
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).map_err(err)?).map_err(err)?;
    Ok(cfg_path)
}

fn eval_bytes(config: &Path, manifest: &Path, out: &Path, threads: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_fastslow"))
        .args(["eval", "--config"])
        .arg(config)
        .arg("--manifest")
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .status()
        .map_err(err)?;
    ensure(status.success(), || format!("eval exited with {status}"))?;
    std::fs::read(out).map_err(err)
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1000;
    for i in 0..n {
        let r: Vec<u8> = (0..rng.random_range(1..=12)).map(|_| rng.random_range(0..4)).collect();
        let h: Vec<u8> = (0..rng.random_range(0..=12)).map(|_| rng.random_range(0..4)).collect();
        let got = wer(&r, &h);
        let d = edit_distance(&r, &h, &mut HashMap::new());
        ensure(got.errors() == d && got.rate == d as f64 / r.len() as f64, || {
            format!("pair {i}: {r:?} / {h:?}: {} errors vs oracle {d}", got.errors())
        })?;
        ensure(got.substitutions + got.deletions + got.matches.len() == r.len(), || format!("pair {i}: counts"))?;
    }

    let vocab = Vocabulary::synthetic(6);
    let mut refs = Vec::new();
    let mut records = Vec::new();
    let mut aligns = Vec::new();
    let mut pooled = Vec::new();
    for u in 0..37 {
        let words: Vec<usize> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..6)).collect();
        let mut end = 0.0;
        let align: Vec<f64> = words
            .iter()
            .map(|_| {
                end += rng.random_range(1..10) as f64 * 40.0;
                end
            })
            .collect();
        let emit: Vec<f64> = align.iter().map(|a| a + rng.random_range(0..30) as f64 * 40.0).collect();
        pooled.extend(emit.iter().zip(&align).map(|(e, a)| e - a));
        let ids: Vec<TokenId> = words.iter().map(|w| w + 1).collect();
        refs.push(vocab.detokenize(&ids));
        records.push(record_for(&format!("u{u}"), &words, &emit, &vocab));
        aligns.push(align);
    }
    let evals: Vec<UtteranceEval<'_>> = records
        .iter()
        .zip(&refs)
        .zip(&aligns)
        .map(|((rec, r), a)| UtteranceEval {
            id: &rec.id,
            reference: r,
            alignment_ms: Some(a),
            record: rec,
        })
        .collect();
    let report = evaluate(&evals, Vec::new()).map_err(err)?;
    let want = rank_statistic(&pooled, 99);
    ensure(report.ed_p99 == Some(want) && nearest_rank(&pooled, 99) == Some(want), || {
        format!("p99 {:?} vs nearest rank {want}", report.ed_p99)
    })?;
    ensure(report.delay_count == pooled.len(), || "delay count".into())?;

    let dir = scratch_dir("determinism");
    let scripted = dir.join("scripted");
    let utts = scripted_corpus(&mut rng, 12, 4);
    let scripted_cfg = write_scripted_corpus(&scripted, &utts, 4, 8).map_err(err)?;
    let neural = dir.join("neural");
    let neural_cfg = write_neural_corpus(&neural, &mut rng)?;
    for (cfg, root) in [(&scripted_cfg, &scripted), (&neural_cfg, &neural)] {
        let manifest = root.join("manifest.jsonl");
        let one = eval_bytes(cfg, &manifest, &root.join("report1.json"), 1)?;
        for threads in [2, 4] {
            let many = eval_bytes(cfg, &manifest, &root.join(format!("report{threads}.json")), threads)?;
            ensure(one == many, || format!("{}: report differs at {threads} threads", root.display()))?;
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "{n} WER pairs match; p99 {want} over {} pooled delays; eval byte-identical at 1/2/4 threads",
        pooled.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("loss oracle", loss_oracle),
        ("gradient checks", gradient_checks),
        ("cascade loss linearity", cascade_linearity),
        ("streaming/offline encoder equivalence", streaming_equivalence),
        ("parallel search degenerate equivalence", degenerate_equivalence),
        ("search oracle", search_oracle),
        ("correction behavior", correction_behavior),
        ("shared search space efficiency", shared_space),
        ("beam size / compute tradeoff", beam_tradeoff),
        ("layer sharing", layer_sharing),
        ("metrics", metrics),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
