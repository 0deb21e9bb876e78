//! Word error rate, emission delay, correction rate and real-time factor.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decoder::DecodeRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerResult {
    /// Edit distance over the reference length (over 1 for an empty reference).
    pub rate: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_len: usize,
    /// Set when the reference was empty and `rate` counts insertions.
    pub empty_reference: bool,
    /// `(reference index, hypothesis index)` of every correct word.
    #[serde(skip)]
    pub matches: Vec<(usize, usize)>,
}

impl WerResult {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Levenshtein alignment with unit costs. The traceback prefers, in order,
/// the diagonal (match or substitution), a deletion, then an insertion.
pub fn wer<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> WerResult {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let (mut s, mut ins, mut del) = (0, 0, 0);
    let mut matches = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                if same {
                    matches.push((i - 1, j - 1));
                } else {
                    s += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    matches.reverse();

    let errors = s + ins + del;
    WerResult {
        rate: errors as f64 / n.max(1) as f64,
        substitutions: s,
        insertions: ins,
        deletions: del,
        reference_len: n,
        empty_reference: n == 0,
        matches,
    }
}

/// Total errors over total reference words, keyed by utterance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusWer {
    pub rate: f64,
    pub errors: usize,
    pub reference_words: usize,
    pub ids: BTreeSet<String>,
}

pub fn corpus_wer<'a>(items: impl IntoIterator<Item = (&'a str, &'a WerResult)>) -> CorpusWer {
    let mut errors = 0;
    let mut words = 0;
    let mut ids = BTreeSet::new();
    for (id, r) in items {
        errors += r.errors();
        words += r.reference_len;
        ids.insert(id.to_string());
    }
    CorpusWer {
        rate: if words == 0 { errors as f64 } else { errors as f64 / words as f64 },
        errors,
        reference_words: words,
        ids,
    }
}

/// `WER_fast - WER_slow`; negative when the slow pass is worse.
pub fn correction_rate(fast: &CorpusWer, slow: &CorpusWer) -> Result<f64> {
    if fast.ids != slow.ids {
        return Err(Error::MismatchedSets(format!(
            "fast covers {} utterances, slow covers {}",
            fast.ids.len(),
            slow.ids.len()
        )));
    }
    Ok(fast.rate - slow.rate)
}

/// Delay of every correctly recognized word: emit time minus the time the
/// reference word ended.
pub fn emission_delays(word_emit_ms: &[f64], reference_end_ms: &[f64], matches: &[(usize, usize)]) -> Result<Vec<f64>> {
    matches
        .iter()
        .map(|&(r, h)| {
            let (Some(end), Some(emit)) = (reference_end_ms.get(r), word_emit_ms.get(h)) else {
                return Err(Error::MismatchedSets(format!("match ({r}, {h}) outside alignment or hypothesis")));
            };
            Ok(emit - end)
        })
        .collect()
}

/// Nearest-rank percentile: the `ceil(pct/100 * n)`-th smallest value.
pub fn nearest_rank(values: &[f64], pct: u32) -> Option<f64> {
    if values.is_empty() || pct == 0 || pct > 100 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100);
    Some(sorted[rank.max(1) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn rtf(wall_ms: f64, audio_ms: f64) -> Result<f64> {
    if audio_ms <= 0.0 {
        return Err(Error::ZeroAudio);
    }
    Ok(wall_ms / audio_ms)
}

/// `sum(wall) / sum(audio)` over `(wall_ms, audio_ms)` pairs.
pub fn pooled_rtf(items: &[(f64, f64)]) -> Result<f64> {
    let wall: f64 = items.iter().map(|p| p.0).sum();
    let audio: f64 = items.iter().map(|p| p.1).sum();
    rtf(wall, audio)
}

/// One utterance as seen by the evaluator.
#[derive(Debug, Clone)]
pub struct UtteranceEval<'a> {
    pub id: &'a str,
    pub reference: &'a str,
    /// End time of each reference word.
    pub alignment_ms: Option<&'a [f64]>,
    pub record: &'a DecodeRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub wer: WerResult,
    pub wer_fast: WerResult,
    /// Empty when the utterance has no alignment.
    pub delays_ms: Vec<f64>,
    pub has_alignment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedUtterance {
    pub id: String,
    pub error: String,
}

/// Corpus-level results. Everything here is a function of the inputs;
/// wall-clock measurements live in [`TimingReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub utterances_decoded: usize,
    pub wer: f64,
    pub wer_fast: f64,
    pub cr: f64,
    pub ed_avg: Option<f64>,
    pub ed_p99: Option<f64>,
    pub delay_count: usize,
    pub missing_alignment: usize,
    pub empty_references: usize,
    pub predictor_evals: u64,
    pub joiner_evals: u64,
    pub per_utterance: Vec<UtteranceMetrics>,
    pub failed: Vec<FailedUtterance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceTiming {
    pub id: String,
    pub wall_ms: f64,
    pub audio_ms: f64,
    pub rtf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rtf: Option<f64>,
    pub per_utterance: Vec<UtteranceTiming>,
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Scores decoded utterances. Delays are pooled over the corpus.
pub fn evaluate(utts: &[UtteranceEval<'_>], failed: Vec<FailedUtterance>) -> Result<MetricsReport> {
    let mut per = Vec::with_capacity(utts.len());
    let mut pooled = Vec::new();
    let mut missing = 0;
    let (mut pred, mut join) = (0, 0);
    for u in utts {
        let reference = words(u.reference);
        let hyp = words(&u.record.final_text);
        let fast = words(&u.record.fast_final_text);
        let w = wer(&reference, &hyp);
        let wf = wer(&reference, &fast);
        let delays = match u.alignment_ms {
            Some(align) => {
                if align.len() != reference.len() {
                    return Err(Error::MismatchedSets(format!(
                        "{}: {} alignment entries for {} reference words",
                        u.id,
                        align.len(),
                        reference.len()
                    )));
                }
                emission_delays(&u.record.word_emit_ms(), align, &w.matches)?
            }
            None => {
                missing += 1;
                Vec::new()
            }
        };
        pooled.extend_from_slice(&delays);
        pred += u.record.counters.predictor_evals;
        join += u.record.counters.joiner_evals;
        per.push(UtteranceMetrics {
            id: u.id.to_string(),
            wer: w,
            wer_fast: wf,
            delays_ms: delays,
            has_alignment: u.alignment_ms.is_some(),
        });
    }
    let slow = corpus_wer(per.iter().map(|p| (p.id.as_str(), &p.wer)));
    let fast = corpus_wer(per.iter().map(|p| (p.id.as_str(), &p.wer_fast)));
    Ok(MetricsReport {
        utterances_decoded: per.len(),
        wer: slow.rate,
        wer_fast: fast.rate,
        cr: correction_rate(&fast, &slow)?,
        ed_avg: mean(&pooled),
        ed_p99: nearest_rank(&pooled, 99),
        delay_count: pooled.len(),
        missing_alignment: missing,
        empty_references: per.iter().filter(|p| p.wer.empty_reference).count(),
        predictor_evals: pred,
        joiner_evals: join,
        per_utterance: per,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn wer_examples() {
        let r = wer(&w("a b c"), &w("a b c"));
        assert_eq!(r.rate, 0.0);
        let r = wer(&w("a b c"), &w("a x c"));
        assert!((r.rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.substitutions, r.insertions, r.deletions), (1, 0, 0));
        assert_eq!(r.matches, vec![(0, 0), (2, 2)]);
        let r = wer(&w("a"), &w(""));
        assert_eq!((r.rate, r.deletions), (1.0, 1));
        let r = wer(&w(""), &w("x y"));
        assert!(r.empty_reference);
        assert_eq!((r.rate, r.insertions), (2.0, 2));
    }

    #[test]
    fn traceback_prefers_substitution_then_deletion() {
        // "a b" vs "c": one sub + one del either way; substitution is taken
        // at the last position
        let r = wer(&w("a b"), &w("c"));
        assert_eq!((r.substitutions, r.deletions), (1, 1));
        let r = wer(&w("a b"), &w("b"));
        assert_eq!(r.deletions, 1);
        assert_eq!(r.matches, vec![(1, 0)]);
    }

    #[test]
    fn delay_examples() {
        let d = emission_delays(&[1500.0], &[1200.0], &[(0, 0)]).unwrap();
        assert_eq!(d, vec![300.0]);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 99), Some(99.0));
        assert_eq!(nearest_rank(&[5.0], 99), Some(5.0));
        assert_eq!(nearest_rank(&[], 99), None);
    }

    #[test]
    fn correction_rate_cases() {
        let mk = |rate: f64, ids: &[&str]| CorpusWer {
            rate,
            errors: 0,
            reference_words: 0,
            ids: ids.iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(correction_rate(&mk(0.2, &["a"]), &mk(0.2, &["a"])).unwrap(), 0.0);
        let cr = correction_rate(&mk(0.0896, &["a"]), &mk(0.0715, &["a"])).unwrap();
        assert!((cr - 0.0181).abs() < 1e-12);
        assert!(correction_rate(&mk(0.1, &["a"]), &mk(0.2, &["a"])).unwrap() < 0.0);
        assert!(correction_rate(&mk(0.1, &["a"]), &mk(0.1, &["b"])).is_err());
    }

    #[test]
    fn rtf_cases() {
        assert_eq!(rtf(500.0, 1000.0).unwrap(), 0.5);
        assert!(matches!(rtf(1.0, 0.0), Err(Error::ZeroAudio)));
        // pooled, not the mean of 0.5 and 2.0
        assert_eq!(pooled_rtf(&[(500.0, 1000.0), (200.0, 100.0)]).unwrap(), 700.0 / 1100.0);
    }

    proptest! {
        #[test]
        fn edit_distance_symmetric(a in prop::collection::vec(0u8..4, 0..8), b in prop::collection::vec(0u8..4, 0..8)) {
            prop_assert_eq!(wer(&a, &b).errors(), wer(&b, &a).errors());
        }

        #[test]
        fn edit_distance_triangle(
            a in prop::collection::vec(0u8..3, 0..7),
            b in prop::collection::vec(0u8..3, 0..7),
            c in prop::collection::vec(0u8..3, 0..7),
        ) {
            prop_assert!(wer(&a, &c).errors() <= wer(&a, &b).errors() + wer(&b, &c).errors());
        }

        #[test]
        fn matches_are_equal_words(a in prop::collection::vec(0u8..3, 0..8), b in prop::collection::vec(0u8..3, 0..8)) {
            let r = wer(&a, &b);
            for &(i, j) in &r.matches {
                prop_assert_eq!(a[i], b[j]);
            }
            prop_assert_eq!(r.matches.len() + r.substitutions + r.deletions, a.len());
            prop_assert_eq!(r.matches.len() + r.substitutions + r.insertions, b.len());
        }
    }
}
