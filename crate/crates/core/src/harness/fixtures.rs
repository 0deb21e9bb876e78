//! Generators for oracle fixtures and synthetic corpora.

use std::path::{Path, PathBuf};

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelSource, RunConfig};
use super::features::write_features;
use super::manifest::{write_manifest, ManifestEntry};
use crate::decoder::{DecodeConfig, TableModel};
use crate::encoder::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, Matrix};
use crate::transducer::oracle::enumerated_loss;
use crate::transducer::{LossLattice, TokenId, Vocabulary};

/// Largest lattice the enumeration oracle is asked to handle.
pub const MAX_ORACLE_FRAMES: usize = 4;
pub const MAX_ORACLE_TARGET: usize = 3;
pub const MAX_ORACLE_LABELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSizes {
    pub lattices: usize,
    pub max_frames: usize,
    pub max_target: usize,
    /// Non-blank symbols; the lattice alphabet is this plus blank.
    pub max_labels: usize,
    pub search_tables: usize,
    pub corpus_utterances: usize,
}

impl Default for FixtureSizes {
    fn default() -> Self {
        Self {
            lattices: 50,
            max_frames: MAX_ORACLE_FRAMES,
            max_target: MAX_ORACLE_TARGET,
            max_labels: MAX_ORACLE_LABELS,
            search_tables: 20,
            corpus_utterances: 4,
        }
    }
}

impl FixtureSizes {
    pub fn validate(&self) -> Result<()> {
        let ok = (1..=MAX_ORACLE_FRAMES).contains(&self.max_frames)
            && self.max_target <= MAX_ORACLE_TARGET
            && (1..=MAX_ORACLE_LABELS).contains(&self.max_labels);
        if !ok {
            return Err(Error::Fixture(format!(
                "lattice sizes must satisfy 1 <= T <= {MAX_ORACLE_FRAMES}, U <= {MAX_ORACLE_TARGET}, \
                 1 <= labels <= {MAX_ORACLE_LABELS}; got T {}, U {}, labels {}",
                self.max_frames, self.max_target, self.max_labels
            )));
        }
        Ok(())
    }
}

/// Lattice whose every `(t, u)` row is an independent random distribution.
pub fn random_lattice<R: Rng>(rng: &mut R, frames: usize, target_len: usize, vocab: usize, scale: f64) -> LossLattice {
    let target: Vec<TokenId> = (0..target_len).map(|_| rng.random_range(1..vocab)).collect();
    let mut lp = Vec::with_capacity(frames * (target_len + 1) * vocab);
    for _ in 0..frames * (target_len + 1) {
        let logits: Vec<f64> = (0..vocab).map(|_| rng.random_range(-scale..scale)).collect();
        lp.extend(log_softmax(&logits).expect("finite logits"));
    }
    LossLattice::new(frames, target, vocab, 0, lp).expect("sized by construction")
}

/// One utterance of a correction corpus: per-frame fast and slow scripts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedUtterance {
    pub id: String,
    pub fast: Vec<Vec<TokenId>>,
    pub slow: Vec<Vec<TokenId>>,
    pub reference: Vec<TokenId>,
    /// Reference word end times.
    pub alignment_ms: Vec<f64>,
}

/// Encoder frames per scripted utterance: one fast segment pair, one slow block.
pub const SCRIPT_FRAMES: usize = 8;

/// Decode geometry used by scripted corpora.
pub fn script_decode_config() -> DecodeConfig {
    DecodeConfig {
        fast_segment: 4,
        slow_segment: 8,
        fast_beam: 2,
        slow_beam: 2,
        ..DecodeConfig::default()
    }
}

/// Scripted utterances over `labels` words. The slow script always equals
/// the reference; the fast script substitutes one word of the final fast
/// segment in every other utterance.
pub fn scripted_corpus<R: Rng>(rng: &mut R, utterances: usize, labels: usize) -> Vec<ScriptedUtterance> {
    (0..utterances)
        .map(|i| {
            let mut slow = vec![Vec::new(); SCRIPT_FRAMES];
            let words = rng.random_range(2..=4usize);
            // the last word falls in the final fast segment so a flip lands there
            let last = rng.random_range(4..SCRIPT_FRAMES);
            let mut frames: Vec<usize> = (1..words).map(|_| rng.random_range(0..=last)).collect();
            frames.push(last);
            frames.sort_unstable();
            let mut reference = Vec::new();
            for &f in &frames {
                let w = rng.random_range(1..=labels);
                slow[f].push(w);
                reference.push(w);
            }
            let mut fast = slow.clone();
            if i % 2 == 1 {
                let f = *frames.last().expect("words >= 2");
                let last = fast[f].last_mut().expect("word placed");
                *last = *last % labels + 1;
            }
            let alignment_ms = frames.iter().map(|&f| (f as f64) * 40.0).collect();
            ScriptedUtterance {
                id: format!("utt{i:03}"),
                fast,
                slow,
                reference,
                alignment_ms,
            }
        })
        .collect()
}

/// Writes feature files, tables, manifest and a table-model config for a
/// scripted corpus under `dir`. Returns the config path.
pub fn write_scripted_corpus(dir: &Path, utts: &[ScriptedUtterance], labels: usize, feature_dim: usize) -> Result<PathBuf> {
    let io = |p: &Path, e| Error::io(p, e);
    let tables = dir.join("tables");
    let feats = dir.join("features");
    std::fs::create_dir_all(&tables).map_err(|e| io(&tables, e))?;
    std::fs::create_dir_all(&feats).map_err(|e| io(&feats, e))?;
    let vocab = Vocabulary::synthetic(labels);
    let mut entries = Vec::new();
    for u in utts {
        let table = TableModel::delta_tables(labels + 1, &[u.fast.clone(), u.slow.clone()]);
        let path = tables.join(format!("{}.json", u.id));
        std::fs::write(&path, serde_json::to_string(&table)?).map_err(|e| io(&path, e))?;
        let n = SCRIPT_FRAMES * crate::encoder::DEFAULT_STRIDE;
        let data = (0..n * feature_dim).map(|i| ((i * 7919) % 97) as f32 / 97.0).collect();
        let fpath = feats.join(format!("{}.ftrs", u.id));
        write_features(&fpath, &FeatureMatrix::new(Matrix::new(n, feature_dim, data)?, 10.0))?;
        entries.push(ManifestEntry {
            id: u.id.clone(),
            features: PathBuf::from("features").join(format!("{}.ftrs", u.id)),
            reference: vocab.detokenize(&u.reference),
            alignment_ms: Some(u.alignment_ms.clone()),
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &entries)?;
    let mut cfg = RunConfig::example(feature_dim, labels);
    cfg.decode = script_decode_config();
    cfg.model = ModelSource::Table {
        dir: PathBuf::from("tables"),
        fast_table: 0,
        slow_table: 1,
    };
    let cpath = dir.join("config.json");
    std::fs::write(&cpath, serde_json::to_string_pretty(&cfg)?).map_err(|e| io(&cpath, e))?;
    Ok(cpath)
}

/// Writes `lattices/`, `tables/` and `corpus/` under `out`. The same seed
/// always produces the same bytes.
pub fn gen_fixtures(out: &Path, seed: u64, sizes: &FixtureSizes) -> Result<()> {
    sizes.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat_dir = out.join("lattices");
    std::fs::create_dir_all(&lat_dir).map_err(|e| Error::io(&lat_dir, e))?;
    for i in 0..sizes.lattices {
        let t = rng.random_range(1..=sizes.max_frames);
        let u = rng.random_range(0..=sizes.max_target);
        let v = rng.random_range(2..=sizes.max_labels + 1);
        let lat = random_lattice(&mut rng, t, u, v, 3.0);
        let fx = lat.to_fixture(Some(enumerated_loss(&lat, None)));
        let p = lat_dir.join(format!("lattice_{i:04}.json"));
        std::fs::write(&p, serde_json::to_string(&fx)?).map_err(|e| Error::io(&p, e))?;
    }
    let tab_dir = out.join("tables");
    std::fs::create_dir_all(&tab_dir).map_err(|e| Error::io(&tab_dir, e))?;
    for i in 0..sizes.search_tables {
        let m = TableModel::random(&mut rng, 3, 2, 3, 2, 2.0);
        let p = tab_dir.join(format!("search_{i:04}.json"));
        std::fs::write(&p, serde_json::to_string(&m)?).map_err(|e| Error::io(&p, e))?;
    }
    let utts = scripted_corpus(&mut rng, sizes.corpus_utterances, 4);
    write_scripted_corpus(&out.join("corpus"), &utts, 4, 8)?;
    Ok(())
}

/// Lattice fixtures in `dir`, sorted by file name.
pub fn load_lattice_fixtures(dir: &Path) -> Result<Vec<(PathBuf, crate::transducer::LatticeFixture)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let fx = serde_json::from_str(&text).map_err(|e| Error::Fixture(format!("{}: {e}", p.display())))?;
            Ok((p, fx))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_bounded() {
        assert!(FixtureSizes::default().validate().is_ok());
        let big = FixtureSizes {
            max_frames: 5,
            ..FixtureSizes::default()
        };
        assert!(big.validate().is_err());
        let wide = FixtureSizes {
            max_labels: 4,
            ..FixtureSizes::default()
        };
        assert!(wide.validate().is_err());
    }

    #[test]
    fn scripted_corpus_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let utts = scripted_corpus(&mut rng, 6, 4);
        for (i, u) in utts.iter().enumerate() {
            assert_eq!(u.fast.len(), SCRIPT_FRAMES);
            let flat: Vec<TokenId> = u.slow.iter().flatten().copied().collect();
            assert_eq!(flat, u.reference);
            let fast: Vec<TokenId> = u.fast.iter().flatten().copied().collect();
            assert_eq!(fast != flat, i % 2 == 1);
            assert_eq!(u.alignment_ms.len(), u.reference.len());
        }
    }
}
