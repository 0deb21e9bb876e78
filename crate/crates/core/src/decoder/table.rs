//! Lookup-table stand-in for the predictor and joiner.
//!
//! The distribution at each (table, frame, prefix) is stored explicitly, so
//! exhaustive search oracles can be computed for tiny instances. Encoder
//! rows handed to a [`TableModel`] are `[frame, table]` pairs, and the
//! predictor output is the prefix id. Prefixes of length `max_len` can only
//! emit blank, so every decodable sequence has a lattice.

use std::collections::HashMap;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use super::model::JointModel;
use crate::error::{Error, Result};
use crate::numerics::log_sum_exp_unchecked;
use crate::transducer::{LossLattice, TokenId};

const OVERFLOW: f32 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    output_dim: usize,
    blank: TokenId,
    max_len: usize,
    frames: usize,
    /// `dist[table][frame][prefix_id]` is a normalized log distribution.
    #[serde(with = "log_table")]
    dist: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(skip)]
    prefix_ids: HashMap<Vec<TokenId>, usize>,
    #[serde(skip)]
    prefixes: Vec<Vec<TokenId>>,
}

fn enumerate_prefixes(output_dim: usize, blank: TokenId, max_len: usize) -> Vec<Vec<TokenId>> {
    let labels: Vec<TokenId> = (0..output_dim).filter(|&k| k != blank).collect();
    let mut all = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &layer {
            for &k in &labels {
                let mut q = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    all
}

fn blank_only(output_dim: usize, blank: TokenId) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; output_dim];
    out[blank] = 0.0;
    out
}

fn normalize(logits: &[f64]) -> Vec<f64> {
    let z = log_sum_exp_unchecked(logits);
    logits.iter().map(|l| l - z).collect()
}

impl TableModel {
    /// Builds a table from unnormalized log-scores `f(table, frame, prefix)`;
    /// `-inf` entries are allowed.
    pub fn from_fn(
        output_dim: usize,
        max_len: usize,
        frames: usize,
        tables: usize,
        mut f: impl FnMut(usize, usize, &[TokenId]) -> Vec<f64>,
    ) -> Self {
        let blank = 0;
        let prefixes = enumerate_prefixes(output_dim, blank, max_len);
        let dist = (0..tables)
            .map(|tb| {
                (0..frames)
                    .map(|t| {
                        prefixes
                            .iter()
                            .map(|p| {
                                if p.len() == max_len {
                                    blank_only(output_dim, blank)
                                } else {
                                    normalize(&f(tb, t, p))
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut m = Self {
            output_dim,
            blank,
            max_len,
            frames,
            dist,
            prefix_ids: HashMap::new(),
            prefixes: Vec::new(),
        };
        m.index_prefixes();
        m
    }

    fn index_prefixes(&mut self) {
        self.prefixes = enumerate_prefixes(self.output_dim, self.blank, self.max_len);
        self.prefix_ids = self.prefixes.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
    }

    /// Checks shapes after deserialization and rebuilds the prefix index.
    pub fn finish_load(mut self) -> Result<Self> {
        self.index_prefixes();
        let n = self.prefixes.len();
        let ok = self.blank < self.output_dim
            && self.dist.iter().all(|tb| {
                tb.len() == self.frames
                    && tb.iter().all(|fr| fr.len() == n && fr.iter().all(|d| d.len() == self.output_dim))
            });
        if !ok {
            return Err(Error::Fixture("table model shape does not match its header".into()));
        }
        Ok(self)
    }

    /// Every distribution uniform.
    pub fn uniform(output_dim: usize, max_len: usize, frames: usize, tables: usize) -> Self {
        Self::from_fn(output_dim, max_len, frames, tables, |_, _, _| vec![0.0; output_dim])
    }

    /// Independent random logits in `[-scale, scale]`.
    pub fn random<R: Rng>(rng: &mut R, output_dim: usize, max_len: usize, frames: usize, tables: usize, scale: f64) -> Self {
        Self::from_fn(output_dim, max_len, frames, tables, |_, _, _| {
            (0..output_dim).map(|_| rng.random_range(-scale..scale)).collect()
        })
    }

    /// Probability-one path that emits `emit[t]` tokens at frame `t`.
    pub fn delta(output_dim: usize, emit: &[Vec<TokenId>]) -> Self {
        Self::delta_tables(output_dim, &[emit.to_vec()])
    }

    /// One probability-one table per script. The next token is chosen by the
    /// prefix length alone, so a table keeps following its script on top of
    /// a prefix produced by another table.
    pub fn delta_tables(output_dim: usize, scripts: &[Vec<Vec<TokenId>>]) -> Self {
        let frames = scripts.first().map_or(0, Vec::len);
        assert!(scripts.iter().all(|s| s.len() == frames), "scripts must cover the same frames");
        let max_len = scripts.iter().map(|s| s.iter().map(Vec::len).sum()).max().unwrap_or(0);
        let flat: Vec<Vec<TokenId>> = scripts.iter().map(|s| s.iter().flatten().copied().collect()).collect();
        let boundaries: Vec<Vec<usize>> = scripts
            .iter()
            .map(|s| {
                s.iter()
                    .scan(0, |acc, e| {
                        *acc += e.len();
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Self::from_fn(output_dim, max_len, frames, scripts.len(), |tb, t, prefix| {
            let mut out = vec![f64::NEG_INFINITY; output_dim];
            let u = prefix.len();
            if u < boundaries[tb][t] {
                out[flat[tb][u]] = 0.0;
            } else {
                out[0] = 0.0;
            }
            out
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn tables(&self) -> usize {
        self.dist.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn prefixes(&self) -> &[Vec<TokenId>] {
        &self.prefixes
    }

    pub fn distribution(&self, table: usize, frame: usize, prefix: &[TokenId]) -> Option<&[f64]> {
        let id = *self.prefix_ids.get(prefix)?;
        Some(&self.dist[table][frame][id])
    }

    pub fn set_distribution(&mut self, table: usize, frame: usize, prefix: &[TokenId], logits: &[f64]) -> Result<()> {
        if prefix.len() >= self.max_len {
            return Err(Error::Fixture(format!("prefix {prefix:?} must be shorter than max_len {}", self.max_len)));
        }
        let id = *self.prefix_ids.get(prefix).ok_or_else(|| Error::Fixture(format!("unknown prefix {prefix:?}")))?;
        self.dist[table][frame][id] = normalize(logits);
        Ok(())
    }

    /// Encoder rows `[frame, table]` for frames `start..end`.
    pub fn encoder_rows(table: usize, start: usize, end: usize) -> crate::numerics::Matrix {
        let data = (start..end).flat_map(|t| [t as f32, table as f32]).collect();
        crate::numerics::Matrix::new(end - start, 2, data).expect("sized by construction")
    }

    /// Alignment lattice of `tokens` under one table.
    pub fn lattice(&self, table: usize, tokens: &[TokenId]) -> Result<LossLattice> {
        if tokens.len() > self.max_len {
            return Err(Error::Fixture("sequence longer than max_len".into()));
        }
        let mut lp = Vec::with_capacity(self.frames * (tokens.len() + 1) * self.output_dim);
        for t in 0..self.frames {
            for u in 0..=tokens.len() {
                lp.extend_from_slice(self.distribution(table, t, &tokens[..u]).expect("within max_len"));
            }
        }
        LossLattice::new(self.frames, tokens.to_vec(), self.output_dim, self.blank, lp)
    }
}

impl JointModel for TableModel {
    type State = Vec<TokenId>;

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn blank_id(&self) -> TokenId {
        self.blank
    }

    fn start_state(&self) -> Vec<TokenId> {
        Vec::new()
    }

    fn predict(&self, token: Option<TokenId>, state: &Vec<TokenId>) -> Result<(Vec<f32>, Vec<TokenId>)> {
        let mut prefix = state.clone();
        if let Some(t) = token {
            if t >= self.output_dim || t == self.blank {
                return Err(Error::InvalidToken {
                    token: t,
                    dim: self.output_dim,
                });
            }
            prefix.push(t);
        }
        let id = self.prefix_ids.get(&prefix).map_or(OVERFLOW, |&i| i as f32);
        Ok((vec![id], prefix))
    }

    fn joint(&self, enc_frame: &[f32], prediction: &[f32]) -> Result<Vec<f64>> {
        let (&[frame, table], &[pid]) = (enc_frame, prediction) else {
            return Err(Error::shape("TableModel::joint", "expected [frame, table] and [prefix id]"));
        };
        let (frame, table) = (frame as usize, table as usize);
        if table >= self.dist.len() || frame >= self.frames {
            return Err(Error::shape(
                "TableModel::joint",
                format!("frame {frame} table {table} outside {}x{}", self.frames, self.dist.len()),
            ));
        }
        if pid == OVERFLOW {
            return Ok(blank_only(self.output_dim, self.blank));
        }
        Ok(self.dist[table][frame][pid as usize].clone())
    }
}

/// JSON has no infinities; impossible entries are written as `null`.
mod log_table {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Table = Vec<Vec<Vec<Vec<f64>>>>;

    pub fn serialize<S: Serializer>(t: &Table, s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Vec<Vec<Vec<Option<f64>>>>> = t
            .iter()
            .map(|a| {
                a.iter()
                    .map(|b| b.iter().map(|c| c.iter().map(|&x| x.is_finite().then_some(x)).collect()).collect())
                    .collect()
            })
            .collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Table, D::Error> {
        let opt = Vec::<Vec<Vec<Vec<Option<f64>>>>>::deserialize(d)?;
        Ok(opt
            .into_iter()
            .map(|a| {
                a.into_iter()
                    .map(|b| {
                        b.into_iter()
                            .map(|c| c.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect())
    }
}
