use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Marks the start of a word inside a word-piece.
pub const WORD_BOUNDARY: char = '▁';

/// Output alphabet of the joiner; the blank symbol is one of the entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub pieces: Vec<String>,
    pub blank_id: TokenId,
}

impl Vocabulary {
    pub fn new(pieces: Vec<String>, blank_id: TokenId) -> Result<Self> {
        let v = Self { pieces, blank_id };
        v.validate()?;
        Ok(v)
    }

    /// `<blank>` followed by `▁w0`, `▁w1`, ... for `labels` whole words.
    pub fn synthetic(labels: usize) -> Self {
        let mut pieces = vec!["<blank>".to_string()];
        pieces.extend((0..labels).map(|i| format!("{WORD_BOUNDARY}w{i}")));
        Self { pieces, blank_id: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pieces.len() < 2 {
            return Err(Error::Config("vocabulary needs blank plus at least one label".into()));
        }
        if self.blank_id >= self.pieces.len() {
            return Err(Error::Config(format!(
                "blank_id {} outside vocabulary of {}",
                self.blank_id,
                self.pieces.len()
            )));
        }
        Ok(())
    }

    /// Joiner output dimension (labels plus blank).
    pub fn output_dim(&self) -> usize {
        self.pieces.len()
    }

    pub fn piece(&self, id: TokenId) -> Result<&str> {
        self.pieces.get(id).map(String::as_str).ok_or(Error::InvalidToken {
            token: id,
            dim: self.pieces.len(),
        })
    }

    /// Joins pieces into text, turning word-boundary marks into spaces.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut s = String::new();
        for &id in ids {
            if id == self.blank_id {
                continue;
            }
            if let Some(p) = self.pieces.get(id) {
                s.push_str(p);
            }
        }
        s.replace(WORD_BOUNDARY, " ").trim().to_string()
    }

    /// Index of the token that completes each word of [`detokenize`](Self::detokenize).
    pub fn word_end_tokens(&self, ids: &[TokenId]) -> Vec<usize> {
        word_end_indices(ids.iter().map(|&id| {
            if id == self.blank_id {
                ""
            } else {
                self.pieces.get(id).map_or("", String::as_str)
            }
        }))
    }
}

/// Index of the piece that completes each word when `pieces` are joined and
/// split at word-boundary marks and whitespace.
pub fn word_end_indices<'a>(pieces: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut in_word = false;
    for (i, p) in pieces.into_iter().enumerate() {
        for c in p.chars() {
            if c == WORD_BOUNDARY || c.is_whitespace() {
                in_word = false;
            } else if in_word {
                *ends.last_mut().expect("in_word implies a word") = i;
            } else {
                ends.push(i);
                in_word = true;
            }
        }
    }
    ends
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detokenize_word_pieces() {
        let v = Vocabulary::new(
            vec!["<b>".into(), "▁he".into(), "llo".into(), "▁world".into()],
            0,
        )
        .unwrap();
        assert_eq!(v.detokenize(&[1, 2, 3]), "hello world");
        assert_eq!(v.word_end_tokens(&[1, 2, 3]), vec![1, 2]);
        assert_eq!(v.detokenize(&[]), "");
        assert!(v.word_end_tokens(&[]).is_empty());
    }

    #[test]
    fn synthetic_vocab() {
        let v = Vocabulary::synthetic(3);
        assert_eq!(v.output_dim(), 4);
        assert_eq!(v.detokenize(&[2, 1]), "w1 w0");
        assert_eq!(v.word_end_tokens(&[2, 1]), vec![0, 1]);
        assert!(Vocabulary::new(vec!["x".into()], 0).is_err());
        assert!(Vocabulary::new(vec!["x".into(), "y".into()], 2).is_err());
    }
}
