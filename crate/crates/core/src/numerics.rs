//! Dense numeric substrate shared by the encoder, predictor and joiner.
//!
//! Inference-path tensors are `f32` [`Matrix`] values. Log-space reductions
//! used by the losses and the search run in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row {i} has {} values, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        let end = end.min(self.rows);
        let start = start.min(end);
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Matrix {
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Stacks matrices vertically. Zero-row parts are skipped, so an empty
    /// history or right context can be passed without special-casing.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts
            .iter()
            .find(|m| m.rows > 0)
            .map_or_else(|| parts.first().map_or(0, |m| m.cols), |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts.iter().filter(|m| m.rows > 0) {
            if m.cols != cols {
                return Err(Error::shape(
                    "vstack",
                    format!("{} columns vs {cols}", m.cols),
                ));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Writes `src` into columns `[start, start + src.cols)`.
    pub fn set_cols(&mut self, start: usize, src: &Matrix) {
        for r in 0..self.rows {
            self.row_mut(r)[start..start + src.cols].copy_from_slice(src.row(r));
        }
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} · {}x{}",
                    self.rows, self.cols, rhs.rows, rhs.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &b) in o.iter_mut().zip(rhs.row(k)) {
                    *oj += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f32]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::shape(
                "add_row_vector",
                format!("bias len {} vs {} cols", bias.len(), self.cols),
            ));
        }
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(
                "add_assign",
                format!(
                    "{}x{} + {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f32 {
        if self.rows != other.rows || self.cols != other.cols {
            return f32::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Boolean visibility mask; `true` lets query row `i` attend to key row `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allowed.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            allowed,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.allowed[i * self.cols + j] = value;
    }

    /// Indices of the keys visible to query `i`.
    pub fn visible(&self, i: usize) -> Vec<usize> {
        (0..self.cols).filter(|&j| self.allowed(i, j)).collect()
    }
}

/// `log Σ exp(vᵢ)`, shifted by the maximum.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyReduction);
    }
    Ok(log_sum_exp_unchecked(values))
}

pub(crate) fn log_sum_exp_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(eᵃ + eᵇ)`.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_softmax(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyReduction);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log_softmax input"));
    }
    let norm = log_sum_exp_unchecked(values);
    Ok(values.iter().map(|v| v - norm).collect())
}

/// Scaled dot-product attention restricted to the keys `mask` allows.
///
/// Disallowed keys are left out of the softmax normalizer entirely.
pub fn masked_attention(
    queries: &Matrix,
    keys: &Matrix,
    values: &Matrix,
    mask: &AttentionMask,
) -> Result<Matrix> {
    if queries.cols != keys.cols {
        return Err(Error::shape(
            "masked_attention",
            format!("query dim {} vs key dim {}", queries.cols, keys.cols),
        ));
    }
    if keys.rows != values.rows || keys.rows != mask.cols || queries.rows != mask.rows {
        return Err(Error::shape(
            "masked_attention",
            format!(
                "q {} rows, k {} rows, v {} rows, mask {}x{}",
                queries.rows, keys.rows, values.rows, mask.rows, mask.cols
            ),
        ));
    }
    let scale = 1.0 / (queries.cols as f32).sqrt();
    let mut out = Matrix::zeros(queries.rows, values.cols);
    let mut scores: Vec<(usize, f32)> = Vec::with_capacity(keys.rows);
    for i in 0..queries.rows {
        scores.clear();
        let q = queries.row(i);
        for j in 0..keys.rows {
            if mask.allowed(i, j) {
                let s: f32 = q.iter().zip(keys.row(j)).map(|(a, b)| a * b).sum();
                scores.push((j, s * scale));
            }
        }
        if scores.is_empty() {
            return Err(Error::NoVisibleContext { row: i });
        }
        let max = scores.iter().map(|s| s.1).fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f32;
        for s in &mut scores {
            s.1 = (s.1 - max).exp();
            denom += s.1;
        }
        let o = out.row_mut(i);
        for &(j, w) in &scores {
            let w = w / denom;
            for (oc, v) in o.iter_mut().zip(values.row(j)) {
                *oc += w * v;
            }
        }
    }
    Ok(out)
}

/// Per-row layer normalization with learned gain and bias.
pub fn layer_norm(x: &Matrix, gain: &[f32], bias: &[f32], eps: f32) -> Result<Matrix> {
    if gain.len() != x.cols || bias.len() != x.cols {
        return Err(Error::shape(
            "layer_norm",
            format!("gain {} bias {} vs {} cols", gain.len(), bias.len(), x.cols),
        ));
    }
    let mut out = x.clone();
    let n = x.cols as f32;
    for r in 0..x.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f32>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lse_single_and_symmetric() {
        assert_eq!(log_sum_exp(&[0.0]).unwrap(), 0.0);
        let v = log_sum_exp(&[1.5, 1.5]).unwrap();
        assert!((v - (1.5 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((v - 2.193_147_180_559_945).abs() < 1e-12);
    }

    #[test]
    fn lse_large_values_do_not_overflow() {
        // naive: (2 e^1000).ln() overflows to inf
        assert!((2.0f64 * 1000f64.exp()).ln().is_infinite());
        let v = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((v - 1000.693_147_180_559_9).abs() < 1e-9);
    }

    #[test]
    fn lse_empty_is_error() {
        assert!(matches!(log_sum_exp(&[]), Err(Error::EmptyReduction)));
    }

    #[test]
    fn log_softmax_cases() {
        let out = log_softmax(&[3.0; 4]).unwrap();
        for v in out {
            assert!((v + 4f64.ln()).abs() < 1e-12);
        }
        assert_eq!(log_softmax(&[7.25]).unwrap(), vec![0.0]);
        let out = log_softmax(&[1.0, 2.0, 3.0]).unwrap();
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (i, v) in out.iter().enumerate() {
            let direct = ((i as f64 + 1.0).exp() / denom).ln();
            assert!((v - direct).abs() < 1e-12);
        }
        assert!(log_softmax(&[1.0, f64::NAN]).is_err());
        assert!(log_softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn attention_single_key_returns_value() {
        let q = Matrix::new(1, 2, vec![0.3, -1.0]).unwrap();
        let k = Matrix::new(1, 2, vec![2.0, 0.5]).unwrap();
        let v = Matrix::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let out = masked_attention(&q, &k, &v, &AttentionMask::full(1, 1)).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn attention_identical_keys_average_values() {
        let q = Matrix::new(1, 2, vec![0.7, 0.1]).unwrap();
        let k = Matrix::new(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let v = Matrix::new(3, 1, vec![1.0, 2.0, 6.0]).unwrap();
        let out = masked_attention(&q, &k, &v, &AttentionMask::full(1, 3)).unwrap();
        assert!((out.get(0, 0) - 3.0).abs() < 1e-6);
    }

    fn dense_neg_inf_attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: &AttentionMask) -> Vec<f64> {
        // -inf logits for masked keys, then an ordinary softmax in f64
        let d = q.cols() as f64;
        let mut out = vec![0.0; q.rows() * v.cols()];
        for i in 0..q.rows() {
            let logits: Vec<f64> = (0..k.rows())
                .map(|j| {
                    if mask.allowed(i, j) {
                        let dot: f64 = q.row(i).iter().zip(k.row(j)).map(|(a, b)| *a as f64 * *b as f64).sum();
                        dot / d.sqrt()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..k.rows() {
                for c in 0..v.cols() {
                    out[i * v.cols() + c] += e[j] / s * v.get(j, c) as f64;
                }
            }
        }
        out
    }

    #[test]
    fn band_mask_matches_neg_inf_oracle() {
        let q = Matrix::new(3, 2, vec![0.1, 0.9, -0.4, 0.3, 1.2, -0.7]).unwrap();
        let k = Matrix::new(5, 2, vec![0.5, 0.2, -0.3, 0.8, 1.0, 1.0, -1.1, 0.4, 0.0, -0.6]).unwrap();
        let v = Matrix::new(5, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.5, 0.5, -2.0, 3.0]).unwrap();
        let mask = AttentionMask::from_fn(3, 5, |i, j| j >= i && j <= i + 2);
        let out = masked_attention(&q, &k, &v, &mask).unwrap();
        let oracle = dense_neg_inf_attention(&q, &k, &v, &mask);
        for (a, b) in out.data().iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn all_false_row_is_error() {
        let q = Matrix::zeros(2, 2);
        let k = Matrix::zeros(2, 2);
        let mask = AttentionMask::from_fn(2, 2, |i, _| i == 0);
        assert!(matches!(
            masked_attention(&q, &k, &k, &mask),
            Err(Error::NoVisibleContext { row: 1 })
        ));
    }

    #[test]
    fn shape_checks() {
        let q = Matrix::zeros(2, 3);
        let k = Matrix::zeros(2, 2);
        assert!(masked_attention(&q, &k, &k, &AttentionMask::full(2, 2)).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(q.matmul(&q).is_err());
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = Matrix::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = layer_norm(&x, &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        let mean: f32 = y.row(0).iter().sum::<f32>() / 4.0;
        let var: f32 = y.row(0).iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn lse_bounds(v in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let l = log_sum_exp(&v).unwrap();
            prop_assert!(l >= m - 1e-12);
            prop_assert!(l <= m + (v.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn log_softmax_shift_invariant(
            v in prop::collection::vec(-30.0f64..30.0, 1..12),
            c in -100.0f64..100.0,
        ) {
            let a = log_softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = log_softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-6);
            }
            let total: f64 = a.iter().map(|x| x.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn attention_ignores_masked_key_order(seed in 0u64..500) {
            use rand::{RngExt, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rnd = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
            let q = Matrix::new(2, 3, rnd(6)).unwrap();
            let k = Matrix::new(5, 3, rnd(15)).unwrap();
            let v = Matrix::new(5, 2, rnd(10)).unwrap();
            // keys 3 and 4 hidden
            let mask = AttentionMask::from_fn(2, 5, |_, j| j < 3);
            let a = masked_attention(&q, &k, &v, &mask).unwrap();
            let mut k2 = k.clone();
            let mut v2 = v.clone();
            let (r3k, r4k) = (k.row(3).to_vec(), k.row(4).to_vec());
            k2.row_mut(3).copy_from_slice(&r4k);
            k2.row_mut(4).copy_from_slice(&r3k);
            let (r3v, r4v) = (v.row(3).to_vec(), v.row(4).to_vec());
            v2.row_mut(3).copy_from_slice(&r4v);
            v2.row_mut(4).copy_from_slice(&r3v);
            let b = masked_attention(&q, &k2, &v2, &mask).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
