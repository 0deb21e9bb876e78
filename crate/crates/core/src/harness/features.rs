//! Binary feature files.
//!
//! Layout, all little-endian: `b"FTRS"`, `u32` version (1), `u32` frames,
//! `u32` dims, `f32` frame shift in ms, then `frames * dims` `f32` values in
//! row-major order.

use std::path::Path;

use crate::encoder::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"FTRS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_features(features: &FeatureMatrix) -> Vec<u8> {
    let m = &features.frames;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.extend_from_slice(&features.frame_shift_ms.to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let err = |offset: usize, reason: String| Error::FeatureFormat {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    let word = |at: usize| -> Result<[u8; 4]> {
        bytes
            .get(at..at + 4)
            .map(|b| b.try_into().expect("four bytes"))
            .ok_or_else(|| err(bytes.len(), format!("header truncated, need {HEADER_LEN} bytes")))
    };
    if word(0)? != *MAGIC {
        return Err(err(0, "bad magic, expected \"FTRS\"".into()));
    }
    let version = u32::from_le_bytes(word(4)?);
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let frames = u32::from_le_bytes(word(8)?) as usize;
    let dims = u32::from_le_bytes(word(12)?) as usize;
    let shift = f32::from_le_bytes(word(16)?);
    if !(shift.is_finite() && shift > 0.0) {
        return Err(err(16, format!("frame shift {shift} ms must be positive")));
    }
    let values = frames
        .checked_mul(dims)
        .ok_or_else(|| err(8, "frames x dims overflows".into()))?;
    let need = HEADER_LEN + 4 * values;
    if bytes.len() < need {
        return Err(err(
            bytes.len(),
            format!("payload truncated: {frames}x{dims} needs {need} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > need {
        return Err(err(need, format!("{} trailing bytes", bytes.len() - need)));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    Ok(FeatureMatrix::new(Matrix::new(frames, dims, data)?, shift))
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    std::fs::write(path, encode_features(features)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(frames: usize, dims: usize) -> FeatureMatrix {
        let data = (0..frames * dims).map(|i| i as f32 * 0.25 - 3.0).collect();
        FeatureMatrix::new(Matrix::new(frames, dims, data).unwrap(), 10.0)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let f = sample(7, 80);
        let bytes = encode_features(&f);
        let back = decode_features(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, f);
        assert_eq!(encode_features(&back), bytes);
        assert_eq!((back.num_frames(), back.dim(), back.frame_shift_ms), (7, 80, 10.0));
    }

    #[test]
    fn truncated_payload_names_offset() {
        let mut bytes = encode_features(&sample(2, 3));
        bytes.truncate(HEADER_LEN + 5 * 4);
        match decode_features(&bytes, Path::new("x")) {
            Err(Error::FeatureFormat { offset, .. }) => assert_eq!(offset, 40),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_features(&sample(1, 1));
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes, Path::new("x")), Err(Error::FeatureFormat { offset: 0, .. })));
        let mut bytes = encode_features(&sample(1, 1));
        bytes[4] = 2;
        assert!(matches!(decode_features(&bytes, Path::new("x")), Err(Error::FeatureFormat { offset: 4, .. })));
        assert!(decode_features(b"FTR", Path::new("x")).is_err());
    }
}
