//! Binary array container.
//!
//! Layout, all integers little-endian: magic `MFWN`, format version `u16`,
//! dtype code `u8` (0 = `f64`), rank `u8`, `rank` extents as `u64`, then the
//! row-major payload.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MFWN";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 0;
const HEADER: usize = 4 + 2 + 1 + 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    BadVersion(u16),
    #[error("unsupported dtype code {0}")]
    BadDtype(u8),
    #[error("truncated container: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("shape {0:?} overflows the addressable size")]
    ShapeOverflow(Vec<u64>),
    #[error("{0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("invalid tensor: {0}")]
    Tensor(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * (t.rank() + t.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F64);
    out.push(u8::try_from(t.rank()).expect("rank fits in a byte"));
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn need(bytes: &[u8], n: usize) -> Result<(), ContainerError> {
    if bytes.len() < n {
        return Err(ContainerError::Truncated {
            need: n,
            have: bytes.len(),
        });
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, ContainerError> {
    need(bytes, 4)?;
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    need(bytes, HEADER)?;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    if bytes[6] != DTYPE_F64 {
        return Err(ContainerError::BadDtype(bytes[6]));
    }
    let rank = bytes[7] as usize;
    let start = HEADER + 8 * rank;
    need(bytes, start)?;
    let dims: Vec<u64> = bytes[HEADER..start]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .and_then(|n| n.checked_mul(8).map(|b| (n, b)))
        .and_then(|(n, b)| start.checked_add(b).map(|end| (n, end)));
    let Some((n, end)) = count else {
        return Err(ContainerError::ShapeOverflow(dims));
    };
    need(bytes, end)?;
    if bytes.len() > end {
        return Err(ContainerError::TrailingBytes(bytes.len() - end));
    }
    let data: Vec<f64> = bytes[start..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    debug_assert_eq!(data.len(), n);
    let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
    Tensor::new(shape, data).map_err(|e| ContainerError::Tensor(e.to_string()))
}

pub fn save_array(path: impl AsRef<Path>, t: &Tensor) -> Result<(), ContainerError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn load_array(path: impl AsRef<Path>) -> Result<Tensor, ContainerError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_matrix_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..300).map(|_| rng.random_range(-1e6..1e6)).collect();
        let t = Tensor::new(vec![100, 3], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mfwn");
        save_array(&p, &t).unwrap();
        let back = load_array(&p).unwrap();
        assert_eq!(back.shape(), t.shape());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn scalar_round_trip() {
        let t = Tensor::scalar(-0.0);
        let bytes = encode(&t);
        assert_eq!(bytes.len(), HEADER + 8);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.shape(), &[] as &[usize]);
        assert_eq!(back.data()[0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = encode(&t);
        assert_eq!(&b[..4], b"MFWN");
        assert_eq!(&b[4..8], &[1, 0, 0, 1]);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_give_distinct_errors() {
        let good = encode(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(ContainerError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(ContainerError::BadVersion(2))));
        let mut bad = good.clone();
        bad[6] = 1;
        assert!(matches!(decode(&bad), Err(ContainerError::BadDtype(1))));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(ContainerError::Truncated { .. })));
        assert!(matches!(decode(&good[..10]), Err(ContainerError::Truncated { .. })));
        assert!(matches!(decode(&good[..2]), Err(ContainerError::Truncated { .. })));
        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(&bad), Err(ContainerError::ShapeOverflow(_))));
        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode(&bad), Err(ContainerError::TrailingBytes(1))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_array(dir.path().join("missing")), Err(ContainerError::Io(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(shape in prop::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
            let t = Tensor::new(shape, data).unwrap();
            let back = decode(&encode(&t)).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
