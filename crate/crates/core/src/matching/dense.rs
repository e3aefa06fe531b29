use alloc::vec;
use alloc::vec::Vec;

use super::WeightSource;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NBPM";
const HEADER_LEN: usize = 16;

/// Dense symmetric weight matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights {
    dim: usize,
    data: Vec<f64>,
}

impl DenseWeights {
    pub fn zeros(dim: usize) -> Self {
        DenseWeights {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} values cannot fill a {dim} x {dim} matrix",
                data.len()
            )));
        }
        Ok(DenseWeights { dim, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Writes both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set_symmetric(&mut self, i: usize, j: usize, w: f64) {
        self.data[i * self.dim + j] = w;
        self.data[j * self.dim + i] = w;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// 16-byte header (`"NBPM"`, u32 dimension, 8 reserved zero bytes), then
    /// row-major little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&[0u8; 8]);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::InvalidArgument("missing NBPM header".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * dim * dim {
            return Err(Error::InvalidArgument(alloc::format!(
                "matrix body has {} bytes, expected {}",
                body.len(),
                8 * dim * dim
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DenseWeights { dim, data })
    }
}

impl WeightSource for DenseWeights {
    fn dim(&self) -> usize {
        self.dim
    }
    fn weight(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut m = DenseWeights::zeros(2);
        m.set_symmetric(0, 1, 1.5);
        let b = m.to_bytes();
        assert_eq!(&b[..4], b"NBPM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(b.len(), 16 + 32);
        assert_eq!(f64::from_le_bytes(b[24..32].try_into().unwrap()), 1.5);
    }

    #[test]
    fn rejects_truncated_body() {
        let b = DenseWeights::zeros(3).to_bytes();
        assert!(DenseWeights::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(DenseWeights::from_bytes(b"XXXX").is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(dim in 0usize..6, seed in proptest::collection::vec(-1e6f64..1e6, 36)) {
            let data = seed[..dim * dim].to_vec();
            let m = DenseWeights::from_row_major(dim, data).unwrap();
            prop_assert_eq!(DenseWeights::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }
}
