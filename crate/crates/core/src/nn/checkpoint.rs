//! Binary checkpoint format.
//!
//! ```text
//! "BPLY"  version:u8  layers:u32le
//! per layer: rows:u32le cols:u32le activation:u8
//!            weights: rows*cols f64le (row-major, rows = inputs)
//!            biases:  cols f64le
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{Activation, Dense, LayerShape, ModelParams};

pub const MAGIC: &[u8; 4] = b"BPLY";
pub const VERSION: u8 = 1;
/// Magic, version and layer count.
pub const HEADER_LEN: usize = 4 + 1 + 4;
/// Rows, cols and activation tag.
pub const LAYER_HEADER_LEN: usize = 4 + 4 + 1;

/// Serialized size for a shape signature.
pub fn checkpoint_len(shape: &[LayerShape]) -> usize {
    HEADER_LEN
        + shape
            .iter()
            .map(|s| LAYER_HEADER_LEN + 8 * (s.inputs * s.outputs + s.outputs))
            .sum::<usize>()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::InvalidCheckpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::InvalidCheckpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl ModelParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(checkpoint_len(&self.shape_signature()));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.layers().len() as u32).to_le_bytes());
        for layer in self.layers() {
            out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
            out.push(layer.activation.tag());
            for w in layer.weights.iter() {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in layer.bias.iter() {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::InvalidCheckpoint("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::InvalidCheckpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let tag = r.u8()?;
            let activation = Activation::from_tag(tag)
                .ok_or_else(|| Error::InvalidCheckpoint(format!("unknown activation tag {tag}")))?;
            let weights = Array2::from_shape_vec((rows, cols), r.f64s(rows * cols)?)
                .map_err(|e| Error::InvalidCheckpoint(e.to_string()))?;
            let bias = Array1::from_vec(r.f64s(cols)?);
            layers.push(Dense {
                weights,
                bias,
                activation,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        ModelParams::from_layers(layers).map_err(|e| Error::InvalidCheckpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout() {
        let layer = Dense {
            weights: Array2::from_elem((3, 2), 1.5),
            bias: Array1::from_elem(2, -0.25),
            activation: Activation::Logistic,
        };
        let net = ModelParams::from_layers(vec![layer]).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..4], b"BPLY");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &1u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &3u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &2u32.to_le_bytes());
        assert_eq!(bytes[17], 2);
        assert_eq!(&bytes[18..26], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + LAYER_HEADER_LEN + 8 * (3 * 2 + 2));
        assert_eq!(bytes.len(), checkpoint_len(&net.shape_signature()));
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ModelParams::init(&[3, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let bytes = net.to_bytes();
        assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelParams::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(ModelParams::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(ModelParams::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[17] = 7;
        assert!(ModelParams::from_bytes(&bad).is_err());
    }

    #[test]
    fn missing_file() {
        let err = ModelParams::load(Path::new("/nonexistent/ckpt.bin")).unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint(_)));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact_and_size_depends_only_on_shape(
            widths in proptest::collection::vec(1usize..6, 2..5),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = ModelParams::init(&widths, Activation::LeakyRelu, Activation::Logistic, &mut rng).unwrap();
            let bytes = net.to_bytes();
            prop_assert_eq!(bytes.len(), checkpoint_len(&net.shape_signature()));
            prop_assert_eq!(ModelParams::from_bytes(&bytes).unwrap(), net);
        }
    }
}
