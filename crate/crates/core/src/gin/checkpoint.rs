//! Binary checkpoint format:
//!
//! ```text
//! b"GINCHK1\0" | u32 LE header length | UTF-8 JSON header | f32 LE payload
//! ```
//!
//! The header is `{"config": GinConfig, "tensors": [{"name", "shape", "dtype": "f32"}, ...]}`
//! with tensors in `Parameters` order; the payload concatenates them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GinConfig, GinModel};
use crate::error::{Error, Result};
use crate::nn::Parameters;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GINCHK1\0";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: GinConfig,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint(model: &GinModel) -> Result<Vec<u8>> {
    let tensors = model.tensors();
    if let Some(t) = tensors
        .iter()
        .find(|t| t.data.iter().any(|&x| x as f32 as f64 != x))
    {
        return Err(Error::Checkpoint(format!(
            "tensor {} holds values not representable as f32",
            t.name
        )));
    }
    let header = Header {
        config: model.config,
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                dtype: "f32".into(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let payload_len: usize = tensors.iter().map(|t| t.len() * 4).sum();
    let mut out = Vec::with_capacity(12 + json.len() + payload_len);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for &x in &t.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<GinModel> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 12 {
        return Err(bad("truncated file"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;

    let mut model = GinModel::new(header.config)?;
    let expected = model.tensors().len();
    if header.tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "header lists {} tensors, config implies {expected}",
            header.tensors.len()
        )));
    }
    let payload = &bytes[header_end..];
    let mut offset = 0;
    for (tensor, entry) in model.tensors_mut().into_iter().zip(&header.tensors) {
        if entry.name != tensor.name || entry.shape != tensor.shape || entry.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "shape mismatch: header has {} {:?} {}, expected {} {:?} f32",
                entry.name, entry.shape, entry.dtype, tensor.name, tensor.shape
            )));
        }
        let n = tensor.len() * 4;
        let chunk = payload
            .get(offset..offset + n)
            .ok_or_else(|| bad("payload shorter than header declares"))?;
        for (x, b) in tensor.data.iter_mut().zip(chunk.chunks_exact(4)) {
            *x = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
        offset += n;
    }
    if offset != payload.len() {
        return Err(Error::Checkpoint(format!(
            "payload has {} trailing bytes",
            payload.len() - offset
        )));
    }
    if !model.all_finite() {
        return Err(bad("non-finite parameters"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &GinModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GinModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GinModel {
        GinModel::new(GinConfig {
            hidden_dim: 6,
            num_layers: 2,
            mask_ratio: 0.2,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = model();
        m.layers[1].epsilon.data[0] = 0.125;
        let bytes = write_checkpoint(&m).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        for (a, b) in m.tensors().iter().zip(back.tensors()) {
            assert_eq!(a.name, b.name);
            let bits =
                |t: &crate::nn::Tensor| t.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.config, m.config);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = write_checkpoint(&model()).unwrap();
        bytes[0] = b'X';
        assert!(
            matches!(read_checkpoint(&bytes), Err(Error::Checkpoint(m)) if m.contains("magic"))
        );
    }

    #[test]
    fn length_mismatch() {
        let bytes = write_checkpoint(&model()).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0; 4]);
        assert!(read_checkpoint(&longer).is_err());
        let mut bad_len = bytes.clone();
        bad_len[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(read_checkpoint(&bad_len).is_err());
        assert!(read_checkpoint(&bytes[..10]).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let bytes = write_checkpoint(&model()).unwrap();
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = std::str::from_utf8(&bytes[12..12 + header_len]).unwrap();
        let edited = json.replacen("[120,6]", "[6,120]", 1);
        assert_ne!(edited, json);
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(edited.len() as u32).to_le_bytes());
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&bytes[12 + header_len..]);
        assert!(
            matches!(read_checkpoint(&out), Err(Error::Checkpoint(m)) if m.contains("shape mismatch"))
        );
    }

    #[test]
    fn rejects_unrepresentable_values() {
        let mut m = model();
        m.atom_embedding.data[0] = 0.1;
        assert!(write_checkpoint(&m).is_err());
    }
}
