//! Checkpoint file format.
//!
//! ```text
//! u64 LE      header length N
//! N bytes     UTF-8 JSON header
//! payload     f64 LE values, tensors back to back
//! ```
//!
//! The header is `{"format", "version", "config", "tensors": [{"name",
//! "shape", "offset"}], "adapters"}` where `offset` is the byte offset of the
//! tensor within the payload and `adapters` is an optional free-form section
//! used by adapter checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::weights::ModelWeights;
use super::ModelConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const FORMAT: &str = "headimpact-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    adapters: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Raw checkpoint contents.
#[derive(Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<(String, Tensor)>,
    pub adapters: Option<serde_json::Value>,
}

pub fn encode_checkpoint(
    config: &ModelConfig,
    tensors: &[(String, &Tensor)],
    adapters: Option<serde_json::Value>,
) -> Result<Vec<u8>> {
    let mut offset = 0;
    let entries = tensors
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += t.len() * 8;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        format: FORMAT.into(),
        version: VERSION,
        config: config.clone(),
        tensors: entries,
        adapters,
    })?;
    let mut out = Vec::with_capacity(8 + header.len() + offset);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
    let fail = |m: String| Error::format(origin, m);
    if bytes.len() < 8 {
        return Err(fail("file shorter than header length prefix".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if hlen > body.len() {
        return Err(fail(format!("header length {hlen} exceeds file size")));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| fail(format!("corrupt header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(fail(format!(
            "unsupported format {} v{} (expected {FORMAT} v{VERSION})",
            header.format, header.version
        )));
    }
    header
        .config
        .validate()
        .map_err(|e| fail(format!("invalid config: {e}")))?;
    let payload = &body[hlen..];
    let mut expected = 0;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        if entry.offset != expected {
            return Err(fail(format!(
                "tensor {} at offset {}, expected {expected}",
                entry.name, entry.offset
            )));
        }
        let end = expected + n * 8;
        if end > payload.len() {
            return Err(fail(format!(
                "payload truncated: tensor {} needs bytes {expected}..{end}, payload has {}",
                entry.name,
                payload.len()
            )));
        }
        let data = payload[expected..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(entry.shape, data)
            .map_err(|e| fail(format!("tensor {}: {e}", entry.name)))?;
        tensors.push((entry.name, t));
        expected = end;
    }
    if expected != payload.len() {
        return Err(fail(format!(
            "header describes {expected} payload bytes, file has {}",
            payload.len()
        )));
    }
    Ok(Checkpoint {
        config: header.config,
        tensors,
        adapters: header.adapters,
    })
}

pub fn write_checkpoint(
    path: &Path,
    config: &ModelConfig,
    tensors: &[(String, &Tensor)],
    adapters: Option<serde_json::Value>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_checkpoint(config, tensors, adapters)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    decode_checkpoint(&bytes, path)
}

pub fn save_weights(weights: &ModelWeights, path: &Path) -> Result<()> {
    write_checkpoint(path, &weights.config, &weights.named_tensors(), None)
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.adapters.is_some() {
        return Err(Error::format(path, "file is an adapter checkpoint"));
    }
    ModelWeights::from_named(ckpt.config, ckpt.tensors)
        .map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    fn weights() -> ModelWeights {
        init_model(&ModelConfig::default(), 17).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let w = weights();
        save_weights(&w, &p).unwrap();
        let back = load_weights(&p).unwrap();
        for ((n1, a), (n2, b)) in w.named_tensors().iter().zip(back.named_tensors()) {
            assert_eq!(n1, &n2);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupt_header_is_a_format_error() {
        let w = weights();
        let mut bytes = encode_checkpoint(&w.config, &w.named_tensors(), None).unwrap();
        bytes[8] = b'#';
        let err = decode_checkpoint(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let w = weights();
        let bytes = encode_checkpoint(&w.config, &w.named_tensors(), None).unwrap();
        let err = decode_checkpoint(&bytes[..bytes.len() - 8], Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let w = weights();
        let mut bytes = encode_checkpoint(&w.config, &w.named_tensors(), None).unwrap();
        bytes.extend_from_slice(&[0; 8]);
        assert!(decode_checkpoint(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let w = weights();
        let bytes = encode_checkpoint(&w.config, &w.named_tensors(), None).unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[8..8 + hlen].to_vec()).unwrap();
        let header = header.replace("\"version\":1", "\"version\":9");
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&bytes[8 + hlen..]);
        let err = decode_checkpoint(&out, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("unsupported"), "{err}");
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let w = weights();
        let other = ModelConfig {
            ffn_dim: 96,
            ..ModelConfig::default()
        };
        let bytes = encode_checkpoint(&other, &w.named_tensors(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        fs::write(&p, bytes).unwrap();
        assert!(load_weights(&p).is_err());
    }
}
