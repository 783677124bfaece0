//! Binary checkpoint format.
//!
//! Layout: an 8-byte little-endian header length, a JSON header, then the
//! raw little-endian payload. The header lists `{name, shape, dtype,
//! offset, length}` for every tensor; offsets are relative to the payload.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: Dtype,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    metadata: BTreeMap<String, serde_json::Value>,
    tensors: Vec<TensorEntry>,
    payload_length: usize,
}

/// A named-parameter snapshot plus free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub dtype: Dtype,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(params: ParamStore) -> Self {
        Checkpoint {
            params,
            metadata: BTreeMap::new(),
            dtype: Dtype::F64,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.params.len());
        let mut payload = Vec::new();
        for (name, t) in self.params.iter() {
            let offset = payload.len();
            for v in t.data() {
                match self.dtype {
                    Dtype::F64 => payload.extend_from_slice(&v.to_le_bytes()),
                    Dtype::F32 => payload.extend_from_slice(&(*v as f32).to_le_bytes()),
                }
            }
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: self.dtype,
                offset,
                length: payload.len() - offset,
            });
        }
        let header = Header {
            format_version: CHECKPOINT_FORMAT_VERSION,
            metadata: self.metadata.clone(),
            tensors: entries,
            payload_length: payload.len(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + header.len() + payload.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(ckpt_err("file shorter than the header length prefix"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if hlen > body.len() {
            return Err(ckpt_err(format!(
                "header claims {hlen} bytes but only {} follow",
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ckpt_err(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let payload = &body[hlen..];
        if payload.len() != header.payload_length {
            return Err(ckpt_err(format!(
                "payload is {} bytes, header declares {}",
                payload.len(),
                header.payload_length
            )));
        }
        let mut params = ParamStore::new();
        let mut dtype = Dtype::F64;
        let mut covered = 0;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.length != n * e.dtype.width() || e.offset + e.length > payload.len() {
                return Err(ckpt_err(format!("tensor `{}` has an inconsistent extent", e.name)));
            }
            let raw = &payload[e.offset..e.offset + e.length];
            let data: Vec<f64> = match e.dtype {
                Dtype::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                Dtype::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
            };
            dtype = e.dtype;
            covered += e.length;
            params.insert(e.name, Tensor::new(e.shape, data)?)?;
        }
        if covered != payload.len() {
            return Err(ckpt_err("payload contains bytes not owned by any tensor"));
        }
        Ok(Checkpoint {
            params,
            metadata: header.metadata,
            dtype,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl ParamStore {
    /// Serialized form of the store, in checkpoint layout with no metadata.
    pub fn snapshot(&self) -> Result<Vec<u8>> {
        Checkpoint::new(self.clone()).to_bytes()
    }

    pub fn restore(bytes: &[u8]) -> Result<ParamStore> {
        Ok(Checkpoint::from_bytes(bytes)?.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::normal_tensor;
    use crate::rng::seeded;

    fn store() -> ParamStore {
        let mut rng = seeded(3);
        let mut s = ParamStore::new();
        s.insert("b.weight", normal_tensor(&[3, 2], 1.0, &mut rng)).unwrap();
        s.insert("a.bias", normal_tensor(&[2], 1.0, &mut rng)).unwrap();
        s
    }

    #[test]
    fn snapshot_restore_snapshot_is_identical() {
        let s = store();
        let bytes = s.snapshot().unwrap();
        let back = ParamStore::restore(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.snapshot().unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut bytes = store().snapshot().unwrap();
        bytes.pop();
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        bytes.extend_from_slice(&[0, 0]);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn f32_payload_round_trips_rounded_values() {
        let mut s = store();
        s.round_to_f32();
        let mut ck = Checkpoint::new(s.clone());
        ck.dtype = Dtype::F32;
        ck.metadata.insert("k".into(), serde_json::json!(8));
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.params, s);
        assert_eq!(back.dtype, Dtype::F32);
        assert_eq!(back.metadata["k"], 8);
    }
}
