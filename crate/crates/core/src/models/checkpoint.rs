//! Binary checkpoint files.
//!
//! Layout:
//!
//! ```text
//! b"ABSNET01"                 8-byte magic
//! u32 (little-endian)         header length in bytes
//! header                      UTF-8 JSON, see `Header`
//! payload                     tensors in header order, little-endian
//! ```
//!
//! The payload dtype is `f32` for training networks and `f64` for
//! verification-grade networks; the header records which.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::nn::{Network, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"ABSNET01";
pub const FORMAT_VERSION: u32 = 1;

/// Training-state metadata stored alongside the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage_lr: Option<f64>,
    pub epoch: Option<usize>,
    pub expected_accuracy: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: String,
    dtype: String,
    tensors: Vec<TensorEntry>,
    metadata: CheckpointMeta,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    /// `<arch>/<activation>` identifier of the saved network.
    pub model: String,
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_network(net: &Network<T>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            model: net.name().to_string(),
            meta,
            tensors: net.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.clone(),
            dtype: T::DTYPE.to_string(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
            metadata: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * T::BYTES).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for &x in t.data() {
                x.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |msg: &str| Error::format(path, format!("corrupt checkpoint: {msg}"));
        if bytes.len() < MAGIC.len() + 4 {
            return Err(corrupt("file shorter than the fixed preamble"));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < header_len {
            return Err(corrupt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(&format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {} (expected {FORMAT_VERSION})", header.format_version),
            ));
        }
        if header.dtype != T::DTYPE {
            return Err(Error::format(path, format!("checkpoint holds {}, requested {}", header.dtype, T::DTYPE)));
        }
        let mut payload = &body[header_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let len: usize = entry.shape.iter().product();
            let nbytes = len * T::BYTES;
            if payload.len() < nbytes {
                return Err(corrupt(&format!("payload truncated in tensor `{}`", entry.name)));
            }
            let data = payload[..nbytes].chunks_exact(T::BYTES).map(T::read_le).collect();
            payload = &payload[nbytes..];
            tensors.push((entry.name, Tensor::new(entry.shape, data).map_err(|e| corrupt(&e.to_string()))?));
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(Checkpoint { model: header.model, meta: header.metadata, tensors })
    }

    /// Copies the stored tensors into `net`, checking names and shapes.
    pub fn restore_into(&self, net: &mut Network<T>) -> Result<()> {
        let expected = net.named_params();
        if expected.len() != self.tensors.len() {
            return Err(Error::shape(format!(
                "checkpoint `{}` has {} tensors, network `{}` has {}",
                self.model,
                self.tensors.len(),
                net.name(),
                expected.len()
            )));
        }
        for ((name, want), (got_name, got)) in expected.iter().zip(&self.tensors) {
            if name != got_name || want.shape() != got.shape() {
                return Err(Error::shape(format!(
                    "checkpoint `{}` tensor {got_name} {:?} does not fit `{}` tensor {name} {:?}",
                    self.model,
                    got.shape(),
                    net.name(),
                    want.shape()
                )));
            }
        }
        let params: Vec<Tensor<T>> = self.tensors.iter().map(|(_, t)| t.clone()).collect();
        net.restore(&params)
    }

    /// Rebuilds the recorded architecture and installs the parameters.
    pub fn to_network(&self) -> Result<Network<T>> {
        let spec: ModelSpec = self.model.parse()?;
        let mut net = spec.build()?;
        self.restore_into(&mut net)?;
        Ok(net)
    }
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = Checkpoint::from_network(net, meta.clone()).to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
