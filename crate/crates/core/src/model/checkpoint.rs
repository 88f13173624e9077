//! Checkpoint layout:
//!
//! ```text
//! magic "VIBNETCK" | u32 LE version | u64 LE header length | JSON header | blob
//! ```
//!
//! The header lists every tensor (parameters, batch-norm buffers, Adam
//! moments) with its shape and byte offset into the blob. Blob values are
//! little-endian in the model's precision, so a reload is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::VibNetConfig;
use super::data::{Normalization, Sample};
use super::net::VibNet;
use super::train::{predict_samples, TrainConfig, TrainingLog};
use super::{Prediction, TrainedModel};
use crate::autodiff::{Adam, AdamConfig, Dtype, Real, Tensor};
use crate::tacton::Waveform;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VIBNETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: Dtype,
    config: VibNetConfig,
    normalization: Normalization,
    training_log: TrainingLog,
    optimizer: AdamConfig,
    optimizer_step: u64,
    blob_sha256: String,
    tensors: Vec<TensorEntry>,
}

/// A trained model in either precision.
#[derive(Debug, Clone)]
pub enum Model {
    F32(TrainedModel<f32>),
    F64(TrainedModel<f64>),
}

impl From<TrainedModel<f32>> for Model {
    fn from(m: TrainedModel<f32>) -> Self {
        Model::F32(m)
    }
}

impl From<TrainedModel<f64>> for Model {
    fn from(m: TrainedModel<f64>) -> Self {
        Model::F64(m)
    }
}

macro_rules! each {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            Model::F32($m) => $body,
            Model::F64($m) => $body,
        }
    };
}

impl Model {
    pub fn untrained(config: &VibNetConfig) -> Result<Self> {
        Ok(match config.precision {
            Dtype::F32 => Model::F32(TrainedModel::untrained(config)?),
            Dtype::F64 => Model::F64(TrainedModel::untrained(config)?),
        })
    }

    pub fn predict(&self, w: &Waveform) -> Result<Prediction> {
        each!(self, m => m.predict(w))
    }

    /// Evaluation-mode predictions for many samples, `batch_size` at a time.
    pub fn predict_batch(&self, samples: &[Sample], batch_size: usize) -> Result<Vec<Prediction>> {
        let raw = each!(self, m => predict_samples(m, samples, batch_size, TrainConfig::default().cache_bytes))?;
        Ok(raw
            .into_iter()
            .map(|raw| Prediction {
                raw,
                clamped: raw.clamped(),
            })
            .collect())
    }

    pub fn config(&self) -> &VibNetConfig {
        each!(self, m => m.config())
    }

    pub fn normalization(&self) -> &Normalization {
        each!(self, m => &m.norm)
    }

    pub fn training_log(&self) -> &TrainingLog {
        each!(self, m => &m.log)
    }

    pub fn param_count(&self) -> usize {
        each!(self, m => m.net.param_count())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        each!(self, m => encode(m))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, blob) = split(bytes)?;
        Ok(match header.dtype {
            Dtype::F32 => Model::F32(decode(header, blob)?),
            Dtype::F64 => Model::F64(decode(header, blob)?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode<T: Real>(m: &TrainedModel<T>) -> Vec<u8> {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    let mut put = |name: String, shape: &[usize], data: &[T]| {
        tensors.push(TensorEntry {
            name,
            shape: shape.to_vec(),
            offset: blob.len(),
        });
        for &v in data {
            v.write_le(&mut blob);
        }
    };
    let params = m.net.params();
    for (name, t) in params.iter() {
        put(format!("param:{name}"), t.shape(), t.data());
    }
    for b in m.net.buffers() {
        put(format!("buffer:{}.mean", b.name), &[b.mean.len()], &b.mean);
        put(format!("buffer:{}.var", b.name), &[b.var.len()], &b.var);
    }
    for ((name, _), (mt, vt)) in params.iter().zip(m.optimizer.m.iter().zip(&m.optimizer.v)) {
        put(format!("adam.m:{name}"), mt.shape(), mt.data());
        put(format!("adam.v:{name}"), vt.shape(), vt.data());
    }
    let header = Header {
        dtype: T::DTYPE,
        config: m.net.config().clone(),
        normalization: m.norm.clone(),
        training_log: m.log.clone(),
        optimizer: m.optimizer.config,
        optimizer_step: m.optimizer.t,
        blob_sha256: hex(&Sha256::digest(&blob)),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + blob.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

fn split(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if hlen > body.len() {
        return Err(Error::Corrupt("truncated header".into()));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Corrupt(format!("bad header: {e}")))?;
    let blob = &body[hlen..];
    if hex(&Sha256::digest(blob)) != header.blob_sha256 {
        return Err(Error::Corrupt("parameter blob checksum mismatch".into()));
    }
    Ok((header, blob))
}

fn decode<T: Real>(header: Header, blob: &[u8]) -> Result<TrainedModel<T>> {
    let mut config = header.config;
    config.precision = T::DTYPE;
    let mut net = VibNet::<T>::build(&config)?;
    let size = T::DTYPE.size();
    let find = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
        let e = header
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Corrupt(format!("missing tensor {name}")))?;
        if e.shape != shape {
            return Err(Error::Corrupt(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                e.shape
            )));
        }
        let n: usize = shape.iter().product();
        let bytes = blob
            .get(e.offset..e.offset + n * size)
            .ok_or_else(|| Error::Corrupt(format!("tensor {name} out of range")))?;
        Ok(bytes.chunks_exact(size).map(T::read_le).collect())
    };
    let ids: Vec<_> = net.params().ids().collect();
    let mut adam = Adam::new(header.optimizer, net.params());
    adam.t = header.optimizer_step;
    for id in ids {
        let name = net.params().name(id).to_string();
        let shape = net.params().get(id).shape().to_vec();
        net.params_mut()
            .set(id, Tensor::new(shape.clone(), find(&format!("param:{name}"), &shape)?)?)?;
        adam.m[id.0] = Tensor::new(shape.clone(), find(&format!("adam.m:{name}"), &shape)?)?;
        adam.v[id.0] = Tensor::new(shape.clone(), find(&format!("adam.v:{name}"), &shape)?)?;
    }
    for b in net.buffers_mut() {
        let n = b.mean.len();
        b.mean = find(&format!("buffer:{}.mean", b.name), &[n])?;
        b.var = find(&format!("buffer:{}.var", b.name), &[n])?;
    }
    Ok(TrainedModel {
        net,
        norm: header.normalization,
        optimizer: adam,
        log: header.training_log,
    })
}
