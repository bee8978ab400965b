//! Binary checkpoint container.
//!
//! Layout: 6 magic bytes `RRKCPT`, a little-endian `u16` format version, a
//! little-endian `u64` header length, the UTF-8 JSON header, then every tensor
//! in header order as little-endian `f64`. The scoring head travels as the
//! tensors `head.w` and `head.b`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EncoderConfig, EncoderParams, Vocab};
use crate::ranker::ScoringHead;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 6] = *b"RRKCPT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint truncated")]
    Truncated,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    encoder: EncoderConfig,
    vocab: Vocab,
    tensors: Vec<TensorInfo>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Everything needed to score hypotheses again: weights, head and vocabulary,
/// plus free-form provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: EncoderParams<T>,
    pub head: ScoringHead<T>,
    pub vocab: Vocab,
    pub meta: serde_json::Value,
}

impl<T: Scalar> Checkpoint<T> {
    fn layout(&self) -> Vec<(String, Vec<usize>, Vec<T>)> {
        let mut out: Vec<_> = self
            .params
            .tensors()
            .into_iter()
            .map(|(n, s, t)| (n, s, t.to_vec()))
            .collect();
        out.push(("head.w".into(), vec![self.head.dim()], self.head.w.clone()));
        out.push(("head.b".into(), vec![1], vec![self.head.b]));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = self.layout();
        let header = Header {
            encoder: self.params.config,
            vocab: self.vocab.clone(),
            tensors: layout
                .iter()
                .map(|(name, shape, _)| TensorInfo {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, data) in &layout {
            for v in data {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut take = |n: usize| -> Result<&[u8], CheckpointError> {
            if bytes.len() < n {
                return Err(CheckpointError::Truncated);
            }
            let (head, rest) = bytes.split_at(n);
            bytes = rest;
            Ok(head)
        };
        if take(6)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let header_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(header_len)?)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;

        let params = EncoderParams::<T>::init(header.encoder, header.vocab.len())
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .chain([
                ("head.w".to_string(), vec![header.encoder.dim]),
                ("head.b".to_string(), vec![1]),
            ])
            .collect();
        let found: Vec<(String, Vec<usize>)> = header
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.shape.clone()))
            .collect();
        if expected != found {
            return Err(CheckpointError::Header(
                "tensor list does not match the encoder config".into(),
            ));
        }
        let mut values = Vec::with_capacity(
            expected
                .iter()
                .map(|(_, s)| s.iter().product::<usize>())
                .sum(),
        );
        for _ in 0..values.capacity() {
            values.push(T::of(f64::from_le_bytes(take(8)?.try_into().unwrap())));
        }
        let mut it = values.into_iter();
        let mut params = params;
        params.for_each_value_mut(|v| *v = it.next().expect("sized above"));
        let w: Vec<T> = it.by_ref().take(header.encoder.dim).collect();
        let b = it.next().expect("sized above");
        Ok(Checkpoint {
            params,
            head: ScoringHead { w, b },
            vocab: header.vocab,
            meta: header.meta,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    ckpt: &Checkpoint<T>,
) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&ckpt.to_bytes()).map_err(io)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io)?
        .read_to_end(&mut bytes)
        .map_err(io)?;
    Checkpoint::from_bytes(&bytes)
}
