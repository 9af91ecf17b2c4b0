//! Single-file checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "WAHLSCKP"
//! 8       4     format version, u32 LE
//! 12      8     header length H, u64 LE
//! 20      H     UTF-8 JSON header (kind, layout version, normalization,
//!               network structure, training config and history,
//!               parameter names and shapes)
//! 20+H    8     parameter count N, u64 LE
//! 28+H    8N    parameters, f64 LE, declaration order, row-major
//! end-32  32    sha256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wahls_core::featurize::{NormStats, FEATURE_LAYOUT_VERSION};

use crate::model::{ModelKind, Network, TrainedModel};
use crate::params::{ParamShape, Params};
use crate::tape::Mat;
use crate::train::{EpochRecord, TrainConfig};

pub const MAGIC: &[u8; 8] = b"WAHLSCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{what} version {found} is not supported (expected {expected})")]
    VersionMismatch { what: &'static str, found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    layout_version: u32,
    cost_model_version: Option<String>,
    norm: NormStats,
    network: Network,
    train_config: TrainConfig,
    history: Vec<EpochRecord>,
    params: Vec<ParamShape>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_checkpoint(m: &TrainedModel) -> Vec<u8> {
    let header = Header {
        kind: m.kind(),
        layout_version: m.norm.layout_version,
        cost_model_version: m.cost_model_version.clone(),
        norm: m.norm.clone(),
        network: m.network.clone(),
        train_config: m.train_config.clone(),
        history: m.history.clone(),
        params: m.params.shapes(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let flat = m.params.flatten();
    let mut out = Vec::with_capacity(64 + json.len() + 8 * flat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::CorruptCheckpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<TrainedModel, CheckpointError> {
    let corrupt = |m: &str| CheckpointError::CorruptCheckpoint(m.to_string());
    let mut r = Reader { bytes, at: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch { what: "checkpoint format", found: version, expected: FORMAT_VERSION });
    }
    let hlen = usize::try_from(r.u64("header length")?).map_err(|_| corrupt("header length overflows"))?;
    let header_bytes = r.take(hlen, "header")?;
    let n = usize::try_from(r.u64("parameter count")?).map_err(|_| corrupt("parameter count overflows"))?;
    let blob = r.take(n.checked_mul(8).ok_or_else(|| corrupt("parameter count overflows"))?, "parameters")?;
    let body_end = r.at;
    let digest = r.take(32, "checksum")?;
    if r.at != bytes.len() {
        return Err(corrupt("trailing bytes after checksum"));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| corrupt(&format!("header: {e}")))?;
    if header.layout_version != FEATURE_LAYOUT_VERSION || header.norm.layout_version != FEATURE_LAYOUT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            what: "feature layout",
            found: header.layout_version,
            expected: FEATURE_LAYOUT_VERSION,
        });
    }
    if header.network.kind() != header.kind {
        return Err(corrupt("model kind does not match network structure"));
    }
    let mut params = Params::new();
    for s in &header.params {
        params.add(s.name.clone(), Mat::zeros((s.rows, s.cols)));
    }
    let flat: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    params.load_flat(&flat).map_err(|e| corrupt(&e))?;
    Ok(TrainedModel::new(
        header.network,
        params,
        header.norm,
        header.train_config,
        header.history,
        header.cost_model_version,
    ))
}

pub fn write_checkpoint(m: &TrainedModel, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, save_checkpoint(m))
        .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedModel, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    load_checkpoint(&bytes)
}
