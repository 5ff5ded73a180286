//! `JAWS1` container: magic, little-endian `u32` header length, UTF-8 JSON header,
//! then the payload as contiguous little-endian `f64`s in declared order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{JawsError, Result};
use crate::field::Field;
use crate::model::{Architecture, ManifestEntry, ModelParams};
use crate::objective::Method;
use crate::solver::{Dataset, Split, Trajectory};

pub const MAGIC: &[u8; 5] = b"JAWS1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Header {
    Dataset(DatasetHeader),
    Checkpoint(CheckpointHeader),
}

impl Header {
    fn shapes(&self) -> &[Vec<usize>] {
        match self {
            Header::Dataset(h) => &h.shapes,
            Header::Checkpoint(h) => &h.shapes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub split: Split,
    pub seed: u64,
    pub grid: usize,
    pub dt: f64,
    pub nu_range: [f64; 2],
    pub nu: Vec<f64>,
    pub substeps: Vec<usize>,
    /// `[states, grid]` per trajectory.
    pub shapes: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub arch: Architecture,
    pub manifest: Vec<ManifestEntry>,
    /// `[theta_len]`, `[phi_len]`, `[1]` for s1.
    pub shapes: Vec<Vec<usize>>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub dataset_digest: Option<String>,
}

/// Provenance recorded alongside checkpoint parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub dataset_digest: Option<String>,
}

pub fn encode(header: &Header, payload: &[f64]) -> Result<Vec<u8>> {
    let expected: usize = header.shapes().iter().map(|s| s.iter().product::<usize>()).sum();
    if expected != payload.len() {
        return Err(JawsError::Format(format!(
            "declared shapes hold {expected} values, payload has {}",
            payload.len()
        )));
    }
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len())
        .map_err(|_| JawsError::Format("header larger than 4 GiB".into()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(JawsError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        return Err(JawsError::Format("truncated header length".into()));
    }
    let len = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
    let rest = &rest[4..];
    if rest.len() < len {
        return Err(JawsError::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&rest[..len])?;
    let payload = &rest[len..];
    let expected: usize = header.shapes().iter().map(|s| s.iter().product::<usize>()).sum();
    if payload.len() != expected * 8 {
        return Err(JawsError::Format(format!(
            "payload is {} bytes, declared shapes need {}",
            payload.len(),
            expected * 8
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, values))
}

/// Lower-case hex SHA-256.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(digest(&fs::read(path)?))
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let header = Header::Dataset(DatasetHeader {
        version: FORMAT_VERSION,
        split: ds.split,
        seed: ds.seed,
        grid: ds.grid(),
        dt: ds.dt(),
        nu_range: [ds.nu_range.0, ds.nu_range.1],
        nu: ds.trajectories.iter().map(|t| t.nu).collect(),
        substeps: ds.trajectories.iter().map(|t| t.solver_substeps).collect(),
        shapes: ds
            .trajectories
            .iter()
            .map(|t| vec![t.states.len(), t.grid()])
            .collect(),
    });
    let payload: Vec<f64> = ds
        .trajectories
        .iter()
        .flat_map(|t| t.states.iter().flat_map(|s| s.values().iter().copied()))
        .collect();
    encode(&header, &payload)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let (header, payload) = decode(bytes)?;
    let Header::Dataset(h) = header else {
        return Err(JawsError::Format("expected a dataset container, found a checkpoint".into()));
    };
    if h.nu.len() != h.shapes.len() || h.substeps.len() != h.shapes.len() {
        return Err(JawsError::Format("per-trajectory metadata lengths disagree".into()));
    }
    let mut offset = 0;
    let mut trajectories = Vec::with_capacity(h.shapes.len());
    for (i, shape) in h.shapes.iter().enumerate() {
        let [states, grid] = shape[..] else {
            return Err(JawsError::Format(format!("trajectory {i} shape must be [states, grid]")));
        };
        if grid != h.grid {
            return Err(JawsError::Format(format!("trajectory {i} grid {grid} != {}", h.grid)));
        }
        let fields = (0..states)
            .map(|s| {
                let start = offset + s * grid;
                Field::new(payload[start..start + grid].to_vec())
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| JawsError::Format(format!("trajectory {i}: {e}")))?;
        offset += states * grid;
        trajectories.push(Trajectory::new(fields, h.nu[i], h.dt, h.substeps[i])?);
    }
    Dataset::new(trajectories, h.split, h.seed, (h.nu_range[0], h.nu_range[1]))
}

/// Writes the dataset and returns the file digest.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<String> {
    let bytes = encode_dataset(ds)?;
    fs::write(path, &bytes)?;
    Ok(digest(&bytes))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

pub fn encode_checkpoint(params: &ModelParams, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    params.validate()?;
    let header = Header::Checkpoint(CheckpointHeader {
        version: FORMAT_VERSION,
        arch: params.arch,
        manifest: params.arch.manifest(),
        shapes: vec![vec![params.theta.len()], vec![params.phi.len()], vec![1]],
        method: meta.method,
        seed: meta.seed,
        dataset_digest: meta.dataset_digest.clone(),
    });
    encode(&header, &params.flat())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, CheckpointMeta)> {
    let (header, payload) = decode(bytes)?;
    let Header::Checkpoint(h) = header else {
        return Err(JawsError::Format("expected a checkpoint container, found a dataset".into()));
    };
    let sizes = h.arch.layout().sizes;
    let declared: Vec<usize> = h.shapes.iter().map(|s| s.iter().product()).collect();
    if declared != [sizes.theta, sizes.phi, 1] {
        return Err(JawsError::ArchMismatch(format!(
            "architecture needs theta={}, phi={}, s1=1; header declares {declared:?}",
            sizes.theta, sizes.phi
        )));
    }
    if h.manifest != h.arch.manifest() {
        return Err(JawsError::ArchMismatch("layout manifest disagrees with architecture".into()));
    }
    let mut params = ModelParams {
        arch: h.arch,
        theta: vec![0.0; sizes.theta],
        phi: vec![0.0; sizes.phi],
        s1: 0.0,
    };
    params.set_flat(&payload);
    params.validate()?;
    Ok((
        params,
        CheckpointMeta {
            method: h.method,
            seed: h.seed,
            dataset_digest: h.dataset_digest,
        },
    ))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<String> {
    let bytes = encode_checkpoint(params, meta)?;
    fs::write(path, &bytes)?;
    Ok(digest(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    decode_checkpoint(&fs::read(path)?)
}
