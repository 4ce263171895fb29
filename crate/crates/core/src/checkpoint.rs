//! Self-describing checkpoint container.
//!
//! Layout: `ITMC` magic, a little-endian u32 version, a u64 JSON header
//! length, the JSON header (network config echo, iteration counter,
//! optimizer hyperparameters and step count, tensor directory), then the
//! raw payload of little-endian f32 tensors in directory order. Parameters
//! come first, then the optimizer's first and second moments.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::hisn::{build_network, HisnConfig, Network};
use crate::tensor::{AdamParams, AdamState, Tensor};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"ITMC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt header: {0}")]
    BadHeader(String),
    #[error("tensor {name}: expected shape {expected:?}, found {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("header json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    count: usize,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct Header {
    hisn: HisnConfig,
    iteration: u64,
    adam: AdamParams,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

/// Write network parameters, optimizer state and the iteration counter.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    net: &Network<T>,
    state: &AdamState<T>,
    iteration: u64,
) -> Result<(), CheckpointError> {
    let mut entries = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut push = |name: String, t: &Tensor<T>, payload: &mut Vec<u8>| {
        let offset = payload.len() as u64;
        for v in t.data() {
            let f = v.to_f64().unwrap_or(0.0) as f32;
            payload.extend_from_slice(&f.to_le_bytes());
        }
        entries.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
            count: t.numel(),
        });
    };
    for (name, t) in net.store.iter() {
        push(format!("param/{name}"), t, &mut payload);
    }
    for (idx, m) in state.m.iter().enumerate() {
        push(format!("adam_m/{}", net.store.name(idx)), m, &mut payload);
    }
    for (idx, v) in state.v.iter().enumerate() {
        push(format!("adam_v/{}", net.store.name(idx)), v, &mut payload);
    }

    let header = Header {
        hisn: net.cfg,
        iteration,
        adam: state.hyper,
        adam_step: state.t,
        tensors: entries,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header_json.len() as u64).to_le_bytes())?;
    out.write_all(&header_json)?;
    out.write_all(&payload)?;
    Ok(())
}

/// Rebuild the network (from its config echo) and optimizer state.
pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(Network<T>, AdamState<T>, u64), CheckpointError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut long = [0u8; 8];
    file.read_exact(&mut long)?;
    let header_len = u64::from_le_bytes(long) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;

    let fetch = |name: &str, expected_shape: &[usize]| -> Result<Tensor<T>, CheckpointError> {
        let entry = header
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        if entry.shape != expected_shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: expected_shape.to_vec(),
                got: entry.shape.clone(),
            });
        }
        let start = entry.offset as usize;
        let end = start + entry.count * 4;
        if end > payload.len() {
            return Err(CheckpointError::BadHeader(format!(
                "tensor {name} extends past payload"
            )));
        }
        let data = payload[start..end]
            .chunks_exact(4)
            .map(|b| crate::sc::<T>(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        Ok(Tensor::new(entry.shape.clone(), data))
    };

    let mut net = build_network::<T>(header.hisn);
    let names: Vec<String> = net.store.iter().map(|(n, _)| n.to_string()).collect();
    let mut state = AdamState::new(&net.store, header.adam);
    state.t = header.adam_step;
    for (idx, name) in names.iter().enumerate() {
        let shape = net.store.get(idx).shape().to_vec();
        *net.store.get_mut(idx) = fetch(&format!("param/{name}"), &shape)?;
        state.m[idx] = fetch(&format!("adam_m/{name}"), &shape)?;
        state.v[idx] = fetch(&format!("adam_v/{name}"), &shape)?;
    }
    Ok((net, state, header.iteration))
}
