//! Versioned binary weight checkpoint: magic, format version, a JSON header
//! with shapes, scalers and configuration, then little-endian `f64` weights.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::GeneratorNetwork;
use super::train::{EpochRecord, InputScalers, TrainConfig, TrainedCgm};
use super::CgmError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PCASTCGM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    config_hash: String,
    scalers: InputScalers,
    history: Vec<EpochRecord>,
    best_epoch: usize,
    layer_shapes: Vec<(usize, usize)>,
    embedding_shape: (usize, usize),
    param_count: usize,
}

pub fn config_hash(config: &TrainConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn write_checkpoint<W: Write>(model: &TrainedCgm, mut out: W) -> Result<(), CgmError> {
    let net = &model.network;
    let header = Header {
        config: model.config.clone(),
        config_hash: config_hash(&model.config),
        scalers: model.scalers.clone(),
        history: model.history.clone(),
        best_epoch: model.best_epoch,
        layer_shapes: net.ts.iter().chain(&net.delta).chain(&net.all).map(|l| l.w.dim()).collect(),
        embedding_shape: net.embedding.dim(),
        param_count: net.param_count(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for v in net.flat_params() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<TrainedCgm, CgmError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CgmError::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(CgmError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.config_hash != config_hash(&header.config) {
        return Err(CgmError::Checkpoint("configuration hash mismatch".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut network = GeneratorNetwork::new(header.config.network.clone(), &mut rng);
    let shapes: Vec<(usize, usize)> = network.ts.iter().chain(&network.delta).chain(&network.all).map(|l| l.w.dim()).collect();
    if shapes != header.layer_shapes || network.param_count() != header.param_count {
        return Err(CgmError::Checkpoint("layer shapes disagree with the configuration".into()));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != header.param_count * 8 {
        return Err(CgmError::Checkpoint(format!("{} weight bytes for {} parameters", bytes.len(), header.param_count)));
    }
    let params: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    network.set_flat_params(&params);
    Ok(TrainedCgm { network, scalers: header.scalers, config: header.config, history: header.history, best_epoch: header.best_epoch })
}

pub fn save(model: &TrainedCgm, path: &Path) -> Result<(), CgmError> {
    write_checkpoint(model, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load(path: &Path) -> Result<TrainedCgm, CgmError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}


