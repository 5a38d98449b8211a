//! Checkpointing: a binary parameter archive plus a JSON metadata sidecar.
//!
//! `<base>.bin` holds every parameter tensor followed by the Adam first and
//! second moments, all little-endian f64 in the model's parameter visiting
//! order. `<base>.json` records shapes, configs and training position, so a
//! restored state resumes schedules where it left off and reproduces
//! forward passes bit-for-bit.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, ModelBundle};

use super::adam::{Adam, AdamConfig};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"KWCK";

/// Training position stored alongside the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub global_step: usize,
    pub best_val_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format_version: u32,
    encoder: EncoderConfig,
    n_classes: usize,
    proj_dim: usize,
    input_frames: usize,
    input_mels: usize,
    adam: AdamConfig,
    adam_t: u64,
    state: TrainState,
    params: Vec<ParamMeta>,
}

pub fn checkpoint_paths(base: &Path) -> (PathBuf, PathBuf) {
    let mut bin = base.as_os_str().to_owned();
    bin.push(".bin");
    let mut json = base.as_os_str().to_owned();
    json.push(".json");
    (PathBuf::from(bin), PathBuf::from(json))
}

pub fn save_checkpoint(
    model: &mut ModelBundle,
    adam: &Adam,
    state: &TrainState,
    base: &Path,
) -> Result<()> {
    let mut params = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    model.visit_params(&mut |p| {
        params.push(ParamMeta {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
        });
        for v in p.value.iter() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    });
    for bank in [&adam.m, &adam.v] {
        for arr in bank {
            for v in arr.iter() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        encoder: model.encoder_cfg.clone(),
        n_classes: model.n_classes,
        proj_dim: model.proj_dim,
        input_frames: model.input_shape.0,
        input_mels: model.input_shape.1,
        adam: adam.cfg,
        adam_t: adam.t,
        state: *state,
        params,
    };
    let (bin_path, json_path) = checkpoint_paths(base);
    fs::File::create(&bin_path)
        .and_then(|mut f| f.write_all(&blob))
        .map_err(|e| Error::io(&bin_path, e))?;
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

pub fn load_checkpoint(base: &Path) -> Result<(ModelBundle, Adam, TrainState)> {
    let (bin_path, json_path) = checkpoint_paths(base);
    let meta_text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if meta.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} has format version {}, this build reads version {CHECKPOINT_VERSION}",
            json_path.display(),
            meta.format_version
        )));
    }

    let mut file = fs::File::open(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut blob = Vec::new();
    file.read_to_end(&mut blob).map_err(|e| Error::io(&bin_path, e))?;
    if blob.len() < 8 || &blob[0..4] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint archive",
            bin_path.display()
        )));
    }
    let bin_version = u32::from_le_bytes(blob[4..8].try_into().unwrap());
    if bin_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "archive {} has format version {bin_version}, this build reads version {CHECKPOINT_VERSION}",
            bin_path.display()
        )));
    }

    let mut model = ModelBundle::new(
        &meta.encoder,
        meta.n_classes,
        meta.proj_dim,
        (meta.input_frames, meta.input_mels),
        meta.state.seed,
    )?;
    let mut adam = Adam::new(&mut model, meta.adam);
    adam.t = meta.adam_t;

    // Cross-check recorded shapes against the rebuilt model.
    let mut expected = Vec::new();
    model.visit_params(&mut |p| expected.push((p.name.clone(), p.value.shape().to_vec())));
    if expected.len() != meta.params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint lists {} parameters, model has {}",
            meta.params.len(),
            expected.len()
        )));
    }
    for (got, want) in meta.params.iter().zip(&expected) {
        if got.name != want.0 || got.shape != want.1 {
            return Err(Error::Checkpoint(format!(
                "parameter mismatch: checkpoint has {} {:?}, model expects {} {:?}",
                got.name, got.shape, want.0, want.1
            )));
        }
    }

    let n_params: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let expected_bytes = 8 + 3 * n_params * 8;
    if blob.len() != expected_bytes {
        return Err(Error::Checkpoint(format!(
            "archive {} has {} bytes, expected {expected_bytes}",
            bin_path.display(),
            blob.len()
        )));
    }

    let mut cursor = 8usize;
    let mut take = |len: usize| -> Vec<f64> {
        let vals: Vec<f64> = blob[cursor..cursor + len * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += len * 8;
        vals
    };
    model.visit_params(&mut |p| {
        let vals = take(p.value.len());
        p.value = ArrayD::from_shape_vec(IxDyn(p.value.shape()), vals).unwrap();
    });
    for bank in [&mut adam.m, &mut adam.v] {
        for arr in bank.iter_mut() {
            let vals = take(arr.len());
            *arr = ArrayD::from_shape_vec(IxDyn(arr.shape()), vals).unwrap();
        }
    }

    Ok((model, adam, meta.state))
}
