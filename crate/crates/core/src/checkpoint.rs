//! Model checkpoints: one f64 `VATT` file per named parameter plus a JSON
//! header describing how to rebuild the model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::RenderShape;
use crate::error::{format_err, Error, Result};
use crate::model::{ModelState, StageTag};
use crate::nn::Parameters;
use crate::tensor_io::Tensor;
use crate::training::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub stage: StageTag,
    pub fusion: String,
    pub shape: RenderShape,
    pub config: TrainConfig,
    pub params: Vec<String>,
}

fn param_file(dir: &Path, name: &str) -> PathBuf {
    dir.join("params").join(format!("{name}.vatt"))
}

pub fn save_checkpoint(model: &ModelState, config: &TrainConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("params"))?;
    let named = model.named_params();
    for (name, p) in &named {
        Tensor::f64(p.shape.clone(), p.value.clone())?.write(param_file(dir, name))?;
    }
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        embed_dim: model.embed_dim(),
        num_classes: model.num_classes,
        stage: model.stage,
        fusion: model.fusion.kind().to_string(),
        shape: model.shape,
        config: config.clone(),
        params: named.into_iter().map(|(n, _)| n).collect(),
    };
    fs::write(dir.join(HEADER), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_header(dir: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = dir.as_ref().join(HEADER);
    if !path.exists() {
        return Err(Error::NotFound(path));
    }
    let header: CheckpointHeader =
        serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| format_err(&path, e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Incompatible(format!(
            "checkpoint version {} (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    Ok(header)
}

/// Rebuilds the model and its training config from a checkpoint directory.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelState, TrainConfig)> {
    let dir = dir.as_ref();
    let header = read_header(dir)?;
    let mut model = ModelState::new(
        &header.config.model,
        header.shape,
        header.num_classes,
        header.config.seed,
    )?;
    if model.fusion.kind() != header.fusion {
        return Err(Error::Incompatible(format!(
            "checkpoint fusion is {} but its config builds {}",
            header.fusion,
            model.fusion.kind()
        )));
    }
    let expected: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    if expected != header.params {
        return Err(Error::Incompatible(
            "checkpoint parameter names do not match the model".into(),
        ));
    }
    for (name, p) in model.named_params_mut() {
        let path = param_file(dir, &name);
        let tensor = Tensor::read(&path)?;
        if tensor.shape != p.shape {
            return Err(format_err(
                &path,
                format!("shape {:?}, expected {:?}", tensor.shape, p.shape),
            ));
        }
        p.value = tensor
            .into_f64()
            .ok_or_else(|| format_err(&path, "expected f64 data"))?;
    }
    model.stage = header.stage;
    Ok((model, header.config))
}
