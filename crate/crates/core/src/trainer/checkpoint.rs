use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use rgbt_tensor::{Scalar, Tensor};

use crate::model::{Model, ModelConfig};
use crate::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointStage {
    Stage1,
    Stage2,
    Joint,
}

/// Position of the data-order generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// Named parameter tensors plus the metadata needed to resume or evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct StageCheckpoint<T> {
    pub model: ModelConfig,
    pub stage: CheckpointStage,
    pub config_hash: String,
    pub rng_state: RngState,
    /// Optimizer steps taken so far across all stages.
    pub step: usize,
    pub params: Vec<(String, Tensor<T>)>,
}

fn ckpt_err(msg: impl Into<String>) -> CoreError {
    CoreError::Checkpoint(msg.into())
}

fn meta<'a>(map: &'a HashMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| ckpt_err(format!("metadata field {key:?} missing")))
}

/// Rewrites the JSON header with sorted keys so equal checkpoints are equal bytes.
fn canonical_header(bytes: &[u8]) -> Result<Vec<u8>> {
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + n])?;
    let mut text = serde_json::to_vec(&header)?;
    text.resize(text.len().next_multiple_of(8), b' ');
    let mut out = Vec::with_capacity(bytes.len());
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&bytes[8 + n..]);
    Ok(out)
}

/// Element type recorded in a serialized checkpoint (`"f32"` or `"f64"`).
pub fn checkpoint_dtype(bytes: &[u8]) -> Result<String> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| ckpt_err(e.to_string()))?;
    let map = header
        .metadata()
        .as_ref()
        .ok_or_else(|| ckpt_err("checkpoint has no metadata"))?;
    Ok(meta(map, "dtype")?.to_string())
}

impl<T: Scalar> StageCheckpoint<T> {
    pub fn capture(model: &Model<T>, stage: CheckpointStage, config_hash: String, rng_state: RngState, step: usize) -> Self {
        Self {
            model: model.config().clone(),
            stage,
            config_hash,
            rng_state,
            step,
            params: model
                .store
                .iter()
                .map(|(name, t, _)| (name.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies parameters into `model`. The model configuration must match;
    /// every parameter selected by `required` must be present with the right shape.
    pub fn restore_into(&self, model: &mut Model<T>, required: impl Fn(&str) -> bool) -> Result<()> {
        if &self.model != model.config() {
            return Err(ckpt_err(format!(
                "checkpoint model config {} does not match {}",
                serde_json::to_string(&self.model)?,
                serde_json::to_string(model.config())?
            )));
        }
        let lookup: HashMap<&str, &Tensor<T>> = self.params.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let ids: Vec<_> = model.store.ids().collect();
        let mut missing = Vec::new();
        for id in ids {
            let name = model.store.name(id).to_string();
            match lookup.get(name.as_str()) {
                Some(t) if t.shape() == model.store.get(id).shape() => *model.store.get_mut(id) = (*t).clone(),
                Some(t) => {
                    return Err(ckpt_err(format!(
                        "{name}: checkpoint shape {:?}, model shape {:?}",
                        t.shape(),
                        model.store.get(id).shape()
                    )))
                }
                None if required(&name) => missing.push(name),
                None => {}
            }
        }
        if !missing.is_empty() {
            return Err(ckpt_err(format!("missing parameters: {}", missing.join(", "))));
        }
        Ok(())
    }

    /// Builds a fresh model from the embedded configuration and loads every parameter.
    pub fn to_model(&self) -> Result<Model<T>> {
        let mut m = Model::new(&self.model, 0)?;
        self.restore_into(&mut m, |_| true)?;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dtype = if T::DTYPE == "f64" { Dtype::F64 } else { Dtype::F32 };
        let buffers: Vec<Vec<u8>> = self
            .params
            .iter()
            .map(|(_, t)| match dtype {
                Dtype::F64 => t.data().iter().flat_map(|v| v.as_f64().to_le_bytes()).collect(),
                _ => t.data().iter().flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect(),
            })
            .collect();
        let views = self
            .params
            .iter()
            .zip(&buffers)
            .map(|((name, t), bytes)| {
                TensorView::new(dtype, t.shape().to_vec(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| ckpt_err(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut metadata = HashMap::new();
        metadata.insert("model".to_string(), serde_json::to_string(&self.model)?);
        metadata.insert("stage".to_string(), serde_json::to_string(&self.stage)?);
        metadata.insert("config_hash".to_string(), self.config_hash.clone());
        metadata.insert("rng_state".to_string(), serde_json::to_string(&self.rng_state)?);
        metadata.insert("step".to_string(), self.step.to_string());
        metadata.insert("dtype".to_string(), T::DTYPE.to_string());
        metadata.insert(
            "order".to_string(),
            serde_json::to_string(&self.params.iter().map(|(n, _)| n).collect::<Vec<_>>())?,
        );
        let bytes = safetensors::serialize(views, Some(metadata)).map_err(|e| ckpt_err(e.to_string()))?;
        canonical_header(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| ckpt_err(e.to_string()))?;
        let map = header
            .metadata()
            .as_ref()
            .ok_or_else(|| ckpt_err("checkpoint has no metadata"))?;
        let tensors = SafeTensors::deserialize(bytes).map_err(|e| ckpt_err(e.to_string()))?;
        let order: Vec<String> = serde_json::from_str(meta(map, "order")?)?;
        let mut params = Vec::with_capacity(order.len());
        for name in order {
            let view = tensors.tensor(&name).map_err(|e| ckpt_err(format!("{name}: {e}")))?;
            let data: Vec<T> = match view.dtype() {
                Dtype::F64 => view
                    .data()
                    .chunks_exact(8)
                    .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                    .collect(),
                Dtype::F32 => view
                    .data()
                    .chunks_exact(4)
                    .map(|c| T::of(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
                    .collect(),
                other => return Err(ckpt_err(format!("{name}: unsupported dtype {other:?}"))),
            };
            let t = Tensor::from_vec(view.shape(), data).map_err(|e| ckpt_err(format!("{name}: {e}")))?;
            params.push((name, t));
        }
        Ok(Self {
            model: serde_json::from_str(meta(map, "model")?)?,
            stage: serde_json::from_str(meta(map, "stage")?)?,
            config_hash: meta(map, "config_hash")?.to_string(),
            rng_state: serde_json::from_str(meta(map, "rng_state")?)?,
            step: meta(map, "step")?
                .parse()
                .map_err(|_| ckpt_err("step is not an integer"))?,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ckpt_err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
