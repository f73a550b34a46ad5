//! Checkpoint files: JSON holding the full trainer state plus a tensor index
//! describing the row-major weight layout.

use std::fs;
use std::path::Path;

use graspweb_core::ppo::{Mlp, TrainerConfig, TrainerState};
use graspweb_core::web::GraspType;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const CHECKPOINT_MAGIC: &str = "graspweb-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Location of one weight or bias tensor inside a network's flat parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    /// `[out, in]` for weights (row-major), `[out]` for biases.
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub config_hash: String,
    pub grasp: GraspType,
    pub trainer: TrainerConfig,
    pub tensors: Vec<TensorInfo>,
    pub state: TrainerState,
}

#[derive(Deserialize)]
struct Header {
    magic: String,
    version: u32,
}

fn tensor_index(prefix: &str, mlp: &Mlp) -> Vec<TensorInfo> {
    let mut out = Vec::new();
    for (i, ((w, b), sizes)) in mlp.layer_offsets().into_iter().zip(mlp.sizes.windows(2)).enumerate() {
        out.push(TensorInfo {
            name: format!("{prefix}.{i}.weight"),
            shape: vec![sizes[1], sizes[0]],
            offset: w,
        });
        out.push(TensorInfo {
            name: format!("{prefix}.{i}.bias"),
            shape: vec![sizes[1]],
            offset: b,
        });
    }
    out
}

impl Checkpoint {
    pub fn new(state: TrainerState, trainer: TrainerConfig, grasp: GraspType, config_hash: String) -> Self {
        let mut tensors = tensor_index("policy", &state.network.policy);
        tensors.extend(tensor_index("value", &state.network.value));
        Self {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            config_hash,
            grasp,
            trainer,
            tensors,
            state,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        // write then rename so an interrupted save never leaves a torn file
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, Error> {
        let corrupt = |message: String| Error::CorruptCheckpoint {
            path: path.display().to_string(),
            message,
        };
        let header: Header = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if header.magic != CHECKPOINT_MAGIC {
            return Err(corrupt(format!("unexpected magic `{}`", header.magic)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersionMismatch {
                path: path.display().to_string(),
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let n = &ck.state.network;
        if ck.tensors != Self::new(ck.state.clone(), ck.trainer.clone(), ck.grasp, String::new()).tensors
            || n.policy.params.len() != Mlp::param_count(&n.policy.sizes)
            || n.value.params.len() != Mlp::param_count(&n.value.sizes)
        {
            return Err(corrupt("tensor shapes do not match the stored parameters".into()));
        }
        Ok(ck)
    }
}
