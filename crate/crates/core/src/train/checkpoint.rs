//! Checkpoint file: the named-tensor container holding every parameter and
//! the Adam moments (`adam.m/<name>`, `adam.v/<name>`), followed by a `u64`
//! little-endian length and a JSON trailer with the configuration, step
//! counter and optimizer constants.

use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamHyper};
use super::{TrainConfig, TrainError};
use crate::autodiff::{read_tensors, write_tensors, TensorMap};
use crate::pipeline::Model;

const FORMAT_VERSION: u32 = 1;
const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Model,
    pub adam: Adam,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    format: u32,
    step: u64,
    adam_step: u64,
    adam: AdamHyper,
    config: TrainConfig,
}

fn bad(reason: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(reason.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, TrainError> {
        let mut all = self.model.params.clone();
        for (prefix, map) in [(M_PREFIX, &self.adam.m), (V_PREFIX, &self.adam.v)] {
            all.extend(map.iter().map(|(k, t)| (format!("{prefix}{k}"), t.clone())));
        }
        let mut out = Vec::new();
        write_tensors(&mut out, &all).map_err(|e| bad(e.to_string()))?;
        let trailer = Trailer {
            format: FORMAT_VERSION,
            step: self.step,
            adam_step: self.adam.step,
            adam: self.adam.hyper,
            config: self.config.clone(),
        };
        let json = serde_json::to_vec_pretty(&trailer).map_err(|e| bad(e.to_string()))?;
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut cur = Cursor::new(bytes);
        let all = read_tensors(&mut cur).map_err(|e| bad(e.to_string()))?;
        let mut len = [0u8; 8];
        cur.read_exact(&mut len).map_err(|_| bad("missing metadata trailer"))?;
        let len = u64::from_le_bytes(len);
        let rest = &bytes[cur.position() as usize..];
        if rest.len() as u64 != len {
            return Err(bad(format!("metadata trailer is {} bytes, header says {len}", rest.len())));
        }
        let trailer: Trailer = serde_json::from_slice(rest).map_err(|e| bad(format!("metadata: {e}")))?;
        if trailer.format != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", trailer.format)));
        }
        let (mut params, mut m, mut v) = (TensorMap::new(), TensorMap::new(), TensorMap::new());
        for (name, t) in all {
            if let Some(n) = name.strip_prefix(M_PREFIX) {
                m.insert(n.to_string(), t);
            } else if let Some(n) = name.strip_prefix(V_PREFIX) {
                v.insert(n.to_string(), t);
            } else {
                params.insert(name, t);
            }
        }
        let model = Model::from_params(trailer.config.pipeline, params)?;
        let adam = Adam { hyper: trailer.adam, step: trailer.adam_step, m, v };
        Ok(Self { config: trailer.config, model, adam, step: trailer.step })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
