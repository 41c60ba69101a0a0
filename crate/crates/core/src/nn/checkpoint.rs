//! JSON checkpoints: `{format_version, config, tensors: [{name, shape, values}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::actor::ActorNet;
use super::critic::CriticNet;
use super::tensor::{Parameterized, Tensor};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, actor: &ActorNet, critic: &CriticNet) -> Self {
        let tensors = actor
            .named_tensors()
            .into_iter()
            .chain(critic.named_tensors())
            .map(|(name, t)| TensorRecord {
                name,
                shape: t.shape.clone(),
                values: t.data.clone(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            tensors,
        }
    }

    /// Rebuilds both networks, checking every tensor against the shapes the
    /// embedded config implies.
    pub fn networks(&self) -> Result<(ActorNet, CriticNet)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let net = &self.config.network;
        let mut actor = ActorNet::zeros(net);
        let mut critic = CriticNet::zeros(net);
        let expected = actor.num_params_tensors() + critic.tensors().len();
        if self.tensors.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {} tensors, config implies {expected}",
                self.tensors.len()
            )));
        }
        let names: Vec<String> = actor
            .named_tensors()
            .into_iter()
            .chain(critic.named_tensors())
            .map(|(n, _)| n)
            .collect();
        let mut slots: Vec<&mut Tensor> = actor.tensors_mut();
        slots.extend(critic.tensors_mut());
        for ((slot, name), rec) in slots.into_iter().zip(&names).zip(&self.tensors) {
            if &rec.name != name {
                return Err(Error::ShapeMismatch(format!("expected tensor `{name}`, found `{}`", rec.name)));
            }
            if rec.shape != slot.shape || rec.values.len() != slot.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: checkpoint shape {:?}, config shape {:?}",
                    rec.shape, slot.shape
                )));
            }
            slot.data.clone_from(&rec.values);
        }
        Ok((actor, critic))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Checkpoint(format!("at `{}`: {}", e.path(), e.inner())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

trait TensorCount {
    fn num_params_tensors(&self) -> usize;
}

impl<T: Parameterized> TensorCount for T {
    fn num_params_tensors(&self) -> usize {
        self.tensors().len()
    }
}
