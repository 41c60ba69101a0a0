use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{gru_step, Dense, DenseVars, GruCellParams, GruVars, GRU_TENSOR_NAMES};
use super::policy::{LOG_STD_MAX, LOG_STD_MIN};
use super::tape::{Gradients, Tape, Var};
use super::tensor::{Parameterized, Tensor};
use crate::env::RlState;
use crate::error::{Error, Result};

/// Fixed divisors bringing `[Kc, τ_I, τ_D, e, ∫e]` to order one.
pub const STATE_SCALE: [f64; 5] = [5.0, 10.0, 2.0, 2.0, 10.0];

/// Normalised inputs are clipped to this magnitude.
pub const STATE_CLIP: f64 = 10.0;

pub const ACTION_DIM: usize = 3;

pub fn normalize_state(s: &RlState) -> [f64; 5] {
    let raw = s.as_array();
    std::array::from_fn(|i| {
        let v = raw[i] / STATE_SCALE[i];
        if v.is_nan() {
            0.0
        } else {
            v.clamp(-STATE_CLIP, STATE_CLIP)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub gru1_hidden: usize,
    pub gru2_hidden: usize,
    pub fc_hidden: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
    pub init_log_std: f64,
    /// Gain applied to the final policy layer at initialisation.
    pub policy_out_gain: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            gru1_hidden: 64,
            gru2_hidden: 64,
            fc_hidden: 64,
            critic_hidden: 64,
            critic_layers: 3,
            init_log_std: -0.5,
            policy_out_gain: 0.01,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.gru1_hidden, self.gru2_hidden, self.fc_hidden, self.critic_hidden, self.critic_layers]
            .contains(&0)
        {
            return Err(Error::InvalidArgument("network sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn critic_input_dim(&self) -> usize {
        RlState::DIM + 4 + self.gru2_hidden
    }
}

/// Two stacked GRU layers followed by two dense layers producing the mean
/// of a squashed-mean Gaussian over the three parameter changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub gru1: GruCellParams,
    pub gru2: GruCellParams,
    pub fc1: Dense,
    pub fc2: Dense,
    pub log_std: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    pub mean: [f64; 3],
    pub log_std: [f64; 3],
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

impl ActorNet {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self {
            gru1: GruCellParams::zeros(RlState::DIM, cfg.gru1_hidden),
            gru2: GruCellParams::zeros(cfg.gru1_hidden, cfg.gru2_hidden),
            fc1: Dense::zeros(cfg.gru2_hidden, cfg.fc_hidden),
            fc2: Dense::zeros(cfg.fc_hidden, ACTION_DIM),
            log_std: Tensor::from_vec(&[ACTION_DIM], vec![cfg.init_log_std; ACTION_DIM]),
        }
    }

    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Self {
        Self {
            gru1: GruCellParams::init(RlState::DIM, cfg.gru1_hidden, rng),
            gru2: GruCellParams::init(cfg.gru1_hidden, cfg.gru2_hidden, rng),
            fc1: Dense::init(cfg.gru2_hidden, cfg.fc_hidden, 1.0, rng),
            fc2: Dense::init(cfg.fc_hidden, ACTION_DIM, cfg.policy_out_gain, rng),
            log_std: Tensor::from_vec(&[ACTION_DIM], vec![cfg.init_log_std; ACTION_DIM]),
        }
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.gru1.hidden_dim(), self.gru2.hidden_dim())
    }

    pub fn initial_hidden(&self) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.hidden_sizes();
        (vec![0.0; a], vec![0.0; b])
    }

    pub fn clamped_log_std(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.log_std.data[i].clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    /// One step of the recurrent policy.
    pub fn forward(&self, s: &[f64; 5], h1: &[f64], h2: &[f64]) -> Result<ActorOutput> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("actor input"));
        }
        let h1 = gru_step(&self.gru1, s, h1)?;
        let h2 = gru_step(&self.gru2, &h1, h2)?;
        let a = self.fc1.forward(&h2)?.into_iter().map(f64::tanh).collect::<Vec<_>>();
        let m = self.fc2.forward(&a)?;
        Ok(ActorOutput {
            mean: std::array::from_fn(|i| m[i].tanh()),
            log_std: self.clamped_log_std(),
            h1,
            h2,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> ActorVars {
        ActorVars {
            gru1: self.gru1.bind(tape),
            gru2: self.gru2.bind(tape),
            fc1: self.fc1.bind(tape),
            fc2: self.fc2.bind(tape),
            log_std: tape.leaf(self.log_std.data.clone()),
        }
    }

    pub fn check_config(&self, cfg: &NetworkConfig) -> Result<()> {
        let expected = Self::zeros(cfg);
        for ((name, a), b) in self.named_tensors().into_iter().zip(expected.tensors()) {
            if a.shape != b.shape {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: checkpoint {:?}, config {:?}",
                    a.shape, b.shape
                )));
            }
        }
        Ok(())
    }
}

impl Parameterized for ActorNet {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (layer, cell) in [("gru1", &self.gru1), ("gru2", &self.gru2)] {
            for (n, t) in GRU_TENSOR_NAMES.iter().zip(cell.tensors()) {
                out.push((format!("actor.{layer}.{n}"), t));
            }
        }
        for (layer, d) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            let [w, b] = d.tensors();
            out.push((format!("actor.{layer}.weight"), w));
            out.push((format!("actor.{layer}.bias"), b));
        }
        out.push(("actor.log_std".into(), &self.log_std));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.gru1.tensors_mut());
        out.extend(self.gru2.tensors_mut());
        out.extend(self.fc1.tensors_mut());
        out.extend(self.fc2.tensors_mut());
        out.push(&mut self.log_std);
        out
    }
}

/// An [`ActorNet`] placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ActorVars {
    pub gru1: GruVars,
    pub gru2: GruVars,
    pub fc1: DenseVars,
    pub fc2: DenseVars,
    pub log_std: Var,
}

pub struct ActorStepVars {
    pub mean: Var,
    pub h1: Var,
    pub h2: Var,
}

impl ActorVars {
    /// Parameter handles in [`Parameterized`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        v.extend(self.gru1.vars());
        v.extend(self.gru2.vars());
        v.extend(self.fc1.vars());
        v.extend(self.fc2.vars());
        v.push(self.log_std);
        v
    }

    pub fn clamped_log_std(&self, tape: &mut Tape) -> Var {
        tape.clamp(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn step(&self, tape: &mut Tape, s: Var, h1: Var, h2: Var) -> ActorStepVars {
        let h1 = self.gru1.step(tape, s, h1);
        let h2 = self.gru2.step(tape, h1, h2);
        let a = self.fc1.forward(tape, h2);
        let a = tape.tanh(a);
        let m = self.fc2.forward(tape, a);
        let mean = tape.tanh(m);
        ActorStepVars { mean, h1, h2 }
    }

    /// Gradient container shaped like `template`.
    pub fn gradient(&self, template: &ActorNet, grads: &Gradients) -> ActorNet {
        collect_gradient(template, &self.vars(), grads)
    }
}

pub(crate) fn collect_gradient<M: Parameterized + Clone>(template: &M, vars: &[Var], grads: &Gradients) -> M {
    let mut out = template.clone();
    for (t, v) in out.tensors_mut().into_iter().zip(vars) {
        t.data = grads.wrt(*v);
    }
    out
}
