use rand::Rng;

use super::actor::{collect_gradient, NetworkConfig};
use super::layers::{Dense, DenseVars};
use super::tape::{Gradients, Tape, Var};
use super::tensor::{Parameterized, Tensor};
use crate::env::PrivilegedVector;
use crate::error::{Error, Result};

/// Feedforward value network over `[state ∥ task parameters ∥ deep hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    /// Hidden tanh layers followed by a linear scalar output layer.
    pub layers: Vec<Dense>,
}

impl CriticNet {
    fn dims(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(cfg.critic_layers + 1);
        let mut input = cfg.critic_input_dim();
        for _ in 0..cfg.critic_layers {
            dims.push((input, cfg.critic_hidden));
            input = cfg.critic_hidden;
        }
        dims.push((input, 1));
        dims
    }

    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self {
            layers: Self::dims(cfg).into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
        }
    }

    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Self {
        Self {
            layers: Self::dims(cfg)
                .into_iter()
                .map(|(i, o)| Dense::init(i, o, 1.0, rng))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn input(s: &[f64; 5], privileged: &PrivilegedVector) -> Vec<f64> {
        let mut x = Vec::with_capacity(9 + privileged.deep_hidden.len());
        x.extend_from_slice(s);
        x.extend_from_slice(&privileged.task_array());
        x.extend_from_slice(&privileged.deep_hidden);
        x
    }

    pub fn forward(&self, s: &[f64; 5], privileged: &PrivilegedVector) -> Result<f64> {
        let x = Self::input(s, privileged);
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "critic input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let (last, hidden) = self.layers.split_last().expect("critic has an output layer");
        let mut a = x;
        for layer in hidden {
            a = layer.forward(&a)?.into_iter().map(f64::tanh).collect();
        }
        Ok(last.forward(&a)?[0])
    }

    pub fn bind(&self, tape: &mut Tape) -> CriticVars {
        CriticVars {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    pub fn check_config(&self, cfg: &NetworkConfig) -> Result<()> {
        let expected = Self::zeros(cfg);
        if expected.layers.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "critic has {} layers, config expects {}",
                self.layers.len(),
                expected.layers.len()
            )));
        }
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

/// Free-function form of [`CriticNet::forward`].
pub fn critic_forward(critic: &CriticNet, s: &[f64; 5], privileged: &PrivilegedVector) -> Result<f64> {
    critic.forward(s, privileged)
}

impl Parameterized for CriticNet {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let [w, b] = l.tensors();
                [(format!("critic.l{i}.weight"), w), (format!("critic.l{i}.bias"), b)]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

pub struct CriticVars {
    pub layers: Vec<DenseVars>,
}

impl CriticVars {
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| l.vars()).collect()
    }

    /// `x` is the concatenated critic input; callers detach the deep hidden
    /// part so no gradient reaches the actor through this path.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let (last, hidden) = self.layers.split_last().expect("critic has an output layer");
        let mut a = x;
        for layer in hidden {
            let z = layer.forward(tape, a);
            a = tape.tanh(z);
        }
        last.forward(tape, a)
    }

    pub fn gradient(&self, template: &CriticNet, grads: &Gradients) -> CriticNet {
        collect_gradient(template, &self.vars(), grads)
    }
}
