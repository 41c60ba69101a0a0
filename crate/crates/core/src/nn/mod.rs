//! Minimal differentiable compute core for the recurrent actor and the
//! privileged critic.

pub mod actor;
pub mod checkpoint;
pub mod critic;
pub mod layers;
pub mod policy;
pub mod tape;
pub mod tensor;

pub use actor::{normalize_state, ActorNet, ActorOutput, ActorVars, NetworkConfig};
pub use checkpoint::{Checkpoint, TensorRecord, FORMAT_VERSION};
pub use critic::{critic_forward, CriticNet, CriticVars};
pub use layers::{gru_step, Dense, GruCellParams};
pub use policy::{gaussian_entropy, gaussian_log_prob, policy_sample};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Parameterized, Tensor};
