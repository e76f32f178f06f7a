//! Minimal reverse-mode autodiff over 2-D tensors with the layers,
//! optimizers and learning-rate schedules needed to train small speech
//! models on a CPU.

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod real;
mod schedule;
mod tensor;
pub mod train;

pub use error::NnError;
pub use graph::{Gradients, Graph, Im2Col, Unfold, Var};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{Builder, Init, Param, ParamGrads, ParamId, ParamStore};
pub use real::{matmul, Real};
pub use schedule::LrSchedule;
pub use tensor::Tensor;

/// Seeded generator used across the workspace.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    <Rng as rand::SeedableRng>::seed_from_u64(seed)
}

/// Derive a child seed from a parent seed and a label, e.g. an utterance id.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]])
}
