pub mod autograd;
pub mod error;
pub mod params;
pub mod scalar;
pub mod corpus;
pub mod transformer;
pub mod optim;
pub mod generation;
pub mod concvae;
pub mod classifiers;
pub mod seq2seq;
pub mod interaction;
pub mod metrics;
pub mod model;
pub mod checkpoint;
pub mod train;
pub mod evaluate;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{Architecture, Model, ModelKind};

pub type ModelF32 = model::Model<f32>;
pub type ModelF64 = model::Model<f64>;
pub type CheckpointF32 = checkpoint::Checkpoint<f32>;
pub type CheckpointF64 = checkpoint::Checkpoint<f64>;
