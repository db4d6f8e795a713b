//! A small reverse-mode differentiation engine with just enough layers to
//! train recurrent autoencoders and MLP denoisers on a CPU: dense layers,
//! LSTM cells and bidirectional stacks, layer normalisation, LeakyReLU,
//! Adam, reduce-on-plateau scheduling and a binary checkpoint format.
//!
//! Training runs in `f32`; the same code instantiated at `f64` backs the
//! finite-difference gradient checks.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod real;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Graph, NodeId, Objective, SquaredError};
pub use layers::{BiLstm, BiLstmOutput, Dense, LayerNorm, LstmDirection};
pub use optim::{minibatches, Adam, PlateauAction, TrainSchedule};
pub use params::{Param, ParamId, ParamStore};
pub use real::Real;
pub use tensor::Tensor;
