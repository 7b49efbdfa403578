//! Core library for the spiking distillation pipeline: a small dense tensor
//! engine with reverse-mode autodiff, leaky integrate-and-fire dynamics with
//! surrogate-gradient training, the MiniPong environment, DQN teacher
//! training, teacher-to-student distillation, firing-rate coding analysis,
//! and a compact binary model format.

pub mod coding;
pub mod env;
pub mod error;
pub mod model_io;
pub mod network;
pub mod reference;
pub mod snn;
pub mod distill;
pub mod replay;
pub mod stats;
pub mod teacher;
pub mod tensor;

pub use error::{Result, SdnError};
pub use tensor::Tensor;
