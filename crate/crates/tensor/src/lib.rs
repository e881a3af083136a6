//! Minimal dense tensor library with reverse-mode automatic differentiation,
//! the Adam optimizer and global-norm gradient clipping.

mod bilinear;
mod error;
pub mod gradcheck;
mod init;
mod optim;
mod params;
mod tape;
mod tensor;

pub use bilinear::{bilinear, bilinear_label};
pub use error::{Result, TensorError};
pub use init::dropout_mask;
pub use optim::{clip_gradients, AdamConfig, AdamState};
pub use params::{ParamGrads, ParamId, ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{argmax, Tensor};
