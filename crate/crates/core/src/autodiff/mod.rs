//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records each op's output together with a closure that maps the
//! output gradient to input gradients. [`Tape::backward`] replays those
//! closures in reverse creation order and then frees the tape.

mod conv;
pub mod gradcheck;
mod gru;
pub mod linalg;
pub mod ops;
mod optim;
mod param;
mod real;
mod tape;
mod tensor;

pub use conv::{avgpool2d, batchnorm2d, conv2d, global_avg_pool, maxpool2d, BatchStats, BnMode};
pub use gru::gru;
pub use optim::{adam_step, Adam, AdamConfig};
pub use param::{ParamId, ParamStore};
pub use real::{Dtype, Real};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Tensor, TensorDump};
