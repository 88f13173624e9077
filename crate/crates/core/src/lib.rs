//! Vibrotactile icon (Tacton) toolkit: parametric synthesis, perceptually
//! bounded augmentation, mechanoreceptive spectrograms and a dual-stream
//! recurrent/residual network that rates roughness, valence and arousal on a
//! 0-100 scale.

pub mod augment;
pub mod autodiff;
pub mod dsp;
mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod tacton;

pub use error::{Error, Result};
