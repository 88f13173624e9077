//! The dual-stream rating model: configuration, network, training and
//! checkpoints.

mod checkpoint;
mod config;
mod data;
mod net;
mod ratings;
mod train;

pub use checkpoint::{Model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{GruOutput, ResNetSpec, StageSpec, VibNetConfig};
pub use data::{Normalization, Sample};
pub use net::{BnBuffer, ForwardOutput, Mode, VibNet};
pub use ratings::{RatingTriple, DIMENSIONS, RATING_MAX, RATING_MIN};
pub use train::{
    cross_validate, cross_validate_grouped, evaluate, fit, predict_samples, CvResult, EpochLog, FoldReport,
    TrainConfig, TrainingLog,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Real, Tape};
use crate::tacton::Waveform;
use crate::Result;

/// Raw network outputs and their clamped view on the rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw: RatingTriple,
    pub clamped: RatingTriple,
}

/// A network with the input normalization it was trained with, its
/// optimizer state and its training log.
#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub net: VibNet<T>,
    pub norm: Normalization,
    pub optimizer: Adam<T>,
    pub log: TrainingLog,
}

impl<T: Real> TrainedModel<T> {
    /// Untrained model with identity normalization.
    pub fn untrained(config: &VibNetConfig) -> Result<Self> {
        let net = VibNet::build(config)?;
        let optimizer = Adam::new(Default::default(), net.params());
        Ok(Self {
            norm: Normalization::identity(config.input_channels()),
            net,
            optimizer,
            log: TrainingLog::default(),
        })
    }

    pub fn config(&self) -> &VibNetConfig {
        self.net.config()
    }

    /// Zero-pads a 1 kHz waveform, computes its spectrograms and runs the
    /// network in evaluation mode.
    pub fn predict(&self, w: &Waveform) -> Result<Prediction> {
        let cfg = self.net.config();
        let sample = Sample {
            id: String::new(),
            waveform: w.clone(),
            spectrogram: None,
            ratings: RatingTriple::new(0.0, 0.0, 0.0),
        };
        let (wave, spec) = data::normalized_inputs::<T>(&sample, &cfg.channels, cfg.input_len, &self.norm)?;
        let tape = Tape::new();
        let y = self.net.forward(&tape, &wave, &spec, &mut Mode::Eval)?.output.value();
        let raw = RatingTriple::new(y.data()[0].as_f64(), y.data()[1].as_f64(), y.data()[2].as_f64());
        Ok(Prediction {
            raw,
            clamped: raw.clamped(),
        })
    }
}
