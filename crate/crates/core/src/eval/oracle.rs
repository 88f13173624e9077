//! Deterministic stand-in for human ratings, used to verify that the model
//! can learn perceptually shaped targets. Its constants are fixed artifact
//! definitions (version [`ORACLE_VERSION`]).

use serde::{Deserialize, Serialize};

use crate::dsp::{mechano_spectrograms, ChannelSet, FilterKind, Sos, SpectrogramStack};
use crate::model::RatingTriple;
use crate::tacton::{render_pipeline, TactonSpec, Units, Waveform, DEFAULT_DEVICE_GAIN_G, PIPELINE_RATE_HZ};
use crate::{Error, Result};

pub const ORACLE_VERSION: u32 = 1;
pub const ENVELOPE_CUTOFF_HZ: f64 = 20.0;
pub const ENVELOPE_FILTER_ORDER: usize = 4;
pub const ENVELOPE_INDEX_CLAMP: f64 = 1.5;
pub const CENTROID_REFERENCE_HZ: f64 = 500.0;

/// Normalized signal descriptors the oracle ratings are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleFeatures {
    /// Envelope modulation index in [0, 1].
    pub e: f64,
    /// Spectral centroid over 500 Hz.
    pub s: f64,
    /// RMS over the device peak acceleration.
    pub m: f64,
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Rectified, 20 Hz low-passed envelope.
pub(crate) fn smooth_envelope(w: &Waveform) -> Result<Vec<f64>> {
    let rect: Vec<f64> = w.samples().iter().map(|v| v.abs()).collect();
    if rect.len() < 2 {
        return Ok(rect);
    }
    let lp = Sos::butterworth(
        FilterKind::Lowpass,
        ENVELOPE_FILTER_ORDER,
        ENVELOPE_CUTOFF_HZ,
        w.sample_rate() as f64,
    )?;
    Ok(lp.filtfilt(&rect))
}

pub fn oracle_features(w: &Waveform) -> Result<OracleFeatures> {
    if w.sample_rate() != PIPELINE_RATE_HZ {
        return Err(Error::SampleRate {
            expected: PIPELINE_RATE_HZ,
            actual: w.sample_rate(),
        });
    }
    let env = smooth_envelope(w)?;
    let n = env.len() as f64;
    let mean = env.iter().sum::<f64>() / n.max(1.0);
    let e = if env.is_empty() || mean <= 0.0 {
        0.0
    } else {
        let sd = (env.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        (sd / mean).clamp(0.0, ENVELOPE_INDEX_CLAMP) / ENVELOPE_INDEX_CLAMP
    };

    let spec = mechano_spectrograms(w, &ChannelSet::single())?;
    let [_, bins, frames] = spec.shape();
    let mag = spec.channel(0);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..bins {
        let avg = mag[k * frames..(k + 1) * frames].iter().sum::<f64>() / frames as f64;
        num += SpectrogramStack::bin_hz(k) * avg;
        den += avg;
    }
    let s = if den > 0.0 {
        num / den / CENTROID_REFERENCE_HZ
    } else {
        0.0
    };

    let peak = match w.units() {
        Units::G => DEFAULT_DEVICE_GAIN_G,
        Units::Normalized => 1.0,
    };
    let m = w.rms() / peak;
    Ok(OracleFeatures { e, s, m })
}

pub fn oracle_ratings(f: OracleFeatures) -> RatingTriple {
    let roughness = 100.0 * clip01(0.6 * f.e + 0.4 * (1.0 - f.s));
    let arousal = 100.0 * clip01(0.5 * f.e + 0.3 * f.m + 0.2 * (1.0 - f.s));
    let valence = 100.0 * clip01(1.0 - 0.7 * (arousal / 100.0) - 0.3 * f.e);
    RatingTriple::new(roughness, valence, arousal)
}

/// Oracle ratings of a 1 kHz waveform.
pub fn synthetic_oracle(w: &Waveform) -> Result<RatingTriple> {
    Ok(oracle_ratings(oracle_features(w)?))
}

/// Renders a spec at the capture rate with the device gain, downsamples it
/// to the pipeline rate and labels it.
pub fn render_and_label(spec: &TactonSpec) -> Result<(Waveform, RatingTriple)> {
    let w = render_pipeline(spec)?;
    let r = synthetic_oracle(&w)?;
    Ok((w, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_waveform() {
        let w = Waveform::zeros(1500, 1000, Units::G);
        let f = oracle_features(&w).unwrap();
        assert_eq!((f.e, f.s, f.m), (0.0, 0.0, 0.0));
        let r = synthetic_oracle(&w).unwrap();
        assert_eq!(r, RatingTriple::new(40.0, 86.0, 20.0));
    }
}
