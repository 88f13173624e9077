use crate::dsp::filter::{FilterKind, Sos};
use crate::{Error, Result};

use super::waveform::Waveform;

/// Anti-alias filter order used before decimation.
pub const ANTI_ALIAS_ORDER: usize = 8;
/// Anti-alias cutoff as a fraction of the target rate.
pub const ANTI_ALIAS_FRACTION: f64 = 0.45;

/// Integer-factor decimation with a zero-phase Butterworth anti-alias filter.
///
/// Output length is `ceil(len * target / source)`; sample `i` of the output is
/// filtered input sample `i * factor`.
pub fn downsample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    let source = w.sample_rate();
    if target_rate == source {
        return Ok(w.clone());
    }
    if target_rate == 0 || target_rate > source || source % target_rate != 0 {
        return Err(Error::UnsupportedRatio {
            from: source,
            to: target_rate,
        });
    }
    let factor = (source / target_rate) as usize;
    let sos = Sos::butterworth(
        FilterKind::Lowpass,
        ANTI_ALIAS_ORDER,
        ANTI_ALIAS_FRACTION * target_rate as f64,
        source as f64,
    )?;
    let filtered = sos.filtfilt(w.samples());
    let samples = filtered.into_iter().step_by(factor).collect();
    Waveform::new(samples, target_rate, w.units())
}
