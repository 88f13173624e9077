use std::f64::consts::PI;

use super::resample::downsample;
use super::spec::{validate, Breakpoint, TactonSpec, DEFAULT_DEVICE_GAIN_G, PULSE_SLOT_S};
use super::waveform::{Units, Waveform, CAPTURE_RATE_HZ, PIPELINE_RATE_HZ};
use crate::Result;

/// Renders `spec` at `sample_rate` in normalized amplitude units.
///
/// Sample `k` sits at `t = k / sample_rate` and equals `E(t) sin(φ(t))` with
/// `φ(t) = 2π ∫ F`. Constant-carrier variants use `φ = 2π f_c t` directly;
/// complex tracks are linearly interpolated and the phase integrated with the
/// trapezoidal rule on the sample grid.
pub fn synthesize(spec: &TactonSpec, sample_rate: u32) -> Result<Waveform> {
    validate(spec).into_result()?;
    let fs = sample_rate as f64;
    let samples = match spec {
        TactonSpec::Sinusoidal {
            amplitude,
            carrier_freq,
            envelope_freq,
            duration,
        } => {
            let n = (duration * fs).round() as usize;
            (0..n)
                .map(|k| {
                    let t = k as f64 / fs;
                    let env = if *envelope_freq == 0.0 {
                        *amplitude
                    } else {
                        amplitude * (2.0 * PI * envelope_freq * t).sin().abs()
                    };
                    env * (2.0 * PI * carrier_freq * t).sin()
                })
                .collect()
        }
        TactonSpec::Rhythmic {
            amplitude,
            carrier_freq,
            pulses,
        } => {
            let n = slot_boundary(pulses.len(), fs);
            let mut out = vec![0.0; n];
            for (slot, &on) in pulses.iter().enumerate() {
                if on == 0 {
                    continue;
                }
                for (k, s) in out
                    .iter_mut()
                    .enumerate()
                    .take(slot_boundary(slot + 1, fs))
                    .skip(slot_boundary(slot, fs))
                {
                    let t = k as f64 / fs;
                    *s = amplitude * (2.0 * PI * carrier_freq * t).sin();
                }
            }
            out
        }
        TactonSpec::Complex {
            envelope_track,
            frequency_track,
            duration,
        } => {
            let n = (duration * fs).round() as usize;
            let dt = 1.0 / fs;
            let mut out = Vec::with_capacity(n);
            let mut phase = 0.0;
            let mut prev_f = interpolate(frequency_track, 0.0);
            for k in 0..n {
                let t = k as f64 / fs;
                let f = interpolate(frequency_track, t);
                if k > 0 {
                    phase += PI * (prev_f + f) * dt;
                }
                prev_f = f;
                out.push(interpolate(envelope_track, t) * phase.sin());
            }
            out
        }
    };
    Ok(Waveform::from_parts_unchecked(samples, sample_rate, Units::Normalized))
}

/// Synthesizes and converts to acceleration with `gain` G per unit amplitude.
pub fn render(spec: &TactonSpec, sample_rate: u32, gain: f64) -> Result<Waveform> {
    Ok(synthesize(spec, sample_rate)?.to_acceleration(gain))
}

/// Renders at the capture rate with the default device gain and downsamples
/// to the pipeline rate, the path every synthetic waveform takes.
pub fn render_pipeline(spec: &TactonSpec) -> Result<Waveform> {
    downsample(&render(spec, CAPTURE_RATE_HZ, DEFAULT_DEVICE_GAIN_G)?, PIPELINE_RATE_HZ)
}

/// First sample index of pulse slot `k` (nearest-sample rounding).
pub fn slot_boundary(k: usize, fs: f64) -> usize {
    (k as f64 * PULSE_SLOT_S * fs).round() as usize
}

/// Piecewise-linear track value at `t`, held constant outside the breakpoints.
pub fn interpolate(track: &[Breakpoint], t: f64) -> f64 {
    match track {
        [] => 0.0,
        [only] => only.value(),
        _ => {
            if t <= track[0].t() {
                return track[0].value();
            }
            let last = track[track.len() - 1];
            if t >= last.t() {
                return last.value();
            }
            let i = track.partition_point(|b| b.t() <= t);
            let (a, b) = (track[i - 1], track[i]);
            let u = (t - a.t()) / (b.t() - a.t());
            a.value() + u * (b.value() - a.value())
        }
    }
}
