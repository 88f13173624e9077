//! Hand-crafted descriptors for the linear baseline.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::oracle::smooth_envelope;
use crate::tacton::Waveform;
use crate::Result;

pub const FEATURE_NAMES: [&str; 5] = ["rms", "spectral_centroid_hz", "duration_s", "modulation_depth", "peak"];
pub const N_FEATURES: usize = 5;

/// Fraction trimmed from each end before measuring modulation depth, so
/// that filter start-up and tail transients do not count as modulation.
pub const DEPTH_EDGE_TRIM: f64 = 0.1;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Centroid of the one-sided magnitude spectrum of the whole signal.
pub fn spectral_centroid(w: &Waveform) -> f64 {
    let n = w.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex64> = w.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = w.sample_rate() as f64 / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().take(n / 2 + 1).enumerate() {
        let m = c.norm();
        num += k as f64 * df * m;
        den += m;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// `(p95 - p5) / (p95 + p5)` of the smoothed envelope over the trimmed
/// interior.
pub fn modulation_depth(w: &Waveform) -> Result<f64> {
    let env = smooth_envelope(w)?;
    let trim = (env.len() as f64 * DEPTH_EDGE_TRIM) as usize;
    let mut mid: Vec<f64> = env[trim..env.len() - trim].to_vec();
    if mid.is_empty() {
        return Ok(0.0);
    }
    mid.sort_by(f64::total_cmp);
    let (lo, hi) = (percentile(&mid, 0.05), percentile(&mid, 0.95));
    Ok(if hi + lo > 0.0 {
        ((hi - lo) / (hi + lo)).clamp(0.0, 1.0)
    } else {
        0.0
    })
}

/// Feature vector in the order of [`FEATURE_NAMES`].
pub fn baseline_features(w: &Waveform) -> Result<[f64; N_FEATURES]> {
    Ok([
        w.rms(),
        spectral_centroid(w),
        w.duration(),
        modulation_depth(w)?,
        w.peak(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tacton::Units;

    #[test]
    fn centroid_of_pure_tone() {
        let x: Vec<f64> = (0..1000)
            .map(|i| (2.0 * std::f64::consts::PI * 100.0 * i as f64 / 1000.0).sin())
            .collect();
        let w = Waveform::new(x, 1000, Units::G).unwrap();
        assert!((spectral_centroid(&w) - 100.0).abs() < 1e-6);
        assert!(modulation_depth(&w).unwrap() < 0.05);
    }
}
