//! Band-limited windowed-sinc interpolation used for playback-speed changes.

use std::f64::consts::PI;

/// Total kernel length in taps.
pub const KERNEL_TAPS: usize = 64;

/// Windowed-sinc interpolator with a Blackman-windowed, 64-tap kernel.
///
/// When speeding up (`ratio > 1`) the kernel cutoff drops to `1 / ratio` of
/// the input Nyquist so shifted content cannot fold back.
#[derive(Debug, Clone, Copy)]
pub struct SincResampler {
    half_taps: usize,
    /// Passband edge as a fraction of the input Nyquist before speed scaling.
    rolloff: f64,
}

impl Default for SincResampler {
    fn default() -> Self {
        Self {
            half_taps: KERNEL_TAPS / 2,
            rolloff: 0.95,
        }
    }
}

impl SincResampler {
    /// Output length for a speed ratio: `round(len / ratio)`.
    pub fn output_len(len: usize, ratio: f64) -> usize {
        (len as f64 / ratio).round() as usize
    }

    /// Reads `x` at positions `j * ratio`, producing `round(len / ratio)`
    /// samples. `ratio == 1` returns the input untouched.
    pub fn stretch(&self, x: &[f64], ratio: f64) -> Vec<f64> {
        assert!(ratio > 0.0 && ratio.is_finite(), "ratio must be positive");
        if ratio == 1.0 {
            return x.to_vec();
        }
        let cutoff = self.rolloff * ratio.recip().min(1.0);
        let half = self.half_taps as isize;
        let n = x.len() as isize;
        (0..Self::output_len(x.len(), ratio))
            .map(|j| {
                let pos = j as f64 * ratio;
                let center = pos.floor() as isize;
                let mut acc = 0.0;
                for i in (center - half + 1)..=(center + half) {
                    if i < 0 || i >= n {
                        continue;
                    }
                    let d = pos - i as f64;
                    acc += x[i as usize] * self.kernel(d, cutoff);
                }
                acc
            })
            .collect()
    }

    fn kernel(&self, d: f64, cutoff: f64) -> f64 {
        let half = self.half_taps as f64;
        if d.abs() >= half {
            return 0.0;
        }
        let arg = PI * cutoff * d;
        let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
        // Blackman window over [-half, half].
        let u = (d + half) / (2.0 * half);
        let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
        cutoff * sinc * w
    }
}
