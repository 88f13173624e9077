use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::tacton::{Waveform, PIPELINE_RATE_HZ};
use crate::{Error, Result};

/// 0.5 s analysis window at 1 kHz; 2 Hz bin spacing.
pub const WINDOW_LEN: usize = 500;
/// 0.05 s hop at 1 kHz.
pub const HOP_LEN: usize = 50;
/// One-sided bins for a 500-point transform.
pub const N_BINS: usize = WINDOW_LEN / 2 + 1;

/// Complex STFT laid out bin-major: `data[bin * frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stft {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex64>,
}

impl Stft {
    pub fn at(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.frames + frame]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Index into a length-`n` signal under reflect (edge sample not repeated)
/// extension, folding as many times as needed.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Number of centered frames for a signal of `len` samples.
pub fn frame_count(len: usize) -> usize {
    1 + len / HOP_LEN
}

/// Centered STFT of a 1 kHz waveform: periodic Hann window, 500-point
/// transform, hop 50, reflect padding of half a window on both sides.
pub fn stft(w: &Waveform) -> Result<Stft> {
    if w.sample_rate() != PIPELINE_RATE_HZ {
        return Err(Error::SampleRate {
            expected: PIPELINE_RATE_HZ,
            actual: w.sample_rate(),
        });
    }
    Ok(stft_samples(w.samples()))
}

pub fn stft_samples(x: &[f64]) -> Stft {
    let frames = frame_count(x.len());
    let mut data = vec![Complex64::new(0.0, 0.0); N_BINS * frames];
    if x.is_empty() {
        return Stft {
            bins: N_BINS,
            frames,
            data,
        };
    }
    let window = hann_periodic(WINDOW_LEN);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(WINDOW_LEN);
    let mut buf = vec![Complex64::new(0.0, 0.0); WINDOW_LEN];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let half = (WINDOW_LEN / 2) as isize;
    for f in 0..frames {
        let start = (f * HOP_LEN) as isize - half;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = x[reflect_index(start + i as isize, x.len())];
            *b = Complex64::new(s * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (bin, v) in buf.iter().take(N_BINS).enumerate() {
            data[bin * frames + f] = *v;
        }
    }
    Stft {
        bins: N_BINS,
        frames,
        data,
    }
}
