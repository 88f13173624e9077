//! Butterworth IIR design as cascaded second-order sections, with
//! zero-phase (forward-backward) application.
//!
//! Sections come from the bilinear transform with frequency prewarping, so
//! the digital response matches the analog prototype exactly at the cutoff.
//! Even orders use `order / 2` biquads whose Q values follow the Butterworth
//! pole angles; an odd order adds one first-order section.

use std::f64::consts::PI;

use crate::{Error, Result};

/// One normalized section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Transposed direct-form II state that is steady for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b0, self.b2 - self.a2 * g]
    }

    /// Complex response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> (f64, f64) {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let nr = self.b0 + self.b1 * c1 + self.b2 * c2;
        let ni = self.b1 * s1 + self.b2 * s2;
        let dr = 1.0 + self.a1 * c1 + self.a2 * c2;
        let di = self.a1 * s1 + self.a2 * s2;
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
}

impl Sos {
    pub fn butterworth(kind: FilterKind, order: usize, cutoff_hz: f64, sample_rate: f64) -> Result<Sos> {
        if order == 0 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0) {
            return Err(Error::Config(format!(
                "cutoff {cutoff_hz} Hz must lie strictly inside (0, {}) Hz",
                sample_rate / 2.0
            )));
        }
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let (sin_w, cos_w) = w0.sin_cos();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for k in 0..order / 2 {
            let q = 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin());
            let alpha = sin_w / (2.0 * q);
            let a0 = 1.0 + alpha;
            let (b0, b1) = match kind {
                FilterKind::Lowpass => ((1.0 - cos_w) / 2.0, 1.0 - cos_w),
                FilterKind::Highpass => ((1.0 + cos_w) / 2.0, -(1.0 + cos_w)),
            };
            sections.push(Biquad {
                b0: b0 / a0,
                b1: b1 / a0,
                b2: b0 / a0,
                a1: -2.0 * cos_w / a0,
                a2: (1.0 - alpha) / a0,
            });
        }
        if order % 2 == 1 {
            let k = (w0 / 2.0).tan();
            let a1 = (k - 1.0) / (k + 1.0);
            let (b0, b1) = match kind {
                FilterKind::Lowpass => (k / (1.0 + k), k / (1.0 + k)),
                FilterKind::Highpass => (1.0 / (1.0 + k), -1.0 / (1.0 + k)),
            };
            sections.push(Biquad {
                b0,
                b1,
                b2: 0.0,
                a1,
                a2: 0.0,
            });
        }
        Ok(Sos { sections })
    }

    /// Series connection: `self` followed by `other`.
    pub fn then(mut self, other: Sos) -> Sos {
        self.sections.extend(other.sections);
        self
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Magnitude response of a single (causal) pass at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                (re * re + im * im).sqrt()
            })
            .product()
    }

    /// Causal filtering with the given initial states (one per section).
    fn run(&self, x: &mut [f64], init: Option<f64>) {
        for (i, s) in self.sections.iter().enumerate() {
            let mut z = match init {
                Some(x0) => {
                    // Input level reaching this section under a constant x0.
                    let level: f64 = x0 * self.sections[..i].iter().map(Biquad::dc_gain).product::<f64>();
                    let st = s.step_state();
                    [st[0] * level, st[1] * level]
                }
                None => [0.0, 0.0],
            };
            for v in x.iter_mut() {
                let xin = *v;
                let y = s.b0 * xin + z[0];
                z[0] = s.b1 * xin - s.a1 * y + z[1];
                z[1] = s.b2 * xin - s.a2 * y;
                *v = y;
            }
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, None);
        y
    }

    /// Zero-phase filtering: odd extension at both ends, steady-state initial
    /// conditions, then a forward and a backward pass.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let x0 = ext[0];
        self.run(&mut ext, Some(x0));
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, Some(y0));
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}
