//! Perceptually bounded waveform augmentation.
//!
//! Three operators stay under human detection/discrimination thresholds:
//! additive uniform noise below the absolute limen, playback-speed change
//! within the frequency JND and amplitude scaling within the intensity JND.
//! The three singles and their four combinations form the seven methods.

mod dataset;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::SincResampler;
use crate::tacton::Waveform;
use crate::{Error, Result};

pub use dataset::{
    augment_dataset, derive_rng, expected_output_count, read_provenance, seed_path, write_provenance, AugmentedDataset,
    ProvenanceEntry,
};

/// Absolute limen near 200 Hz, in G.
pub const DEFAULT_NOISE_BOUND_G: f64 = 0.0006;
pub const DEFAULT_SPEED_BOUND: f64 = 0.15;
pub const DEFAULT_AMPLITUDE_BOUND: f64 = 0.10;
/// Duration-change cap used when the clamp is switched on.
pub const DEFAULT_DURATION_CAP_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub noise_bound: f64,
    pub speed_bound: f64,
    /// When set, speed changes are clamped so `|Δduration| <= cap`.
    pub duration_change_cap: Option<f64>,
    pub amplitude_bound: f64,
    pub repetitions: usize,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_bound: DEFAULT_NOISE_BOUND_G,
            speed_bound: DEFAULT_SPEED_BOUND,
            duration_change_cap: None,
            amplitude_bound: DEFAULT_AMPLITUDE_BOUND,
            repetitions: 2,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bounds = [
            ("noise_bound", self.noise_bound),
            ("speed_bound", self.speed_bound),
            ("amplitude_bound", self.amplitude_bound),
            ("duration_change_cap", self.duration_change_cap.unwrap_or(0.0)),
        ];
        for (name, b) in bounds {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0")));
            }
        }
        if self.speed_bound >= 1.0 {
            return Err(Error::Config("speed_bound must be < 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// Largest admissible `|b|` for a signal of `duration` seconds.
    ///
    /// With the cap enabled, `|b| <= cap / (duration + cap)` keeps
    /// `duration * |b| / (1 - |b|)`, the worst case (slowing down), within the cap.
    pub fn speed_bound_for(&self, duration: f64) -> f64 {
        match self.duration_change_cap {
            Some(cap) if duration > 0.0 => self.speed_bound.min(cap / (duration + cap)),
            _ => self.speed_bound,
        }
    }
}

/// The seven augmentation methods. Constituents always run noise → speed →
/// amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentMethod {
    #[serde(rename = "N")]
    Noise,
    #[serde(rename = "S")]
    Speed,
    #[serde(rename = "A")]
    Amplitude,
    #[serde(rename = "N+S")]
    NoiseSpeed,
    #[serde(rename = "N+A")]
    NoiseAmplitude,
    #[serde(rename = "S+A")]
    SpeedAmplitude,
    #[serde(rename = "N+S+A")]
    All,
}

impl AugmentMethod {
    pub const ALL: [AugmentMethod; 7] = [
        AugmentMethod::Noise,
        AugmentMethod::Speed,
        AugmentMethod::Amplitude,
        AugmentMethod::NoiseSpeed,
        AugmentMethod::NoiseAmplitude,
        AugmentMethod::SpeedAmplitude,
        AugmentMethod::All,
    ];

    pub fn uses_noise(self) -> bool {
        matches!(self, Self::Noise | Self::NoiseSpeed | Self::NoiseAmplitude | Self::All)
    }

    pub fn uses_speed(self) -> bool {
        matches!(self, Self::Speed | Self::NoiseSpeed | Self::SpeedAmplitude | Self::All)
    }

    pub fn uses_amplitude(self) -> bool {
        matches!(
            self,
            Self::Amplitude | Self::NoiseAmplitude | Self::SpeedAmplitude | Self::All
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "N",
            Self::Speed => "S",
            Self::Amplitude => "A",
            Self::NoiseSpeed => "N+S",
            Self::NoiseAmplitude => "N+A",
            Self::SpeedAmplitude => "S+A",
            Self::All => "N+S+A",
        }
    }
}

impl fmt::Display for AugmentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown augmentation method {s:?}")))
    }
}

/// Parameters drawn for one augmented record; `None` for operators not applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub waveform: Waveform,
    pub params: AugmentParams,
}

/// Intermediate waveforms of one [`augment_record_traced`] call, for bound audits.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentTrace {
    pub input: Waveform,
    pub after_noise: Option<Waveform>,
    pub after_speed: Option<Waveform>,
    pub after_amplitude: Option<Waveform>,
}

fn check_bound(name: &'static str, value: f64, bound: f64) -> Result<()> {
    if !value.is_finite() || value.abs() > bound {
        return Err(Error::BoundViolation { name, value, bound });
    }
    Ok(())
}

fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

/// Adds i.i.d. noise uniform in `[-|a|, |a|]` to every sample.
///
/// The realised deviation `out[i] - in[i]` is guaranteed `<= |a|` in floating
/// point: a sum that rounds past the bound is stepped back toward the input.
pub fn inject_noise<R: Rng + ?Sized>(w: &Waveform, a: f64, cfg: &AugmentConfig, rng: &mut R) -> Result<Waveform> {
    check_bound("noise amplitude a", a, cfg.noise_bound)?;
    let a = a.abs();
    if a == 0.0 {
        return Ok(w.clone());
    }
    let samples = w
        .samples()
        .iter()
        .map(|&x| {
            let mut y = x + rng.random_range(-a..=a);
            while (y - x).abs() > a {
                y = if y > x { y.next_down() } else { y.next_up() };
            }
            y
        })
        .collect();
    w.with_samples(samples)
}

/// Plays the waveform `1 + b` times faster: duration becomes
/// `duration / (1 + b)` and every frequency scales by `1 + b`.
pub fn change_speed(w: &Waveform, b: f64, cfg: &AugmentConfig) -> Result<Waveform> {
    check_bound("speed change b", b, cfg.speed_bound_for(w.duration()))?;
    if b == 0.0 {
        return Ok(w.clone());
    }
    w.with_samples(SincResampler::default().stretch(w.samples(), 1.0 + b))
}

/// Scales every sample by `1 + c`.
pub fn change_amplitude(w: &Waveform, c: f64, cfg: &AugmentConfig) -> Result<Waveform> {
    check_bound("amplitude change c", c, cfg.amplitude_bound)?;
    if c == 0.0 {
        return Ok(w.clone());
    }
    Ok(w.scaled(1.0 + c))
}

/// Draws the method's parameters and applies its operators in N → S → A order.
pub fn augment_record<R: Rng + ?Sized>(
    w: &Waveform,
    method: AugmentMethod,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Augmented> {
    augment_record_traced(w, method, cfg, rng).map(|(a, _)| a)
}

pub fn augment_record_traced<R: Rng + ?Sized>(
    w: &Waveform,
    method: AugmentMethod,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Augmented, AugmentTrace)> {
    cfg.validate()?;
    let mut params = AugmentParams::default();
    let mut trace = AugmentTrace {
        input: w.clone(),
        after_noise: None,
        after_speed: None,
        after_amplitude: None,
    };
    let mut cur = w.clone();
    if method.uses_noise() {
        // One amplitude per record, then per-sample noise within it.
        let a = if cfg.noise_bound == 0.0 {
            0.0
        } else {
            rng.random_range(0.0..=cfg.noise_bound)
        };
        cur = inject_noise(&cur, a, cfg, rng)?;
        params.a = Some(a);
        trace.after_noise = Some(cur.clone());
    }
    if method.uses_speed() {
        let b = uniform_symmetric(rng, cfg.speed_bound_for(cur.duration()));
        cur = change_speed(&cur, b, cfg)?;
        params.b = Some(b);
        trace.after_speed = Some(cur.clone());
    }
    if method.uses_amplitude() {
        let c = uniform_symmetric(rng, cfg.amplitude_bound);
        cur = change_amplitude(&cur, c, cfg)?;
        params.c = Some(c);
        trace.after_amplitude = Some(cur.clone());
    }
    Ok((Augmented { waveform: cur, params }, trace))
}
