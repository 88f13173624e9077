use serde::{Deserialize, Serialize};

/// Length of one rhythmic pulse slot in seconds.
pub const PULSE_SLOT_S: f64 = 0.031_25;

/// Carrier band the reference devices reproduce faithfully.
pub const DEVICE_BAND_HZ: (f64, f64) = (80.0, 230.0);

/// Peak acceleration of the reference devices, in G.
pub const DEFAULT_DEVICE_GAIN_G: f64 = 0.3;

/// Longest Tacton the model input window accepts, in seconds.
pub const MAX_MODEL_DURATION_S: f64 = 6.0;

/// A single breakpoint `(t seconds, value)` of a piecewise-linear track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint(pub f64, pub f64);

impl Breakpoint {
    pub fn t(&self) -> f64 {
        self.0
    }

    pub fn value(&self) -> f64 {
        self.1
    }
}

/// Parametric description of a vibrotactile icon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TactonSpec {
    /// `E(t) = A|sin(2π f_e t)|` (or `A` when `f_e = 0`) on a constant carrier.
    Sinusoidal {
        amplitude: f64,
        carrier_freq: f64,
        envelope_freq: f64,
        duration: f64,
    },
    /// On/off pulse pattern gating a constant carrier, one slot per 31.25 ms.
    Rhythmic {
        amplitude: f64,
        carrier_freq: f64,
        pulses: Vec<u8>,
    },
    /// Free-form envelope and frequency tracks.
    Complex {
        envelope_track: Vec<Breakpoint>,
        frequency_track: Vec<Breakpoint>,
        duration: f64,
    },
}

impl TactonSpec {
    pub fn duration(&self) -> f64 {
        match self {
            TactonSpec::Sinusoidal { duration, .. } | TactonSpec::Complex { duration, .. } => *duration,
            TactonSpec::Rhythmic { pulses, .. } => pulses.len() as f64 * PULSE_SLOT_S,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TactonSpec::Sinusoidal { .. } => "sinusoidal",
            TactonSpec::Rhythmic { .. } => "rhythmic",
            TactonSpec::Complex { .. } => "complex",
        }
    }

    /// Upper bound on `|E(t)|` in normalized units.
    pub fn peak_envelope(&self) -> f64 {
        match self {
            TactonSpec::Sinusoidal { amplitude, .. } => *amplitude,
            TactonSpec::Rhythmic { amplitude, pulses, .. } => {
                if pulses.iter().any(|&p| p != 0) {
                    *amplitude
                } else {
                    0.0
                }
            }
            TactonSpec::Complex { envelope_track, .. } => {
                envelope_track.iter().map(|b| b.value().abs()).fold(0.0, f64::max)
            }
        }
    }
}

/// Outcome of [`validate`]: hard violations make the spec unusable, warnings
/// flag regions where predictions are less reliable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn into_result(self) -> crate::Result<Self> {
        if self.valid {
            Ok(self)
        } else {
            Err(crate::Error::InvalidSpec(self.violations))
        }
    }
}

pub fn validate(spec: &TactonSpec) -> ValidationReport {
    validate_with_gain(spec, DEFAULT_DEVICE_GAIN_G)
}

/// Checks the spec invariants. `device_gain` is the G-per-unit-amplitude factor
/// used for the peak-intensity warning.
pub fn validate_with_gain(spec: &TactonSpec, device_gain: f64) -> ValidationReport {
    let mut v = Vec::new();
    let mut w = Vec::new();

    let check_amp = |a: f64, v: &mut Vec<String>| {
        if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
            v.push(format!("amplitude in [0, 1] (got {a})"));
        }
    };
    let check_carrier = |f: f64, v: &mut Vec<String>, w: &mut Vec<String>| {
        if !(f.is_finite() && f > 0.0) {
            v.push(format!("carrier_freq > 0 (got {f})"));
        } else if f < DEVICE_BAND_HZ.0 || f > DEVICE_BAND_HZ.1 {
            w.push(format!(
                "carrier_freq {f} Hz outside the {}-{} Hz device band",
                DEVICE_BAND_HZ.0, DEVICE_BAND_HZ.1
            ));
        }
    };
    let check_duration = |d: f64, v: &mut Vec<String>| {
        if !(d.is_finite() && d > 0.0) {
            v.push(format!("duration > 0 (got {d})"));
        }
    };

    match spec {
        TactonSpec::Sinusoidal {
            amplitude,
            carrier_freq,
            envelope_freq,
            duration,
        } => {
            check_amp(*amplitude, &mut v);
            check_carrier(*carrier_freq, &mut v, &mut w);
            if !(envelope_freq.is_finite() && *envelope_freq >= 0.0) {
                v.push(format!("envelope_freq >= 0 (got {envelope_freq})"));
            }
            check_duration(*duration, &mut v);
        }
        TactonSpec::Rhythmic {
            amplitude,
            carrier_freq,
            pulses,
        } => {
            check_amp(*amplitude, &mut v);
            check_carrier(*carrier_freq, &mut v, &mut w);
            if pulses.is_empty() {
                v.push("duration > 0 (pulse list is empty)".to_string());
            }
            if let Some((i, p)) = pulses.iter().enumerate().find(|(_, &p)| p > 1) {
                v.push(format!("pulse values in {{0, 1}} (pulse {i} is {p})"));
            }
        }
        TactonSpec::Complex {
            envelope_track,
            frequency_track,
            duration,
        } => {
            check_duration(*duration, &mut v);
            check_track("envelope_track", envelope_track, *duration, &mut v);
            check_track("frequency_track", frequency_track, *duration, &mut v);
            if let Some(b) = envelope_track
                .iter()
                .find(|b| !(b.value().is_finite() && (0.0..=1.0).contains(&b.value())))
            {
                v.push(format!("envelope values in [0, 1] (got {})", b.value()));
            }
            if let Some(b) = frequency_track
                .iter()
                .find(|b| !(b.value().is_finite() && b.value() >= 0.0))
            {
                v.push(format!("frequency values >= 0 (got {})", b.value()));
            }
            let out_of_band = frequency_track
                .iter()
                .map(|b| b.value())
                .filter(|f| f.is_finite() && (*f < DEVICE_BAND_HZ.0 || *f > DEVICE_BAND_HZ.1))
                .count();
            if out_of_band > 0 {
                w.push(format!(
                    "{out_of_band} frequency breakpoint(s) outside the {}-{} Hz device band",
                    DEVICE_BAND_HZ.0, DEVICE_BAND_HZ.1
                ));
            }
        }
    }

    if v.is_empty() {
        let peak = spec.peak_envelope() * device_gain;
        if peak > DEFAULT_DEVICE_GAIN_G + 1e-12 {
            w.push(format!(
                "peak intensity {peak:.3} G exceeds the {DEFAULT_DEVICE_GAIN_G} G device maximum"
            ));
        }
        if spec.duration() > MAX_MODEL_DURATION_S + 1e-9 {
            w.push(format!(
                "duration {:.3} s exceeds the {MAX_MODEL_DURATION_S} s model window",
                spec.duration()
            ));
        }
    }

    ValidationReport {
        valid: v.is_empty(),
        violations: v,
        warnings: w,
    }
}

fn check_track(name: &str, track: &[Breakpoint], duration: f64, v: &mut Vec<String>) {
    if track.len() < 2 {
        v.push(format!("{name} needs at least two breakpoints"));
        return;
    }
    if track.iter().any(|b| !b.t().is_finite()) {
        v.push(format!("{name} breakpoint times must be finite"));
        return;
    }
    if track[0].t() != 0.0 {
        v.push(format!("{name} first breakpoint at t = 0 (got {})", track[0].t()));
    }
    let last = track[track.len() - 1].t();
    if (last - duration).abs() > 1e-9 {
        v.push(format!(
            "{name} last breakpoint at t = duration (got {last}, duration {duration})"
        ));
    }
    if track.windows(2).any(|p| p[1].t() <= p[0].t()) {
        v.push(format!("{name} breakpoints strictly increasing in t"));
    }
}
