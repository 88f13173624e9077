use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample rate of recorded accelerations.
pub const CAPTURE_RATE_HZ: u32 = 10_000;
/// Sample rate of everything downstream of capture.
pub const PIPELINE_RATE_HZ: u32 = 1_000;
/// Model input length at the pipeline rate (6 s).
pub const MODEL_INPUT_LEN: usize = 6_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Device-independent amplitude in [-1, 1].
    Normalized,
    /// Acceleration in G.
    G,
}

/// A uniformly sampled one-axis acceleration signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    units: Units,
}

/// JSON sidecar written next to raw `.f32` sample files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSidecar {
    pub sample_rate: u32,
    pub units: Units,
    pub length: usize,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32, units: Units) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample_rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
            units,
        })
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32, units: Units) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
            units,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32, units: Units) -> Self {
        Self::from_parts_unchecked(vec![0.0; len], sample_rate, units)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Converts normalized amplitude to G using `gain` G per unit.
    pub fn to_acceleration(&self, gain: f64) -> Waveform {
        match self.units {
            Units::G => self.clone(),
            Units::Normalized => Waveform::from_parts_unchecked(
                self.samples.iter().map(|s| s * gain).collect(),
                self.sample_rate,
                Units::G,
            ),
        }
    }

    pub fn scaled(&self, factor: f64) -> Waveform {
        Waveform::from_parts_unchecked(
            self.samples.iter().map(|s| s * factor).collect(),
            self.sample_rate,
            self.units,
        )
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Waveform> {
        Waveform::new(samples, self.sample_rate, self.units)
    }

    pub fn sidecar(&self) -> WaveformSidecar {
        WaveformSidecar {
            sample_rate: self.sample_rate,
            units: self.units,
            length: self.samples.len(),
        }
    }

    /// Writes little-endian f32 samples to `path` and the sidecar to
    /// `path.with_extension("json")`.
    pub fn write_f32(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.samples.len() * 4);
        for &s in &self.samples {
            bytes.extend_from_slice(&(s as f32).to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        fs::write(&side, serde_json::to_vec_pretty(&self.sidecar())?).map_err(|e| Error::io(side, e))?;
        Ok(())
    }

    pub fn read_f32(path: &Path) -> Result<Waveform> {
        let side = sidecar_path(path);
        let meta: WaveformSidecar = serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != meta.length * 4 {
            return Err(Error::Data(format!(
                "{}: expected {} samples, file holds {} bytes",
                path.display(),
                meta.length,
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Waveform::new(samples, meta.sample_rate, meta.units)
    }

    /// One sample per line, for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for s in &self.samples {
            writeln!(f, "{s}").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }

    /// Round-trips samples through f32, matching what [`Waveform::write_f32`] stores.
    pub fn quantized_f32(&self) -> Waveform {
        Waveform::from_parts_unchecked(
            self.samples.iter().map(|&s| s as f32 as f64).collect(),
            self.sample_rate,
            self.units,
        )
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Appends trailing zeros up to `target_len`. Over-length input is an error,
/// never truncated.
pub fn zero_pad(w: &Waveform, target_len: usize) -> Result<Waveform> {
    if w.len() > target_len {
        return Err(Error::TooLong {
            len: w.len(),
            max: target_len,
        });
    }
    let mut samples = Vec::with_capacity(target_len);
    samples.extend_from_slice(&w.samples);
    samples.resize(target_len, 0.0);
    Ok(Waveform::from_parts_unchecked(samples, w.sample_rate, w.units))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| i as f64 * 1e-3).collect(), 1000, Units::G).unwrap()
    }

    #[test]
    fn pads_with_trailing_zeros() {
        let w = ramp(2000);
        let p = zero_pad(&w, 6000).unwrap();
        assert_eq!(p.len(), 6000);
        assert_eq!(&p.samples()[..2000], w.samples());
        assert!(p.samples()[2000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pad_to_same_length_is_noop() {
        let w = ramp(6000);
        assert_eq!(zero_pad(&w, 6000).unwrap(), w);
    }

    #[test]
    fn pad_rejects_over_length() {
        let err = zero_pad(&ramp(6500), 6000).unwrap_err();
        assert!(matches!(err, Error::TooLong { len: 6500, max: 6000 }));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Waveform::new(vec![0.0, f64::NAN], 1000, Units::G).is_err());
        assert!(Waveform::new(vec![0.0], 0, Units::G).is_err());
    }

    #[test]
    fn f32_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.f32");
        let w = ramp(123);
        w.write_f32(&path).unwrap();
        let back = Waveform::read_f32(&path).unwrap();
        assert_eq!(back, w.quantized_f32());
        let side: WaveformSidecar = serde_json::from_slice(&std::fs::read(dir.path().join("w.json")).unwrap()).unwrap();
        assert_eq!(side.length, 123);
        assert_eq!(side.sample_rate, 1000);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 123 * 4);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.f32");
        ramp(10).write_f32(&path).unwrap();
        std::fs::write(&path, [0u8; 12]).unwrap();
        assert!(Waveform::read_f32(&path).is_err());
    }

    #[test]
    fn csv_one_sample_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        ramp(5).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(2).unwrap().parse::<f64>().unwrap(), 0.002);
    }
}
