//! JSON-lines dataset manifests. Paths are relative to the manifest's
//! directory unless absolute.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::SpectrogramStack;
use crate::model::{RatingTriple, Sample};
use crate::tacton::Waveform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synthetic,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub record_id: String,
    pub tacton_id: String,
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub device_label: Option<String>,
    pub waveform_path: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spectrogram_path: Option<String>,
    pub ratings: RatingTriple,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sd: Option<RatingTriple>,
}

impl ManifestRecord {
    pub fn check(&self) -> Result<()> {
        self.ratings
            .check_bounds()
            .map_err(|e| Error::Data(format!("record {}: {e}", self.record_id)))?;
        if let Some(sd) = self.sd {
            if sd.to_array().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Data(format!(
                    "record {}: negative or non-finite sd",
                    self.record_id
                )));
            }
        }
        Ok(())
    }
}

pub fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rec.check()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// How per-device ratings become training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelAggregation {
    /// Each record keeps its own (per-device) ratings.
    #[default]
    PerDevice,
    /// Records of the same Tacton share the mean over all its records.
    GlobalMean,
}

impl FromStr for LabelAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-device" => Ok(Self::PerDevice),
            "global-mean" => Ok(Self::GlobalMean),
            _ => Err(Error::Config(format!(
                "unknown label aggregation {s:?} (per-device | global-mean)"
            ))),
        }
    }
}

pub fn aggregate_labels(records: &[ManifestRecord], mode: LabelAggregation) -> Vec<ManifestRecord> {
    match mode {
        LabelAggregation::PerDevice => records.to_vec(),
        LabelAggregation::GlobalMean => {
            let mut sums: BTreeMap<&str, ([f64; 3], usize)> = BTreeMap::new();
            for r in records {
                let e = sums.entry(&r.tacton_id).or_insert(([0.0; 3], 0));
                for (a, v) in e.0.iter_mut().zip(r.ratings.to_array()) {
                    *a += v;
                }
                e.1 += 1;
            }
            records
                .iter()
                .map(|r| {
                    let (s, n) = sums[r.tacton_id.as_str()];
                    ManifestRecord {
                        ratings: RatingTriple::from_array(s.map(|v| v / n as f64)),
                        ..r.clone()
                    }
                })
                .collect()
        }
    }
}

/// Loads waveforms (and spectrogram stacks when listed) for every record.
pub fn load_samples(manifest: &Path, records: &[ManifestRecord]) -> Result<Vec<Sample>> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| {
            let waveform = Waveform::read_f32(&resolve(manifest, &r.waveform_path))?;
            let spectrogram = r
                .spectrogram_path
                .as_ref()
                .map(|p| SpectrogramStack::read_f32(&resolve(manifest, p)))
                .transpose()?;
            Ok(Sample {
                id: r.record_id.clone(),
                waveform,
                spectrogram,
                ratings: r.ratings,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, tacton: &str, r: f64) -> ManifestRecord {
        ManifestRecord {
            record_id: id.into(),
            tacton_id: tacton.into(),
            source: Source::External,
            device_label: None,
            waveform_path: format!("{id}.f32"),
            spectrogram_path: None,
            ratings: RatingTriple::new(r, r, r),
            sd: None,
        }
    }

    #[test]
    fn global_mean_averages_per_tacton() {
        let rs = [rec("a", "t1", 10.0), rec("b", "t1", 30.0), rec("c", "t2", 5.0)];
        let g = aggregate_labels(&rs, LabelAggregation::GlobalMean);
        assert_eq!(g[0].ratings.roughness, 20.0);
        assert_eq!(g[1].ratings.roughness, 20.0);
        assert_eq!(g[2].ratings.roughness, 5.0);
        assert_eq!(aggregate_labels(&rs, LabelAggregation::PerDevice), rs.to_vec());
    }

    #[test]
    fn manifest_line_format() {
        let line = serde_json::to_string(&rec("a", "t", 1.0)).unwrap();
        assert_eq!(
            line,
            r#"{"record_id":"a","tacton_id":"t","source":"external","waveform_path":"a.f32","ratings":{"r":1.0,"v":1.0,"a":1.0}}"#
        );
    }

    #[test]
    fn out_of_range_rating_rejected() {
        assert!(rec("a", "t", 101.0).check().is_err());
    }
}
