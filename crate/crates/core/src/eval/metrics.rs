use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::model::{RatingTriple, DIMENSIONS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimMetrics {
    pub rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub within_sd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerDim {
    pub roughness: DimMetrics,
    pub valence: DimMetrics,
    pub arousal: DimMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub within_sd: Option<f64>,
}

/// Per-dimension RMSE and within-SD proportions plus their means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_dim: PerDim,
    pub averages: Averages,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 || a != b {
        return Err(Error::Data(format!(
            "metric inputs must be non-empty and equal length ({a} vs {b})"
        )));
    }
    Ok(())
}

/// Root-mean-square error per dimension.
pub fn rmse_dims(preds: &[RatingTriple], truths: &[RatingTriple]) -> Result<[f64; 3]> {
    check_lengths(preds.len(), truths.len())?;
    let mut acc = [0.0; 3];
    for (p, t) in preds.iter().zip(truths) {
        for (k, (p, t)) in p.to_array().into_iter().zip(t.to_array()).enumerate() {
            acc[k] += (p - t) * (p - t);
        }
    }
    Ok(acc.map(|s| (s / preds.len() as f64).sqrt()))
}

/// Fraction of records per dimension with `|pred - mean| <= sd`.
pub fn within_sd(preds: &[RatingTriple], means: &[RatingTriple], sds: &[RatingTriple]) -> Result<[f64; 3]> {
    check_lengths(preds.len(), means.len())?;
    check_lengths(preds.len(), sds.len())?;
    let mut hits = [0usize; 3];
    for ((p, m), s) in preds.iter().zip(means).zip(sds) {
        let (p, m, s) = (p.to_array(), m.to_array(), s.to_array());
        for k in 0..3 {
            if (p[k] - m[k]).abs() <= s[k] {
                hits[k] += 1;
            }
        }
    }
    Ok(hits.map(|h| h as f64 / preds.len() as f64))
}

impl Metrics {
    /// RMSE, plus within-SD proportions when every record carries an SD.
    pub fn compute(preds: &[RatingTriple], truths: &[RatingTriple], sds: Option<&[RatingTriple]>) -> Result<Self> {
        let rmse = rmse_dims(preds, truths)?;
        let within = sds.map(|s| within_sd(preds, truths, s)).transpose()?;
        let dim = |k: usize| DimMetrics {
            rmse: rmse[k],
            within_sd: within.map(|w| w[k]),
        };
        Ok(Self {
            per_dim: PerDim {
                roughness: dim(0),
                valence: dim(1),
                arousal: dim(2),
            },
            averages: Averages {
                rmse: rmse.iter().sum::<f64>() / 3.0,
                within_sd: within.map(|w| w.iter().sum::<f64>() / 3.0),
            },
        })
    }

    pub fn rmse(&self) -> [f64; 3] {
        [
            self.per_dim.roughness.rmse,
            self.per_dim.valence.rmse,
            self.per_dim.arousal.rmse,
        ]
    }

    /// `dimension,rmse,within_sd` rows, ending with the average.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,rmse,within_sd\n");
        let dims = [self.per_dim.roughness, self.per_dim.valence, self.per_dim.arousal];
        let fmt = |w: Option<f64>| w.map(|w| w.to_string()).unwrap_or_default();
        for (name, d) in DIMENSIONS.iter().zip(dims) {
            let _ = writeln!(out, "{name},{},{}", d.rmse, fmt(d.within_sd));
        }
        let _ = writeln!(out, "average,{},{}", self.averages.rmse, fmt(self.averages.within_sd));
        out
    }
}

/// Metrics of always predicting the per-dimension mean of `reference`.
pub fn mean_predictor(reference: &[RatingTriple], truths: &[RatingTriple]) -> Result<Metrics> {
    if reference.is_empty() {
        return Err(Error::Data("mean predictor needs reference ratings".into()));
    }
    let mut mean = [0.0; 3];
    for r in reference {
        for (m, v) in mean.iter_mut().zip(r.to_array()) {
            *m += v / reference.len() as f64;
        }
    }
    let preds = vec![RatingTriple::from_array(mean); truths.len()];
    Metrics::compute(&preds, truths, None)
}
