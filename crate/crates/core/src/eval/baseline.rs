//! Ordinary least squares with intercept, one output per rating dimension.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::N_FEATURES;
use crate::model::RatingTriple;
use crate::{Error, Result};

/// Ridge penalty used when the normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    /// Features are standardized with these before the linear map.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Per dimension: intercept followed by one weight per feature.
    pub coefficients: [Vec<f64>; 3],
    /// True when the ridge fallback was needed.
    pub ridge: bool,
}

impl LinearBaseline {
    pub fn fit(features: &[[f64; N_FEATURES]], targets: &[RatingTriple]) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::Data(format!(
                "baseline needs matching non-empty features and targets ({} vs {})",
                features.len(),
                targets.len()
            )));
        }
        let n = features.len();
        let p = N_FEATURES + 1;
        let mut mean = vec![0.0; N_FEATURES];
        let mut scale = vec![0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            mean[j] = features.iter().map(|f| f[j]).sum::<f64>() / n as f64;
            let var = features.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let x = DMatrix::from_fn(n, p, |i, j| {
            if j == 0 {
                1.0
            } else {
                (features[i][j - 1] - mean[j - 1]) / scale[j - 1]
            }
        });
        let xtx = x.transpose() * &x;
        let (chol, ridge) = match xtx.clone().cholesky().filter(|c| well_conditioned(c.l_dirty(), p)) {
            Some(c) => (c, false),
            None => {
                // The intercept is not penalized.
                let mut penalty = DMatrix::identity(p, p) * RIDGE_FALLBACK;
                penalty[(0, 0)] = 0.0;
                let reg = xtx + penalty;
                let c = reg
                    .cholesky()
                    .ok_or_else(|| Error::Data("baseline normal equations are not solvable".into()))?;
                (c, true)
            }
        };
        let coefficients = [0, 1, 2].map(|k| {
            let y = DVector::from_iterator(n, targets.iter().map(|t| t.to_array()[k]));
            chol.solve(&(x.transpose() * y)).iter().copied().collect()
        });
        Ok(Self {
            feature_mean: mean,
            feature_scale: scale,
            coefficients,
            ridge,
        })
    }

    pub fn predict(&self, f: &[f64; N_FEATURES]) -> RatingTriple {
        let out = self.coefficients.clone().map(|c| {
            c[0] + (0..N_FEATURES)
                .map(|j| c[j + 1] * (f[j] - self.feature_mean[j]) / self.feature_scale[j])
                .sum::<f64>()
        });
        RatingTriple::from_array(out)
    }
}

/// Rejects factorizations whose pivots collapse relative to the largest,
/// which signals (near-)collinear features.
fn well_conditioned(l: &DMatrix<f64>, p: usize) -> bool {
    let d: Vec<f64> = (0..p).map(|i| l[(i, i)].abs()).collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    d.iter().all(|&v| v > max * 1e-7)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Vec<[f64; N_FEATURES]> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                [
                    t.sin(),
                    (t * 0.7).cos() * 100.0,
                    0.3 + t * 0.01,
                    (t * 1.3).sin().abs(),
                    (t * 0.2).cos(),
                ]
            })
            .collect()
    }

    #[test]
    fn exact_linear_targets_are_recovered() {
        let f = feats(40);
        let y: Vec<RatingTriple> = f
            .iter()
            .map(|x| RatingTriple::new(10.0 + 3.0 * x[0] - 0.1 * x[1], 50.0 + 20.0 * x[2], 5.0 * x[3] + x[4]))
            .collect();
        let b = LinearBaseline::fit(&f[..30], &y[..30]).unwrap();
        assert!(!b.ridge);
        for (x, t) in f[30..].iter().zip(&y[30..]) {
            let p = b.predict(x).to_array();
            for (p, t) in p.iter().zip(t.to_array()) {
                assert!((p - t).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_features_fall_back_to_ridge() {
        let f = vec![[1.0, 2.0, 3.0, 4.0, 5.0]; 10];
        let y = vec![RatingTriple::new(42.0, 7.0, 0.0); 10];
        let b = LinearBaseline::fit(&f, &y).unwrap();
        assert!(b.ridge);
        let p = b.predict(&f[0]).to_array();
        assert!((p[0] - 42.0).abs() < 1e-6 && (p[1] - 7.0).abs() < 1e-6);
    }
}
