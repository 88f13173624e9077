use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::VibNetConfig;
use super::data::{fit_normalization, InputCache, Sample};
use super::net::{Mode, VibNet};
use super::ratings::RatingTriple;
use super::TrainedModel;
use crate::autodiff::{ops, Adam, AdamConfig, Real, Tape, Tensor};
use crate::eval::{group_kfold_split, kfold_split, Metrics};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Start the output bias at the mean training rating.
    pub init_output_bias: bool,
    /// Keep all model inputs in memory when they fit in this many bytes.
    pub cache_bytes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            // Larger batches leave the desk model underfit after 30 epochs on a few hundred records.
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 7,
            init_output_bias: true,
            cache_bytes: 1 << 30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !self.adam.lr.is_finite()
            || self.adam.lr <= 0.0
            || !(0.0..1.0).contains(&self.adam.beta1)
            || !(0.0..1.0).contains(&self.adam.beta2)
        {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub metrics: Metrics,
}

/// Cross-validation outcome. `model` is the fold model with the lowest
/// validation RMSE.
pub struct CvResult<T> {
    pub folds: Vec<FoldReport>,
    pub mean_rmse: f64,
    pub best_fold: usize,
    pub model: TrainedModel<T>,
}

/// Per-step random stream, derived from the run seed and the step's
/// coordinates so that runs are reproducible regardless of scheduling.
fn stream(seed: u64, tag: &str, a: u64, b: u64) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}/{tag}/{a}/{b}").as_bytes());
    ChaCha8Rng::from_seed(digest.into())
}

fn mean_ratings(samples: &[Sample]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for s in samples {
        for (a, v) in m.iter_mut().zip(s.ratings.to_array()) {
            *a += v;
        }
    }
    m.map(|v| v / samples.len() as f64)
}

/// Raw `[B, 3]` predictions in evaluation mode, batch by batch.
pub(crate) fn predict_cached<T: Real>(
    net: &VibNet<T>,
    cache: &InputCache<'_, T>,
    batch_size: usize,
) -> Result<Vec<[f64; 3]>> {
    let idx: Vec<usize> = (0..cache.len()).collect();
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (w, s) = cache.batch(chunk)?;
        let tape = Tape::new();
        let y = net.forward(&tape, &w, &s, &mut Mode::Eval)?.output.value();
        out.extend(
            y.data()
                .chunks(3)
                .map(|r| [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()]),
        );
    }
    Ok(out)
}

fn mse_of(preds: &[[f64; 3]], samples: &[Sample]) -> f64 {
    let mut s = 0.0;
    for (p, t) in preds.iter().zip(samples) {
        for (p, t) in p.iter().zip(t.ratings.to_array()) {
            s += (p - t) * (p - t);
        }
    }
    s / (3 * preds.len()) as f64
}

/// Trains a fresh model on `train`; when `val` is given its loss is logged
/// after every epoch. `run` separates the random streams of different
/// fits sharing one seed (for example, CV folds).
pub fn fit<T: Real>(
    config: &VibNetConfig,
    train: &[Sample],
    val: Option<&[Sample]>,
    hyper: &TrainConfig,
    run: u64,
) -> Result<TrainedModel<T>> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if T::DTYPE != config.precision {
        return Err(Error::Config(format!(
            "config precision {:?} does not match training type {:?}",
            config.precision,
            T::DTYPE
        )));
    }
    let mut net = VibNet::<T>::build(config)?;
    let norm = fit_normalization(train, &config.channels, config.input_len)?;
    if hyper.init_output_bias {
        let bias = Tensor::new(vec![3], mean_ratings(train).map(T::of).to_vec())?;
        let id = net.output_bias_id();
        net.params_mut().set(id, bias)?;
    }
    let cache = InputCache::<T>::new(
        train,
        &config.channels,
        config.input_len,
        norm.clone(),
        hyper.cache_bytes,
    )?;
    let val_cache = val
        .filter(|v| !v.is_empty())
        .map(|v| InputCache::<T>::new(v, &config.channels, config.input_len, norm.clone(), hyper.cache_bytes))
        .transpose()?;
    let mut adam = Adam::new(hyper.adam, net.params());
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut stream(hyper.seed, "shuffle", run, epoch as u64));
        let mut loss_sum = 0.0;
        for (step, idx) in order.chunks(hyper.batch_size).enumerate() {
            let (w, s) = cache.batch(idx)?;
            let target = cache.targets(idx);
            let mut rng = stream(hyper.seed, "dropout", run, log.steps);
            let tape = Tape::new();
            let diag = |e: Error| match e {
                Error::NonFinite { op } => {
                    Error::Data(format!("non-finite value in {op} at epoch {epoch}, step {step}"))
                }
                e => e,
            };
            let fwd = net
                .forward(&tape, &w, &s, &mut Mode::Train { rng: &mut rng })
                .map_err(diag)?;
            let loss = ops::mse(fwd.output, &target).map_err(diag)?;
            let lv = loss.value().item().as_f64();
            let grads = tape.backward(loss).map_err(diag)?;
            adam.step(net.params_mut(), &grads).map_err(diag)?;
            net.update_running_stats(&fwd.bn_stats);
            loss_sum += lv * idx.len() as f64;
            log.steps += 1;
        }
        let val_loss = match (&val_cache, val) {
            (Some(vc), Some(v)) => Some(mse_of(&predict_cached(&net, vc, hyper.batch_size)?, v)),
            _ => None,
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
        });
    }
    Ok(TrainedModel {
        net,
        norm,
        optimizer: adam,
        log,
    })
}

/// Predictions for `samples` as rating triples (unclamped).
pub fn predict_samples<T: Real>(
    model: &TrainedModel<T>,
    samples: &[Sample],
    batch_size: usize,
    cache_bytes: usize,
) -> Result<Vec<RatingTriple>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let cfg = model.net.config();
    let cache = InputCache::<T>::new(samples, &cfg.channels, cfg.input_len, model.norm.clone(), cache_bytes)?;
    Ok(predict_cached(&model.net, &cache, batch_size)?
        .into_iter()
        .map(RatingTriple::from_array)
        .collect())
}

pub fn evaluate<T: Real>(model: &TrainedModel<T>, samples: &[Sample], hyper: &TrainConfig) -> Result<Metrics> {
    let preds = predict_samples(model, samples, hyper.batch_size, hyper.cache_bytes)?;
    let truths: Vec<RatingTriple> = samples.iter().map(|s| s.ratings).collect();
    Metrics::compute(&preds, &truths, None)
}

/// k-fold cross-validation with a seeded fold assignment.
pub fn cross_validate<T: Real>(
    config: &VibNetConfig,
    samples: &[Sample],
    hyper: &TrainConfig,
    k: usize,
) -> Result<CvResult<T>> {
    run_folds(config, samples, &kfold_split(samples.len(), k, hyper.seed)?, hyper)
}

/// Cross-validation where records sharing a group key (a Tacton and its
/// augmented variants) are never split between training and validation.
pub fn cross_validate_grouped<T: Real, S: AsRef<str>>(
    config: &VibNetConfig,
    samples: &[Sample],
    groups: &[S],
    hyper: &TrainConfig,
    k: usize,
) -> Result<CvResult<T>> {
    if groups.len() != samples.len() {
        return Err(Error::Data(format!(
            "{} group keys for {} samples",
            groups.len(),
            samples.len()
        )));
    }
    run_folds(config, samples, &group_kfold_split(groups, k, hyper.seed)?, hyper)
}

fn run_folds<T: Real>(
    config: &VibNetConfig,
    samples: &[Sample],
    folds: &[Vec<usize>],
    hyper: &TrainConfig,
) -> Result<CvResult<T>> {
    let mut reports = Vec::new();
    let mut best: Option<(f64, usize, TrainedModel<T>)> = None;
    for (f, val_idx) in folds.iter().enumerate() {
        let train: Vec<Sample> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().map(|&i| samples[i].clone()))
            .collect();
        let val: Vec<Sample> = val_idx.iter().map(|&i| samples[i].clone()).collect();
        let model = fit::<T>(config, &train, Some(&val), hyper, f as u64)?;
        let metrics = evaluate(&model, &val, hyper)?;
        reports.push(FoldReport {
            fold: f,
            train_size: train.len(),
            val_size: val.len(),
            metrics,
        });
        if best.as_ref().is_none_or(|b| metrics.averages.rmse < b.0) {
            best = Some((metrics.averages.rmse, f, model));
        }
    }
    let (_, best_fold, model) = best.expect("at least two folds");
    let mean_rmse = reports.iter().map(|r| r.metrics.averages.rmse).sum::<f64>() / reports.len() as f64;
    Ok(CvResult {
        folds: reports,
        mean_rmse,
        best_fold,
        model,
    })
}
