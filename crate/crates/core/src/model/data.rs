use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ratings::RatingTriple;
use crate::autodiff::{Real, Tensor};
use crate::dsp::{mechano_spectrograms, ChannelSet, SpectrogramStack};
use crate::tacton::{zero_pad, Waveform, PIPELINE_RATE_HZ};
use crate::{Error, Result};

/// One training or evaluation example: a 1 kHz waveform (unpadded or
/// padded), optionally its precomputed spectrogram stack, and its ratings.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub waveform: Waveform,
    pub spectrogram: Option<SpectrogramStack>,
    pub ratings: RatingTriple,
}

/// Per-channel spectrogram standardization and waveform scaling, fitted on
/// training data and stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub spec_mean: Vec<f64>,
    pub spec_std: Vec<f64>,
    pub wave_scale: f64,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            spec_mean: vec![0.0; channels],
            spec_std: vec![1.0; channels],
            wave_scale: 1.0,
        }
    }

    /// Fits on padded waveforms and their spectrogram stacks. Channels or
    /// waveforms with zero spread keep unit scale.
    pub fn fit<'a>(items: impl IntoIterator<Item = (&'a [f64], &'a SpectrogramStack)>) -> Result<Self> {
        let mut sums: Vec<(f64, f64, usize)> = Vec::new();
        let (mut wsq, mut wn) = (0.0, 0usize);
        for (wave, spec) in items {
            if sums.is_empty() {
                sums = vec![(0.0, 0.0, 0); spec.channels().len()];
            }
            if spec.channels().len() != sums.len() {
                return Err(Error::Data("spectrogram channel counts differ".into()));
            }
            for (c, acc) in sums.iter_mut().enumerate() {
                for &v in spec.channel(c) {
                    acc.0 += v;
                    acc.1 += v * v;
                }
                acc.2 += spec.channel(c).len();
            }
            wsq += wave.iter().map(|v| v * v).sum::<f64>();
            wn += wave.len();
        }
        if sums.is_empty() {
            return Err(Error::Data("cannot fit normalization on an empty dataset".into()));
        }
        let mut spec_mean = Vec::new();
        let mut spec_std = Vec::new();
        for (s, sq, n) in sums {
            let m = s / n as f64;
            let sd = (sq / n as f64 - m * m).max(0.0).sqrt();
            spec_mean.push(m);
            spec_std.push(if sd > 0.0 { sd } else { 1.0 });
        }
        let wrms = (wsq / wn.max(1) as f64).sqrt();
        Ok(Self {
            spec_mean,
            spec_std,
            wave_scale: if wrms > 0.0 { 1.0 / wrms } else { 1.0 },
        })
    }
}

/// Padded waveform and spectrogram stack for one sample.
pub(crate) fn featurize(
    sample: &Sample,
    channels: &ChannelSet,
    input_len: usize,
) -> Result<(Vec<f64>, SpectrogramStack)> {
    if sample.waveform.sample_rate() != PIPELINE_RATE_HZ {
        return Err(Error::SampleRate {
            expected: PIPELINE_RATE_HZ,
            actual: sample.waveform.sample_rate(),
        });
    }
    let padded = zero_pad(&sample.waveform, input_len)?;
    let spec = match &sample.spectrogram {
        Some(s) if s.channels() == channels => s.clone(),
        Some(s) => {
            return Err(Error::Data(format!(
                "sample {} has spectrogram channels {:?}, model expects {}",
                sample.id,
                s.channels(),
                channels
            )))
        }
        None => mechano_spectrograms(&padded, channels)?,
    };
    Ok((padded.into_samples(), spec))
}

fn normalize<T: Real>(wave: &[f64], spec: &SpectrogramStack, norm: &Normalization) -> (Vec<T>, Vec<T>) {
    let w = wave.iter().map(|&v| T::of(v * norm.wave_scale)).collect();
    let mut s = Vec::with_capacity(spec.data().len());
    for c in 0..spec.channels().len() {
        let (m, sd) = (norm.spec_mean[c], norm.spec_std[c]);
        s.extend(spec.channel(c).iter().map(|&v| T::of((v - m) / sd)));
    }
    (w, s)
}

/// Model-ready inputs for a fixed sample list, computed on demand or kept
/// in memory when they fit under a byte budget.
pub(crate) struct InputCache<'a, T> {
    samples: &'a [Sample],
    channels: ChannelSet,
    input_len: usize,
    norm: Normalization,
    cached: Option<Vec<(Vec<T>, Vec<T>)>>,
    spec_shape: [usize; 3],
}

impl<'a, T: Real> InputCache<'a, T> {
    pub fn new(
        samples: &'a [Sample],
        channels: &ChannelSet,
        input_len: usize,
        norm: Normalization,
        byte_budget: usize,
    ) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::Data("empty sample list".into()))?;
        let (_, s0) = featurize(first, channels, input_len)?;
        let spec_shape = s0.shape();
        let per = (input_len + s0.data().len()) * std::mem::size_of::<T>();
        let cached = if per.saturating_mul(samples.len()) <= byte_budget {
            Some(
                samples
                    .par_iter()
                    .map(|s| featurize(s, channels, input_len).map(|(w, sp)| normalize(&w, &sp, &norm)))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            samples,
            channels: channels.clone(),
            input_len,
            norm,
            cached,
            spec_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// `([B, L], [B, C, F, N])` tensors for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        let items: Vec<(Vec<T>, Vec<T>)> = match &self.cached {
            Some(c) => idx.iter().map(|&i| c[i].clone()).collect(),
            None => idx
                .par_iter()
                .map(|&i| {
                    featurize(&self.samples[i], &self.channels, self.input_len)
                        .map(|(w, s)| normalize(&w, &s, &self.norm))
                })
                .collect::<Result<_>>()?,
        };
        let b = idx.len();
        let mut w = Vec::with_capacity(b * self.input_len);
        let mut s = Vec::with_capacity(b * self.spec_shape.iter().product::<usize>());
        for (wi, si) in items {
            if si.len() != self.spec_shape.iter().product::<usize>() {
                return Err(Error::Data("spectrogram shapes differ within a dataset".into()));
            }
            w.extend(wi);
            s.extend(si);
        }
        let [c, f, n] = self.spec_shape;
        Ok((
            Tensor::new(vec![b, self.input_len], w)?,
            Tensor::new(vec![b, c, f, n], s)?,
        ))
    }

    pub fn targets(&self, idx: &[usize]) -> Tensor<T> {
        let data = idx
            .iter()
            .flat_map(|&i| self.samples[i].ratings.to_array())
            .map(T::of)
            .collect();
        Tensor::new(vec![idx.len(), 3], data).expect("shape")
    }
}

/// Fits normalization statistics over `samples`, featurizing in parallel.
pub(crate) fn fit_normalization(samples: &[Sample], channels: &ChannelSet, input_len: usize) -> Result<Normalization> {
    let feats = samples
        .par_iter()
        .map(|s| featurize(s, channels, input_len))
        .collect::<Result<Vec<_>>>()?;
    Normalization::fit(feats.iter().map(|(w, s)| (w.as_slice(), s)))
}

pub(crate) fn normalized_inputs<T: Real>(
    sample: &Sample,
    channels: &ChannelSet,
    input_len: usize,
    norm: &Normalization,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (w, s) = featurize(sample, channels, input_len)?;
    let [c, f, n] = s.shape();
    let (w, sv) = normalize::<T>(&w, &s, norm);
    Ok((Tensor::new(vec![1, input_len], w)?, Tensor::new(vec![1, c, f, n], sv)?))
}
