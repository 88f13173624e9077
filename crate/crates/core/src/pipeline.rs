//! File-based pipeline stages behind the command line. Each stage writes a
//! self-contained directory holding its data files and a `manifest.jsonl`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, write_provenance, AugmentConfig};
use crate::autodiff::Dtype;
use crate::dsp::{mechano_spectrograms, ChannelSet};
use crate::eval::{
    aggregate_labels, generate_corpus, load_samples, read_manifest, resolve, write_manifest, LabelAggregation,
    ManifestRecord, Metrics, Source,
};
use crate::model::{
    cross_validate_grouped, fit, FoldReport, Model, Prediction, RatingTriple, Sample, TrainConfig, TrainedModel,
    VibNetConfig,
};
use crate::tacton::{zero_pad, Waveform};
use crate::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const PROVENANCE_NAME: &str = "provenance.jsonl";

fn create_dirs(out: &Path, subdirs: &[&str]) -> Result<()> {
    for d in subdirs {
        let p = out.join(d);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Renders and labels a synthetic corpus. Writes `waveforms/`, the specs
/// under `specs/` and the manifest; returns the manifest path.
pub fn gen_corpus(out: &Path, n: usize, seed: u64) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    create_dirs(out, &["waveforms", "specs"])?;
    let items = generate_corpus(n, seed)?;
    let records = items
        .par_iter()
        .map(|item| {
            let wave_rel = format!("waveforms/{}.f32", item.id);
            item.waveform.write_f32(&out.join(&wave_rel))?;
            let spec_path = out.join(format!("specs/{}.json", item.id));
            fs::write(&spec_path, serde_json::to_vec_pretty(&item.spec)?).map_err(|e| Error::io(&spec_path, e))?;
            Ok(ManifestRecord {
                record_id: item.id.clone(),
                tacton_id: item.tacton_id.clone(),
                source: Source::Synthetic,
                device_label: None,
                waveform_path: wave_rel,
                spectrogram_path: None,
                ratings: item.ratings,
                sd: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = out.join(MANIFEST_NAME);
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// Augments every record of `manifest`. Variants inherit the Tacton id,
/// ratings and device of their source; `provenance.jsonl` lists the
/// method and parameters behind each output.
pub fn augment_manifest(manifest: &Path, out: &Path, cfg: &AugmentConfig) -> Result<PathBuf> {
    let records = read_manifest(manifest)?;
    let inputs = records
        .par_iter()
        .map(|r| {
            Ok((
                r.record_id.clone(),
                Waveform::read_f32(&resolve(manifest, &r.waveform_path))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let augmented = augment_dataset(&inputs, cfg)?;
    create_dirs(out, &["waveforms"])?;
    let by_id: HashMap<&str, &ManifestRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let out_records = augmented
        .records
        .par_iter()
        .zip(&augmented.manifest)
        .map(|((id, w), prov)| {
            let wave_rel = format!("waveforms/{id}.f32");
            w.write_f32(&out.join(&wave_rel))?;
            let src = by_id[prov.src_id.as_str()];
            Ok(ManifestRecord {
                record_id: id.clone(),
                waveform_path: wave_rel,
                spectrogram_path: None,
                ..src.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_provenance(&out.join(PROVENANCE_NAME), &augmented.manifest)?;
    let path = out.join(MANIFEST_NAME);
    write_manifest(&path, &out_records)?;
    Ok(path)
}

/// Copies waveforms into `out` and adds a spectrogram stack per record.
pub fn process_manifest(manifest: &Path, out: &Path, channels: &ChannelSet) -> Result<PathBuf> {
    let records = read_manifest(manifest)?;
    create_dirs(out, &["waveforms", "spectrograms"])?;
    let out_records = records
        .par_iter()
        .map(|r| {
            let w = Waveform::read_f32(&resolve(manifest, &r.waveform_path))?;
            let spec = mechano_spectrograms(&zero_pad(&w, crate::tacton::MODEL_INPUT_LEN)?, channels)?;
            let wave_rel = format!("waveforms/{}.f32", r.record_id);
            let spec_rel = format!("spectrograms/{}.f32", r.record_id);
            w.write_f32(&out.join(&wave_rel))?;
            spec.write_f32(&out.join(&spec_rel))?;
            Ok(ManifestRecord {
                waveform_path: wave_rel,
                spectrogram_path: Some(spec_rel),
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join(MANIFEST_NAME);
    write_manifest(&path, &out_records)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub model: VibNetConfig,
    pub train: TrainConfig,
    /// Cross-validation folds; below 2 trains once on everything.
    pub folds: usize,
    pub labels: LabelAggregation,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            model: VibNetConfig::desk(),
            train: TrainConfig::default(),
            folds: 5,
            labels: LabelAggregation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: usize,
    pub tactons: usize,
    pub folds: Vec<FoldReport>,
    pub mean_rmse: Option<f64>,
    /// Fold whose model was kept.
    pub best_fold: Option<usize>,
    pub param_count: usize,
}

/// Cross-validation folds group records by Tacton id, so augmented
/// variants never leak into validation.
pub fn train_samples(samples: &[Sample], groups: &[String], opts: &TrainOptions) -> Result<(Model, TrainReport)> {
    type Run<T> = (TrainedModel<T>, Vec<FoldReport>, Option<f64>, Option<usize>);
    fn run<T: crate::autodiff::Real>(samples: &[Sample], groups: &[String], opts: &TrainOptions) -> Result<Run<T>> {
        if opts.folds >= 2 {
            let cv = cross_validate_grouped::<T, _>(&opts.model, samples, groups, &opts.train, opts.folds)?;
            Ok((cv.model, cv.folds, Some(cv.mean_rmse), Some(cv.best_fold)))
        } else {
            Ok((
                fit::<T>(&opts.model, samples, None, &opts.train, 0)?,
                Vec::new(),
                None,
                None,
            ))
        }
    }
    let (model, folds, mean_rmse, best_fold): (Model, _, _, _) = match opts.model.precision {
        Dtype::F32 => {
            let (m, f, r, b) = run::<f32>(samples, groups, opts)?;
            (m.into(), f, r, b)
        }
        Dtype::F64 => {
            let (m, f, r, b) = run::<f64>(samples, groups, opts)?;
            (m.into(), f, r, b)
        }
    };
    let mut tactons = groups.to_vec();
    tactons.sort_unstable();
    tactons.dedup();
    let report = TrainReport {
        records: samples.len(),
        tactons: tactons.len(),
        folds,
        mean_rmse,
        best_fold,
        param_count: model.param_count(),
    };
    Ok((model, report))
}

pub fn train_manifest(manifest: &Path, opts: &TrainOptions) -> Result<(Model, TrainReport)> {
    let records = aggregate_labels(&read_manifest(manifest)?, opts.labels);
    let samples = load_samples(manifest, &records)?;
    let groups: Vec<String> = records.iter().map(|r| r.tacton_id.clone()).collect();
    train_samples(&samples, &groups, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub record_id: String,
    /// Clamped to the rating scale.
    pub ratings: RatingTriple,
    pub raw: RatingTriple,
}

impl PredictionRecord {
    pub fn new(record_id: String, p: Prediction) -> Self {
        Self {
            record_id,
            ratings: p.clamped,
            raw: p.raw,
        }
    }
}

pub fn predict_manifest(model: &Model, manifest: &Path, batch_size: usize) -> Result<Vec<PredictionRecord>> {
    let records = read_manifest(manifest)?;
    let samples = load_samples(manifest, &records)?;
    let preds = model.predict_batch(&samples, batch_size)?;
    Ok(records
        .into_iter()
        .zip(preds)
        .map(|(r, p)| PredictionRecord::new(r.record_id, p))
        .collect())
}

/// Ground truth for one record. Manifest lines parse as this too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub record_id: String,
    pub ratings: RatingTriple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<RatingTriple>,
}

/// Reads a JSON array or JSON lines of [`TruthRecord`].
pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Metrics of the clamped predictions over the records they name. Within-SD
/// proportions are reported when every matched truth carries an SD.
pub fn eval_predictions(preds: &[PredictionRecord], truths: &[TruthRecord]) -> Result<Metrics> {
    let by_id: HashMap<&str, &TruthRecord> = truths.iter().map(|t| (t.record_id.as_str(), t)).collect();
    let mut p = Vec::with_capacity(preds.len());
    let mut t = Vec::with_capacity(preds.len());
    let mut sds = Vec::with_capacity(preds.len());
    for pr in preds {
        let truth = by_id
            .get(pr.record_id.as_str())
            .ok_or_else(|| Error::Data(format!("no ground truth for record {}", pr.record_id)))?;
        p.push(pr.ratings);
        t.push(truth.ratings);
        sds.extend(truth.sd);
    }
    Metrics::compute(&p, &t, (sds.len() == p.len()).then_some(&sds[..]))
}

/// Writes `path` as pretty JSON and the CSV form next to it.
pub fn write_metrics(metrics: &Metrics, path: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(metrics)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    let csv = path.with_extension("csv");
    fs::write(&csv, metrics.to_csv()).map_err(|e| Error::io(&csv, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub channels: ChannelSet,
    pub param_count: usize,
    pub mean_rmse: f64,
    pub folds: Vec<FoldReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("configuration,channels,params,roughness,valence,arousal,average\n");
        for r in &self.rows {
            let n = r.folds.len() as f64;
            let dims: Vec<f64> = (0..3)
                .map(|d| r.folds.iter().map(|f| f.metrics.rmse()[d]).sum::<f64>() / n)
                .collect();
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.name,
                r.channels.to_string().replace(',', "+"),
                r.param_count,
                dims[0],
                dims[1],
                dims[2],
                r.mean_rmse
            ));
        }
        s
    }
}

/// The single, two-channel and four-channel input configurations.
pub fn standard_ablation() -> Vec<(String, ChannelSet)> {
    vec![
        ("single".into(), ChannelSet::single()),
        ("two-channel".into(), ChannelSet::two_channel()),
        ("four-channel".into(), ChannelSet::four_channel()),
    ]
}

/// Runs the same cross-validation for each channel configuration. Stored
/// spectrograms are dropped so every configuration computes its own.
pub fn ablation(
    samples: &[Sample],
    groups: &[String],
    opts: &TrainOptions,
    configs: &[(String, ChannelSet)],
) -> Result<AblationReport> {
    if opts.folds < 2 {
        return Err(Error::Config("ablation needs at least 2 folds".into()));
    }
    let bare: Vec<Sample> = samples
        .iter()
        .map(|s| Sample {
            spectrogram: None,
            ..s.clone()
        })
        .collect();
    let mut rows = Vec::new();
    for (name, channels) in configs {
        let mut o = opts.clone();
        o.model.channels = channels.clone();
        let (_, report) = train_samples(&bare, groups, &o)?;
        rows.push(AblationRow {
            name: name.clone(),
            channels: channels.clone(),
            param_count: report.param_count,
            mean_rmse: report.mean_rmse.expect("cross-validated"),
            folds: report.folds,
        });
    }
    Ok(AblationReport { rows })
}

/// Generates, augments, processes, trains and evaluates in subdirectories
/// of `root`. The trained model is evaluated on the unaugmented corpus.
/// Returns the metrics report path.
pub fn run_all(root: &Path, n: usize, seed: u64, augment: &AugmentConfig, opts: &TrainOptions) -> Result<PathBuf> {
    let corpus = gen_corpus(&root.join("corpus"), n, seed)?;
    let augmented = augment_manifest(&corpus, &root.join("augmented"), augment)?;
    let processed = process_manifest(&augmented, &root.join("processed"), &opts.model.channels)?;
    let (model, report) = train_manifest(&processed, opts)?;
    let ckpt = root.join("model.ckpt");
    model.save(&ckpt)?;
    let report_path = root.join("train_report.json");
    fs::write(&report_path, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&report_path, e))?;
    let preds = predict_manifest(&Model::load(&ckpt)?, &corpus, opts.train.batch_size)?;
    let pred_path = root.join("predictions.json");
    fs::write(&pred_path, serde_json::to_vec_pretty(&preds)?).map_err(|e| Error::io(&pred_path, e))?;
    let metrics = eval_predictions(&preds, &read_truth(&corpus)?)?;
    let out = root.join("metrics.json");
    write_metrics(&metrics, &out)?;
    Ok(out)
}
