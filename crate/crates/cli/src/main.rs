use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use vibnet::augment::AugmentConfig;
use vibnet::dsp::ChannelSet;
use vibnet::eval::LabelAggregation;
use vibnet::model::Model;
use vibnet::pipeline::{self, TrainOptions};
use vibnet::tacton::{downsample, render, synthesize, validate, TactonSpec, Waveform, PIPELINE_RATE_HZ};
use vibnet::{Error, Result};
use vibnet_cli::service::{self, ServiceConfig, DEFAULT_MAX_BODY_BYTES};

/// Vibrotactile Tacton synthesis, processing and rating prediction.
#[derive(Parser)]
#[command(name = "vibnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a Tacton spec to a waveform file.
    Synth(SynthArgs),
    /// Expand a manifest with perceptually bounded variants.
    Augment(AugmentArgs),
    /// Compute spectrogram stacks for every record of a manifest.
    Process(ProcessArgs),
    /// Train a model on a manifest, with optional cross-validation.
    Train(TrainArgs),
    /// Predict ratings for a waveform, a spec or a whole manifest.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Generate a labelled synthetic corpus.
    GenCorpus(GenCorpusArgs),
    /// Cross-validate the single, two- and four-channel configurations.
    Ablate(AblateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output sample rate in Hz.
    #[arg(long, default_value_t = PIPELINE_RATE_HZ)]
    rate: u32,
    /// G per unit amplitude; omit for normalized output.
    #[arg(long)]
    gain: Option<f64>,
    /// Rendering rate used before downsampling to `--rate`.
    #[arg(long)]
    render_rate: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clamp speed changes so the duration moves by at most this much.
    #[arg(long)]
    duration_cap_ms: Option<f64>,
}

#[derive(Args)]
struct ProcessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `unfiltered` or a comma list of ra1, ra2, sa1, sa2.
    #[arg(long, default_value = "ra1,ra2")]
    channels: ChannelSet,
}

#[derive(Args)]
struct TrainFlags {
    /// JSON with optional `model`, `train`, `folds` and `labels` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// `per-device` or `global-mean`.
    #[arg(long)]
    labels: Option<LabelAggregation>,
}

impl TrainFlags {
    fn options(&self) -> Result<TrainOptions> {
        let mut o: TrainOptions = match &self.config {
            Some(p) => serde_json::from_slice(&read(p)?)?,
            None => TrainOptions::default(),
        };
        if let Some(f) = self.folds {
            o.folds = f;
        }
        if let Some(s) = self.seed {
            o.train.seed = s;
            o.model.seed = s;
        }
        if let Some(e) = self.epochs {
            o.train.epochs = e;
        }
        if let Some(l) = self.labels {
            o.labels = l;
        }
        o.model.validate()?;
        o.train.validate()?;
        Ok(o)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Cross-validation report; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Waveform file (`.f32` with JSON sidecar).
    #[arg(long = "in", conflicts_with_all = ["spec", "manifest"])]
    input: Option<PathBuf>,
    #[arg(long, conflicts_with = "manifest")]
    spec: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Manifest or JSON list of `{record_id, ratings, sd?}`.
    #[arg(long)]
    truth: PathBuf,
    /// Also write the report here, plus a CSV alongside.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    max_body_bytes: usize,
    /// Allowed CORS origin; repeatable.
    #[arg(long)]
    cors: Vec<String>,
}

fn read(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn write(p: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(p, bytes).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    match out {
        Some(p) => write(p, s.as_bytes()),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

fn read_spec(p: &Path) -> Result<TactonSpec> {
    let spec: TactonSpec = serde_json::from_slice(&read(p)?)?;
    validate(&spec).into_result()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let spec = read_spec(&a.spec)?;
            let render_rate = a.render_rate.unwrap_or(a.rate);
            let w = match a.gain {
                Some(g) => render(&spec, render_rate, g)?,
                None => synthesize(&spec, render_rate)?,
            };
            let w = if render_rate == a.rate {
                w
            } else {
                downsample(&w, a.rate)?
            };
            w.write_f32(&a.out)?;
            emit(
                &json!({ "out": a.out, "sidecar": w.sidecar(), "validation": validate(&spec) }),
                None,
            )
        }
        Command::Augment(a) => {
            let cfg = AugmentConfig {
                repetitions: a.reps,
                rng_seed: a.seed,
                duration_change_cap: a.duration_cap_ms.map(|ms| ms / 1000.0),
                ..AugmentConfig::default()
            };
            let m = pipeline::augment_manifest(&a.input, &a.out, &cfg)?;
            emit(&json!({ "manifest": m }), None)
        }
        Command::Process(a) => {
            let m = pipeline::process_manifest(&a.input, &a.out, &a.channels)?;
            emit(&json!({ "manifest": m }), None)
        }
        Command::Train(a) => {
            let opts = a.flags.options()?;
            let (model, report) = pipeline::train_manifest(&a.data, &opts)?;
            model.save(&a.out)?;
            let report_path = a.report.unwrap_or_else(|| a.out.with_extension("report.json"));
            emit(&report, Some(&report_path))?;
            emit(
                &json!({ "model": a.out, "report": report_path, "mean_rmse": report.mean_rmse }),
                None,
            )
        }
        Command::Predict(a) => {
            let model = Model::load(&a.model)?;
            if let Some(m) = &a.manifest {
                return emit(&pipeline::predict_manifest(&model, m, a.batch_size)?, a.out.as_deref());
            }
            let w = match (&a.input, &a.spec) {
                (Some(p), None) => {
                    let w = Waveform::read_f32(p)?;
                    if w.sample_rate() == PIPELINE_RATE_HZ {
                        w
                    } else {
                        downsample(&w, PIPELINE_RATE_HZ)?
                    }
                }
                (None, Some(p)) => vibnet::tacton::render_pipeline(&read_spec(p)?)?,
                _ => return Err(Error::Config("give one of --in, --spec or --manifest".into())),
            };
            emit(&model.predict(&w)?, a.out.as_deref())
        }
        Command::Eval(a) => {
            let preds: Vec<pipeline::PredictionRecord> = serde_json::from_slice(&read(&a.pred)?)?;
            let metrics = pipeline::eval_predictions(&preds, &pipeline::read_truth(&a.truth)?)?;
            if let Some(out) = &a.out {
                pipeline::write_metrics(&metrics, out)?;
            }
            emit(&metrics, None)
        }
        Command::GenCorpus(a) => {
            let m = pipeline::gen_corpus(&a.out, a.n, a.seed)?;
            emit(&json!({ "manifest": m, "records": a.n }), None)
        }
        Command::Ablate(a) => {
            let opts = a.flags.options()?;
            let records = vibnet::eval::aggregate_labels(&vibnet::eval::read_manifest(&a.data)?, opts.labels);
            let samples = vibnet::eval::load_samples(&a.data, &records)?;
            let groups: Vec<String> = records.iter().map(|r| r.tacton_id.clone()).collect();
            let report = pipeline::ablation(&samples, &groups, &opts, &pipeline::standard_ablation())?;
            emit(&report, Some(&a.out))?;
            write(&a.out.with_extension("csv"), report.to_csv().as_bytes())?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Serve(a) => {
            let cfg = ServiceConfig {
                addr: SocketAddr::new(a.bind, a.port),
                model: a.model,
                max_body_bytes: a.max_body_bytes,
                cors: a.cors,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("tokio runtime: {e}")))?;
            rt.block_on(service::serve(cfg))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::InvalidSpec(_) | Error::Json(_) | Error::Data(_) | Error::Config(_) => 4,
        Error::VersionMismatch { .. } | Error::Corrupt(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut err = json!({ "code": e.code(), "message": e.to_string() });
            if let Error::InvalidSpec(v) = &e {
                err["violations"] = json!(v);
            }
            eprintln!("{}", json!({ "error": err }));
            ExitCode::from(exit_code(&e))
        }
    }
}
