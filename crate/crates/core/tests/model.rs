mod common;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vibnet::autodiff::{ops, Tape, Tensor};
use vibnet::eval::kfold_split;
use vibnet::model::{fit, predict_samples, Mode, Model, RatingTriple, Sample, TrainConfig, VibNet, VibNetConfig};
use vibnet::tacton::{
    downsample, render, zero_pad, TactonSpec, Units, Waveform, CAPTURE_RATE_HZ, DEFAULT_DEVICE_GAIN_G,
};
use vibnet::Error;

fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn wave(carrier: f64, env: f64, dur: f64) -> Waveform {
    let spec = TactonSpec::Sinusoidal {
        amplitude: 1.0,
        carrier_freq: carrier,
        envelope_freq: env,
        duration: dur,
    };
    downsample(&render(&spec, CAPTURE_RATE_HZ, DEFAULT_DEVICE_GAIN_G).unwrap(), 1000).unwrap()
}

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = [80.0, 155.0, 230.0][i % 3];
            let e = rng.random_range(0.0..8.0);
            let d = rng.random_range(0.5..3.0);
            Sample {
                id: format!("s{i}"),
                waveform: wave(c, e, d),
                spectrogram: None,
                ratings: RatingTriple::new(
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..100.0),
                ),
            }
        })
        .collect()
}

#[test]
fn tiny_end_to_end_gradients_match_finite_differences() {
    for train in [true, false] {
        let (r, params) = common::tiny_end_to_end(train);
        assert_eq!(r.checked, params);
        assert!(r.max_rel_err < common::TOL, "train={train}: {r:?}");
    }
}

fn desk_inputs(b: usize, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, &[b, 6000]).cast();
    let s = rand_tensor(&mut rng, &[b, 2, 251, 121]).cast();
    (w, s)
}

#[test]
fn desk_forward_shapes_and_eval_determinism() {
    let net = VibNet::<f32>::build(&VibNetConfig::desk()).unwrap();
    let (w, s) = desk_inputs(4, 1);
    let run = || {
        let tape = Tape::new();
        (*net.forward(&tape, &w, &s, &mut Mode::Eval).unwrap().output.value()).clone()
    };
    let a = run();
    assert_eq!(a.shape(), &[4, 3]);
    assert_eq!(a, run());
}

#[test]
fn eval_forward_is_permutation_equivariant() {
    let net = VibNet::<f32>::build(&VibNetConfig::desk()).unwrap();
    let (w, s) = desk_inputs(5, 2);
    let mut perm: Vec<usize> = (0..5).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let pick = |t: &Tensor<f32>| {
        let row = t.len() / 5;
        let data = perm
            .iter()
            .flat_map(|&i| t.data()[i * row..(i + 1) * row].to_vec())
            .collect();
        Tensor::new(t.shape().to_vec(), data).unwrap()
    };
    let tape = Tape::new();
    let y = net.forward(&tape, &w, &s, &mut Mode::Eval).unwrap().output.value();
    let yp = net
        .forward(&tape, &pick(&w), &pick(&s), &mut Mode::Eval)
        .unwrap()
        .output
        .value();
    assert_eq!(*yp, pick(&y));
}

#[test]
fn architecture_contract() {
    let cfg = VibNetConfig::desk();
    let a = VibNet::<f32>::build(&cfg).unwrap();
    assert_eq!(a.param_count(), VibNet::<f32>::build(&cfg).unwrap().param_count());
    let find = |name: &str| a.params().get(a.params().find(name).unwrap()).shape().to_vec();
    assert_eq!(find("head.out.w"), vec![3, 16]);
    assert_eq!(find("cnn.stem.conv"), vec![16, 2, 3, 3]);
    let mut four = cfg.clone();
    four.channels = vibnet::dsp::ChannelSet::four_channel();
    let b = VibNet::<f32>::build(&four).unwrap();
    assert_eq!(
        b.params().get(b.params().find("cnn.stem.conv").unwrap()).shape(),
        &[16, 4, 3, 3]
    );
    let mut bad = cfg;
    bad.gru_layers = 0;
    assert!(matches!(VibNet::<f32>::build(&bad), Err(Error::Config(_))));
}

#[test]
fn forward_rejects_mismatched_batches() {
    let net = VibNet::<f32>::build(&VibNetConfig::desk()).unwrap();
    let (w, _) = desk_inputs(2, 4);
    let (_, s) = desk_inputs(3, 4);
    let tape = Tape::new();
    assert!(matches!(
        net.forward(&tape, &w, &s, &mut Mode::Eval),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn zero_dropout_draws_nothing_and_changes_nothing() {
    let mut cfg = VibNetConfig::tiny();
    cfg.dropout_p = 0.0;
    let net = VibNet::<f64>::build(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = rand_tensor(&mut rng, &[2, 60]);
    let s = rand_tensor(&mut rng, &[2, 2, 16, 12]);
    let mut r1 = ChaCha8Rng::seed_from_u64(1);
    let mut r2 = ChaCha8Rng::seed_from_u64(2);
    let before = r1.clone();
    let t1 = Tape::new();
    let t2 = Tape::new();
    let a = net
        .forward(&t1, &w, &s, &mut Mode::Train { rng: &mut r1 })
        .unwrap()
        .output
        .value();
    let b = net
        .forward(&t2, &w, &s, &mut Mode::Train { rng: &mut r2 })
        .unwrap()
        .output
        .value();
    assert_eq!(a, b);
    assert_eq!(r1, before);
}

#[test]
fn batch_loss_is_identical_across_thread_counts() {
    let net = VibNet::<f32>::build(&VibNetConfig::desk()).unwrap();
    let (w, s) = desk_inputs(6, 9);
    let target = Tensor::<f32>::full(&[6, 3], 50.0);
    let loss_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let tape = Tape::new();
                let mut rng = ChaCha8Rng::seed_from_u64(4);
                let out = net.forward(&tape, &w, &s, &mut Mode::Train { rng: &mut rng }).unwrap();
                let loss = ops::mse(out.output, &target).unwrap();
                let v = loss.value().item();
                let g = tape.backward(loss).unwrap();
                let gsum: Vec<f32> = net
                    .params()
                    .ids()
                    .map(|id| g.param(id).unwrap().data().iter().sum())
                    .collect();
                (v.to_bits(), gsum.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            })
    };
    let one = loss_with(1);
    assert_eq!(one, loss_with(4));
    assert_eq!(one, loss_with(1));
}

#[test]
fn five_fold_split_of_two_hundred() {
    let folds = kfold_split(200, 5, 7).unwrap();
    assert!(folds.iter().all(|f| f.len() == 40));
    let mut all: Vec<usize> = folds.concat();
    all.sort_unstable();
    assert_eq!(all, (0..200).collect::<Vec<_>>());
}

fn quick_train_config() -> (VibNetConfig, TrainConfig) {
    let mut cfg = VibNetConfig::tiny();
    cfg.precision = vibnet::autodiff::Dtype::F32;
    let hyper = TrainConfig {
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    (cfg, hyper)
}

#[test]
fn constant_targets_are_fitted() {
    let (cfg, mut hyper) = quick_train_config();
    let mut data = samples(12, 1);
    for s in &mut data {
        s.ratings = RatingTriple::new(62.0, 30.0, 45.0);
    }
    hyper.epochs = 40;
    let model = fit::<f32>(&cfg, &data, None, &hyper, 0).unwrap();
    let preds = predict_samples(&model, &data, 8, 1 << 30).unwrap();
    let truths: Vec<_> = data.iter().map(|s| s.ratings).collect();
    let m = vibnet::eval::Metrics::compute(&preds, &truths, None).unwrap();
    assert!(m.averages.rmse < 1.0, "{m:?}");
    let losses: Vec<f64> = model.log.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn empty_training_set_is_an_error() {
    let (cfg, hyper) = quick_train_config();
    assert!(matches!(fit::<f32>(&cfg, &[], None, &hyper, 0), Err(Error::Data(_))));
}

#[test]
fn checkpoint_roundtrip_is_bitwise() {
    let (cfg, hyper) = quick_train_config();
    let data = samples(8, 2);
    let model: Model = fit::<f32>(&cfg, &data, None, &hyper, 0).unwrap().into();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();
    assert_eq!(loaded.normalization(), model.normalization());
    assert_eq!(loaded.training_log(), model.training_log());
    for s in &data {
        let (a, b) = (
            model.predict(&s.waveform).unwrap(),
            loaded.predict(&s.waveform).unwrap(),
        );
        assert_eq!(a.raw.to_array().map(f64::to_bits), b.raw.to_array().map(f64::to_bits));
    }
    // Saving again yields the same bytes.
    assert_eq!(loaded.to_bytes(), model.to_bytes());
}

#[test]
fn checkpoint_errors() {
    let model = Model::untrained(&VibNetConfig::tiny()).unwrap();
    let mut bytes = model.to_bytes();
    bytes[8] = 99;
    assert!(matches!(
        Model::from_bytes(&bytes),
        Err(Error::VersionMismatch { found: 99, expected: 1 })
    ));
    let mut bytes = model.to_bytes();
    let n = bytes.len();
    bytes[n - 1] ^= 0xff;
    assert!(matches!(Model::from_bytes(&bytes), Err(Error::Corrupt(_))));
    assert!(matches!(Model::from_bytes(b"not a model"), Err(Error::Corrupt(_))));
    let bytes = model.to_bytes();
    assert!(matches!(
        Model::from_bytes(&bytes[..bytes.len() - 4]),
        Err(Error::Corrupt(_))
    ));
}

#[test]
fn predict_pads_once_and_is_repeatable() {
    let (cfg, hyper) = quick_train_config();
    let model: Model = fit::<f32>(&cfg, &samples(6, 3), None, &hyper, 0).unwrap().into();
    let w = wave(155.0, 2.0, 1.5);
    let a = model.predict(&w).unwrap();
    assert_eq!(a, model.predict(&zero_pad(&w, 6000).unwrap()).unwrap());
    let z = Waveform::zeros(6000, 1000, Units::G);
    assert_eq!(model.predict(&z).unwrap(), model.predict(&z).unwrap());
    assert!(matches!(
        model.predict(&Waveform::zeros(6001, 1000, Units::G)),
        Err(Error::TooLong { .. })
    ));
    assert!(matches!(
        model.predict(&Waveform::zeros(100, 10_000, Units::G)),
        Err(Error::SampleRate { .. })
    ));
}
