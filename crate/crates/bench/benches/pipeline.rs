use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vibnet::augment::{augment_record, AugmentConfig, AugmentMethod};
use vibnet::autodiff::{ops, Tape, Tensor};
use vibnet::dsp::{mechano_spectrograms, stft, ChannelSet, N_BINS, N_FRAMES};
use vibnet::model::{Mode, VibNet, VibNetConfig};
use vibnet::tacton::{render_pipeline, TactonSpec, Units, Waveform, MODEL_INPUT_LEN, PIPELINE_RATE_HZ};

fn noise(len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new(
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        PIPELINE_RATE_HZ,
        Units::G,
    )
    .unwrap()
}

fn signal(c: &mut Criterion) {
    let w = noise(MODEL_INPUT_LEN, 1);
    c.bench_function("stft 6000", |b| b.iter(|| stft(black_box(&w)).unwrap()));
    for (name, set) in [
        ("two-channel", ChannelSet::two_channel()),
        ("four-channel", ChannelSet::four_channel()),
    ] {
        c.bench_function(&format!("spectrograms {name}"), |b| {
            b.iter(|| mechano_spectrograms(black_box(&w), &set).unwrap())
        });
    }
    let spec = TactonSpec::Sinusoidal {
        amplitude: 1.0,
        carrier_freq: 155.0,
        envelope_freq: 4.0,
        duration: 2.0,
    };
    c.bench_function("render 2 s sine", |b| {
        b.iter(|| render_pipeline(black_box(&spec)).unwrap())
    });
}

fn augmentation(c: &mut Criterion) {
    let w = noise(2000, 2);
    let cfg = AugmentConfig::default();
    let mut group = c.benchmark_group("augment 2 s");
    for method in AugmentMethod::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        group.bench_function(method.name(), |b| {
            b.iter(|| augment_record(black_box(&w), method, &cfg, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let cfg = VibNetConfig::desk();
    let net = VibNet::<f32>::build(&cfg).unwrap();
    let batch = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rand = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let wave = Tensor::new(vec![batch, cfg.input_len], rand(batch * cfg.input_len)).unwrap();
    let spec_len = batch * cfg.input_channels() * N_BINS * N_FRAMES;
    let spec = Tensor::new(vec![batch, cfg.input_channels(), N_BINS, N_FRAMES], rand(spec_len)).unwrap();
    let target = Tensor::new(vec![batch, 3], rand(batch * 3)).unwrap();

    let mut group = c.benchmark_group("desk VibNet batch 8");
    group.sample_size(10);
    group.bench_function("forward eval", |b| {
        b.iter(|| {
            let tape = Tape::new();
            net.forward(&tape, &wave, &spec, &mut Mode::Eval)
                .unwrap()
                .output
                .value()
        })
    });
    group.bench_function("forward+backward train", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(5),
            |mut drop_rng| {
                let tape = Tape::new();
                let out = net
                    .forward(&tape, &wave, &spec, &mut Mode::Train { rng: &mut drop_rng })
                    .unwrap();
                let loss = ops::mse(out.output, &target).unwrap();
                tape.backward(loss).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, signal, augmentation, network);
criterion_main!(benches);
