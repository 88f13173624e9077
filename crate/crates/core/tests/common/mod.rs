//! Gradient-check cases shared by the op tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vibnet::autodiff::gradcheck::{check, GradCheck};
use vibnet::autodiff::{self as ad, ops, BnMode, Tensor};
use vibnet::model::{Mode, VibNet, VibNetConfig};

/// Central-difference step.
pub const EPS: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const TOL: f64 = 1e-4;
pub const SEEDS_PER_OP: u64 = 10;

pub type Case = fn(&mut ChaCha8Rng) -> GradCheck;

pub fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst result of `case` over [`SEEDS_PER_OP`] random shapes; `checked`
/// is the total over all seeds.
pub fn over_seeds(case: Case) -> GradCheck {
    let mut total = 0;
    let mut worst: Option<GradCheck> = None;
    for seed in 0..SEEDS_PER_OP {
        let r = case(&mut ChaCha8Rng::seed_from_u64(seed * 7919 + 1));
        total += r.checked;
        if worst.as_ref().is_none_or(|w| r.max_rel_err > w.max_rel_err) {
            worst = Some(r);
        }
    }
    GradCheck {
        checked: total,
        ..worst.expect("at least one seed")
    }
}

pub fn assert_ok(name: &str, r: &GradCheck) {
    assert!(r.checked > 0, "{name}: nothing checked");
    assert!(
        r.max_rel_err < TOL,
        "{name}: max rel err {:e} at {:?}",
        r.max_rel_err,
        r.worst
    );
}

pub const OP_CASES: &[(&str, Case)] = &[
    ("add/scale", add_scale),
    ("relu", relu),
    ("dropout", dropout),
    ("linear", linear),
    ("mse", mse),
    ("sum", sum),
    ("flatten/swap01/select0", shape_ops),
    ("concat", concat),
    ("conv2d", conv2d),
    ("maxpool2d", maxpool2d),
    ("avgpool2d", avgpool2d),
    ("global_avg_pool", global_avg_pool),
    ("batchnorm2d train", batchnorm_train),
    ("batchnorm2d eval", batchnorm_eval),
    ("gru", gru),
    ("gru final state", gru_final_state),
    ("two-layer gru", stacked_gru),
    ("conv-bn-relu-linear-mse", composite),
];

pub fn add_scale(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [rng.random_range(1..5), rng.random_range(1..5)];
    let w = rand_tensor(rng, &shape);
    let inputs = [rand_tensor(rng, &shape), rand_tensor(rng, &shape)];
    check(&inputs, EPS, |_, v| {
        let y = ops::scale(ops::add(v[0], v[1])?, 1.7)?;
        ops::weighted_sum(y, &w)
    })
    .unwrap()
}

pub fn relu(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [rng.random_range(1..6), rng.random_range(1..6)];
    let w = rand_tensor(rng, &shape);
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| {
        ops::weighted_sum(ops::relu(v[0])?, &w)
    })
    .unwrap()
}

pub fn dropout(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [rng.random_range(1..6), rng.random_range(1..6)];
    let w = rand_tensor(rng, &shape);
    let seed: u64 = rng.random();
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        ops::weighted_sum(ops::dropout(v[0], 0.5, true, &mut r)?, &w)
    })
    .unwrap()
}

pub fn linear(rng: &mut ChaCha8Rng) -> GradCheck {
    let (b, i, o) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
    let with_bias = rng.random_bool(0.5);
    let w = rand_tensor(rng, &[b, o]);
    let mut inputs = vec![rand_tensor(rng, &[b, i]), rand_tensor(rng, &[o, i])];
    if with_bias {
        inputs.push(rand_tensor(rng, &[o]));
    }
    check(&inputs, EPS, |_, v| {
        ops::weighted_sum(ops::linear(v[0], v[1], v.get(2).copied())?, &w)
    })
    .unwrap()
}

pub fn mse(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [rng.random_range(1..5), 3];
    let t = rand_tensor(rng, &shape);
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| ops::mse(v[0], &t)).unwrap()
}

pub fn sum(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [rng.random_range(1..5), rng.random_range(1..5)];
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| ops::sum(ops::relu(v[0])?)).unwrap()
}

pub fn shape_ops(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4)];
    let i = rng.random_range(0..shape[1]);
    let w = rand_tensor(rng, &[shape[0], shape[2]]);
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| {
        let s = ops::swap01(v[0])?;
        let f = ops::flatten(s)?;
        let back = ops::reshape(f, &[shape[1], shape[0], shape[2]])?;
        ops::weighted_sum(ops::select0(back, i)?, &w)
    })
    .unwrap()
}

pub fn concat(rng: &mut ChaCha8Rng) -> GradCheck {
    let axis = rng.random_range(0..2);
    let mut a = [rng.random_range(1..4), rng.random_range(1..4)];
    let mut b = a;
    a[axis] = rng.random_range(1..4);
    b[axis] = rng.random_range(1..4);
    let mut out = a;
    out[axis] = a[axis] + b[axis];
    let w = rand_tensor(rng, &out);
    check(&[rand_tensor(rng, &a), rand_tensor(rng, &b)], EPS, |_, v| {
        ops::weighted_sum(ops::concat(&[v[0], v[1]], axis)?, &w)
    })
    .unwrap()
}

pub fn conv2d(rng: &mut ChaCha8Rng) -> GradCheck {
    let (b, c, o) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
    let k = [1, 2, 3][rng.random_range(0..3)];
    let stride = rng.random_range(1..3);
    let pad = rng.random_range(0..k);
    let (h, w) = (rng.random_range(k..k + 5), rng.random_range(k..k + 5));
    let with_bias = rng.random_bool(0.5);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let proj = rand_tensor(rng, &[b, o, ho, wo]);
    let mut inputs = vec![rand_tensor(rng, &[b, c, h, w]), rand_tensor(rng, &[o, c, k, k])];
    if with_bias {
        inputs.push(rand_tensor(rng, &[o]));
    }
    check(&inputs, EPS, |_, v| {
        ops::weighted_sum(ad::conv2d(v[0], v[1], v.get(2).copied(), stride, pad)?, &proj)
    })
    .unwrap()
}

fn pool_case(rng: &mut ChaCha8Rng, max: bool) -> GradCheck {
    let (k, s) = (rng.random_range(1..4), rng.random_range(1..3));
    let shape = [
        rng.random_range(1..3),
        rng.random_range(1..3),
        rng.random_range(k..k + 4),
        rng.random_range(k..k + 4),
    ];
    let out = [shape[0], shape[1], (shape[2] - k) / s + 1, (shape[3] - k) / s + 1];
    let w = rand_tensor(rng, &out);
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| {
        let y = if max {
            ad::maxpool2d(v[0], k, s)?
        } else {
            ad::avgpool2d(v[0], k, s)?
        };
        ops::weighted_sum(y, &w)
    })
    .unwrap()
}

pub fn maxpool2d(rng: &mut ChaCha8Rng) -> GradCheck {
    pool_case(rng, true)
}

pub fn avgpool2d(rng: &mut ChaCha8Rng) -> GradCheck {
    pool_case(rng, false)
}

pub fn global_avg_pool(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [
        rng.random_range(1..3),
        rng.random_range(1..4),
        rng.random_range(1..5),
        rng.random_range(1..5),
    ];
    let w = rand_tensor(rng, &shape[..2]);
    check(&[rand_tensor(rng, &shape)], EPS, |_, v| {
        ops::weighted_sum(ad::global_avg_pool(v[0])?, &w)
    })
    .unwrap()
}

pub fn batchnorm_train(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [
        rng.random_range(2..4),
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(2..4),
    ];
    let c = shape[1];
    let w = rand_tensor(rng, &shape);
    let inputs = [rand_tensor(rng, &shape), rand_tensor(rng, &[c]), rand_tensor(rng, &[c])];
    check(&inputs, EPS, |_, v| {
        let (y, _) = ad::batchnorm2d(v[0], v[1], v[2], BnMode::Train, 1e-5)?;
        ops::weighted_sum(y, &w)
    })
    .unwrap()
}

pub fn batchnorm_eval(rng: &mut ChaCha8Rng) -> GradCheck {
    let shape = [
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(1..4),
    ];
    let c = shape[1];
    let w = rand_tensor(rng, &shape);
    let mean: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let var: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
    let inputs = [rand_tensor(rng, &shape), rand_tensor(rng, &[c]), rand_tensor(rng, &[c])];
    check(&inputs, EPS, |_, v| {
        let (y, _) = ad::batchnorm2d(v[0], v[1], v[2], BnMode::Eval { mean: &mean, var: &var }, 1e-5)?;
        ops::weighted_sum(y, &w)
    })
    .unwrap()
}

pub fn gru(rng: &mut ChaCha8Rng) -> GradCheck {
    let (t, b, i, h) = (
        rng.random_range(1..5),
        rng.random_range(1..3),
        rng.random_range(1..4),
        rng.random_range(1..5),
    );
    let with_h0 = rng.random_bool(0.5);
    let w = rand_tensor(rng, &[t, b, h]);
    let mut inputs = vec![
        rand_tensor(rng, &[t, b, i]),
        rand_tensor(rng, &[3 * h, i]),
        rand_tensor(rng, &[3 * h, h]),
        rand_tensor(rng, &[3 * h]),
    ];
    if with_h0 {
        inputs.push(rand_tensor(rng, &[b, h]));
    }
    check(&inputs, EPS, |_, v| {
        ops::weighted_sum(ad::gru(v[0], v.get(4).copied(), v[1], v[2], v[3])?, &w)
    })
    .unwrap()
}

/// Sum of the last hidden state after 3 steps with input and hidden size 4.
pub fn gru_final_state(rng: &mut ChaCha8Rng) -> GradCheck {
    let (t, b, i, h) = (3, 1, 4, 4);
    let inputs = [
        rand_tensor(rng, &[t, b, i]),
        rand_tensor(rng, &[3 * h, i]),
        rand_tensor(rng, &[3 * h, h]),
        rand_tensor(rng, &[3 * h]),
        rand_tensor(rng, &[b, h]),
    ];
    check(&inputs, EPS, |_, v| {
        let hs = ad::gru(v[0], Some(v[4]), v[1], v[2], v[3])?;
        ops::sum(ops::select0(hs, t - 1)?)
    })
    .unwrap()
}

pub fn stacked_gru(rng: &mut ChaCha8Rng) -> GradCheck {
    let (t, b, i, h) = (
        rng.random_range(2..5),
        rng.random_range(1..3),
        rng.random_range(1..4),
        rng.random_range(1..4),
    );
    let w = rand_tensor(rng, &[b, h]);
    let inputs = [
        rand_tensor(rng, &[t, b, i]),
        rand_tensor(rng, &[3 * h, i]),
        rand_tensor(rng, &[3 * h, h]),
        rand_tensor(rng, &[3 * h]),
        rand_tensor(rng, &[3 * h, h]),
        rand_tensor(rng, &[3 * h, h]),
        rand_tensor(rng, &[3 * h]),
    ];
    check(&inputs, EPS, |_, v| {
        let l1 = ad::gru(v[0], None, v[1], v[2], v[3])?;
        let l2 = ad::gru(l1, None, v[4], v[5], v[6])?;
        ops::weighted_sum(ops::select0(l2, t - 1)?, &w)
    })
    .unwrap()
}

pub fn composite(rng: &mut ChaCha8Rng) -> GradCheck {
    let (b, c, o, hw) = (
        rng.random_range(2..4),
        rng.random_range(1..3),
        rng.random_range(1..4),
        rng.random_range(3..6),
    );
    let feats = o * hw * hw;
    let target = rand_tensor(rng, &[b, 3]);
    let inputs = [
        rand_tensor(rng, &[b, c, hw, hw]),
        rand_tensor(rng, &[o, c, 3, 3]),
        rand_tensor(rng, &[o]),
        rand_tensor(rng, &[o]),
        rand_tensor(rng, &[3, feats]),
        rand_tensor(rng, &[3]),
    ];
    check(&inputs, EPS, |_, v| {
        let y = ad::conv2d(v[0], v[1], None, 1, 1)?;
        let (y, _) = ad::batchnorm2d(y, v[2], v[3], BnMode::Train, 1e-5)?;
        let y = ops::flatten(ops::relu(y)?)?;
        ops::mse(ops::linear(y, v[4], Some(v[5]))?, &target)
    })
    .unwrap()
}

/// Every parameter of the tiny network, in train or eval mode, at a
/// perturbed generic point. At initialization betas are zero and running
/// statistics are unit, so eval-mode activations can sit exactly on a
/// ReLU kink where the derivative is undefined.
pub fn tiny_end_to_end(train: bool) -> (GradCheck, usize) {
    let cfg = VibNetConfig::tiny();
    let mut net = VibNet::<f64>::build(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for b in net.buffers_mut() {
        b.mean.iter_mut().for_each(|m| *m = rng.random_range(-0.5..0.5));
        b.var.iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
    }
    let (b, len) = (3, 60);
    let wave = rand_tensor(&mut rng, &[b, len]);
    let spec = rand_tensor(&mut rng, &[b, cfg.input_channels(), 16, 12]);
    let target = rand_tensor(&mut rng, &[b, 3]);
    let params: Vec<Tensor<f64>> = net
        .params()
        .iter()
        .map(|(_, t)| {
            let noise = rand_tensor(&mut rng, t.shape());
            t.zip_map(&noise, |v, n| v + 0.1 * n)
        })
        .collect();
    let r = check(&params, EPS, |tape, p| {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(5);
        let mut mode = if train {
            Mode::Train { rng: &mut drop_rng }
        } else {
            Mode::Eval
        };
        let out = net.forward_with(tape, p, &wave, &spec, &mut mode)?;
        ops::mse(out.output, &target)
    })
    .unwrap();
    (r, net.param_count())
}
