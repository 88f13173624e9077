use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{GruOutput, VibNetConfig};
use crate::autodiff::{self as ad, ops, BatchStats, BnMode, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct ConvBn {
    conv: ParamId,
    gamma: ParamId,
    beta: ParamId,
    bn: usize,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone)]
struct Bottleneck {
    reduce: ConvBn,
    spatial: ConvBn,
    expand: ConvBn,
    shortcut: Option<ConvBn>,
}

#[derive(Debug, Clone)]
struct GruLayer {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBuffer<T> {
    pub name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Forward-pass mode. Training draws dropout masks from `rng` and uses batch
/// statistics; evaluation is deterministic.
pub enum Mode<'a> {
    Train { rng: &'a mut ChaCha8Rng },
    Eval,
}

impl Mode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

pub struct ForwardOutput<'t, T: Real> {
    /// `[B, 3]` raw predictions.
    pub output: Var<'t, T>,
    /// Batch statistics per batch-norm layer (training mode only).
    pub bn_stats: Vec<(usize, BatchStats<T>)>,
}

/// Dual-stream network: a stacked GRU over the framed waveform and a
/// bottleneck residual CNN over the spectrogram stack, fused by a dense head.
#[derive(Debug, Clone)]
pub struct VibNet<T> {
    config: VibNetConfig,
    params: ParamStore<T>,
    buffers: Vec<BnBuffer<T>>,
    gru: Vec<GruLayer>,
    stem: ConvBn,
    blocks: Vec<Bottleneck>,
    head: Vec<Dense>,
}

struct Builder<'a, T> {
    params: ParamStore<T>,
    buffers: Vec<BnBuffer<T>>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn conv_bn(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> ConvBn {
        let conv = self
            .params
            .add_uniform(format!("{name}.conv"), &[cout, cin, k, k], cin * k * k, self.rng);
        let gamma = self
            .params
            .add(format!("{name}.bn.gamma"), Tensor::full(&[cout], T::one()));
        let beta = self.params.add(format!("{name}.bn.beta"), Tensor::zeros(&[cout]));
        self.buffers.push(BnBuffer {
            name: format!("{name}.bn"),
            mean: vec![T::zero(); cout],
            var: vec![T::one(); cout],
        });
        ConvBn {
            conv,
            gamma,
            beta,
            bn: self.buffers.len() - 1,
            stride,
            pad: k / 2,
        }
    }

    fn dense(&mut self, name: &str, i: usize, o: usize) -> Dense {
        Dense {
            w: self.params.add_uniform(format!("{name}.w"), &[o, i], i, self.rng),
            b: self.params.add_uniform(format!("{name}.b"), &[o], i, self.rng),
        }
    }
}

impl<T: Real> VibNet<T> {
    pub fn build(config: &VibNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut b = Builder {
            params: ParamStore::new(),
            buffers: Vec::new(),
            rng: &mut rng,
        };
        let h = config.gru_hidden;
        let mut gru = Vec::new();
        for l in 0..config.gru_layers {
            let i = if l == 0 { config.seq_frame } else { h };
            gru.push(GruLayer {
                w: b.params.add_uniform(format!("gru.{l}.w"), &[3 * h, i], i, b.rng),
                u: b.params.add_uniform(format!("gru.{l}.u"), &[3 * h, h], h, b.rng),
                b: b.params.add_uniform(format!("gru.{l}.b"), &[3 * h], h, b.rng),
            });
        }
        let rs = &config.resnet;
        let stem = b.conv_bn("cnn.stem", config.input_channels(), rs.stem_channels, 3, 2);
        let mut blocks = Vec::new();
        let mut cin = rs.stem_channels;
        for (si, stage) in rs.stages.iter().enumerate() {
            for bi in 0..stage.blocks {
                let name = format!("cnn.s{si}.b{bi}");
                let stride = if bi == 0 { stage.stride } else { 1 };
                let shortcut = (stride != 1 || cin != stage.out)
                    .then(|| b.conv_bn(&format!("{name}.proj"), cin, stage.out, 1, stride));
                blocks.push(Bottleneck {
                    reduce: b.conv_bn(&format!("{name}.c1"), cin, stage.mid, 1, 1),
                    spatial: b.conv_bn(&format!("{name}.c2"), stage.mid, stage.mid, 3, stride),
                    expand: b.conv_bn(&format!("{name}.c3"), stage.mid, stage.out, 1, 1),
                    shortcut,
                });
                cin = stage.out;
            }
        }
        let mut head = Vec::new();
        let mut width = config.gru_features() + rs.out_channels();
        for (i, &d) in config.head_dims.iter().enumerate() {
            head.push(b.dense(&format!("head.{i}"), width, d));
            width = d;
        }
        head.push(b.dense("head.out", width, 3));
        Ok(Self {
            config: config.clone(),
            params: b.params,
            buffers: b.buffers,
            gru,
            stem,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &VibNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn buffers(&self) -> &[BnBuffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [BnBuffer<T>] {
        &mut self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn output_bias_id(&self) -> ParamId {
        self.head.last().expect("head has an output layer").b
    }

    /// Folds one training batch's statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[(usize, BatchStats<T>)]) {
        let m = T::of(self.config.bn_momentum);
        let keep = T::one() - m;
        for (i, s) in stats {
            let buf = &mut self.buffers[*i];
            for (r, &b) in buf.mean.iter_mut().zip(&s.mean) {
                *r = keep * *r + m * b;
            }
            for (r, &b) in buf.var.iter_mut().zip(&s.var) {
                *r = keep * *r + m * b;
            }
        }
    }

    /// `wave: [B, L]` normalized waveforms with `L` a multiple of
    /// `seq_frame`; `spec: [B, C, F, N]` normalized spectrogram stacks.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape<T>,
        wave: &Tensor<T>,
        spec: &Tensor<T>,
        mode: &mut Mode<'_>,
    ) -> Result<ForwardOutput<'t, T>> {
        let train = mode.is_train();
        let p: Vec<Var<'t, T>> = self
            .params
            .ids()
            .map(|id| {
                if train {
                    tape.param(id, self.params.get(id))
                } else {
                    tape.constant(self.params.get(id).clone())
                }
            })
            .collect::<Result<_>>()?;
        self.forward_with(tape, &p, wave, spec, mode)
    }

    /// [`VibNet::forward`] with caller-supplied parameter variables, one per
    /// entry of [`VibNet::params`] in order.
    pub fn forward_with<'t>(
        &self,
        tape: &'t Tape<T>,
        p: &[Var<'t, T>],
        wave: &Tensor<T>,
        spec: &Tensor<T>,
        mode: &mut Mode<'_>,
    ) -> Result<ForwardOutput<'t, T>> {
        let cfg = &self.config;
        let (&[bw, len], &[bs, c, _, _]) = (wave.shape(), spec.shape()) else {
            return Err(Error::Shape {
                op: "vibnet forward",
                lhs: wave.shape().to_vec(),
                rhs: spec.shape().to_vec(),
            });
        };
        let flat_len_ok = cfg.gru_output != GruOutput::Flatten || len == cfg.input_len;
        if bw != bs || c != cfg.input_channels() || len % cfg.seq_frame != 0 || len == 0 || !flat_len_ok {
            return Err(Error::Shape {
                op: "vibnet forward",
                lhs: wave.shape().to_vec(),
                rhs: spec.shape().to_vec(),
            });
        }
        if p.len() != self.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter variables, got {}",
                self.params.len(),
                p.len()
            )));
        }
        let train = mode.is_train();
        let var = |id: ParamId| p[id.0];
        let mut bn_stats = Vec::new();

        // Recurrent stream over [steps, B, seq_frame].
        let steps = len / cfg.seq_frame;
        let frames = ops::swap01_tensor(&wave.clone().reshape(&[bs, steps, cfg.seq_frame])?);
        let mut h = tape.constant(frames)?;
        for layer in &self.gru {
            h = ad::gru(h, None, var(layer.w), var(layer.u), var(layer.b))?;
        }
        let gru_feat = match cfg.gru_output {
            GruOutput::FinalState => ops::select0(h, steps - 1)?,
            GruOutput::Flatten => ops::flatten(ops::swap01(h)?)?,
        };

        // Convolutional stream.
        let conv_bn = |x: Var<'t, T>, l: &ConvBn, stats: &mut Vec<_>| -> Result<Var<'t, T>> {
            let y = ad::conv2d(x, var(l.conv), None, l.stride, l.pad)?;
            let buf = &self.buffers[l.bn];
            let bn_mode = if train {
                BnMode::Train
            } else {
                BnMode::Eval {
                    mean: &buf.mean,
                    var: &buf.var,
                }
            };
            let (y, s) = ad::batchnorm2d(y, var(l.gamma), var(l.beta), bn_mode, cfg.bn_eps)?;
            if let Some(s) = s {
                stats.push((l.bn, s));
            }
            Ok(y)
        };
        let x = tape.constant(spec.clone())?;
        let x = ops::relu(conv_bn(x, &self.stem, &mut bn_stats)?)?;
        let mut x = ad::maxpool2d(x, 2, 2)?;
        for blk in &self.blocks {
            let y = ops::relu(conv_bn(x, &blk.reduce, &mut bn_stats)?)?;
            let y = ops::relu(conv_bn(y, &blk.spatial, &mut bn_stats)?)?;
            let y = conv_bn(y, &blk.expand, &mut bn_stats)?;
            let skip = match &blk.shortcut {
                Some(s) => conv_bn(x, s, &mut bn_stats)?,
                None => x,
            };
            x = ops::relu(ops::add(y, skip)?)?;
        }
        let cnn_feat = ad::global_avg_pool(x)?;

        // Fused head.
        let mut z = ops::concat(&[gru_feat, cnn_feat], 1)?;
        let (hidden, out) = self.head.split_at(self.head.len() - 1);
        for d in hidden {
            z = ops::relu(ops::linear(z, var(d.w), Some(var(d.b)))?)?;
            if let Mode::Train { rng } = mode {
                z = ops::dropout(z, cfg.dropout_p, true, &mut **rng)?;
            }
        }
        let output = ops::linear(z, var(out[0].w), Some(var(out[0].b)))?;
        Ok(ForwardOutput { output, bn_stats })
    }
}
