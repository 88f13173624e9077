//! Image ops over `[B, C, H, W]` tensors. Work is split per sample; any
//! cross-sample reduction is summed in sample order so results do not depend
//! on the thread count.

use rayon::prelude::*;

use super::linalg::{gemm, MatMut, MatRef};
use super::real::Real;
use super::tape::Var;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|r| r / stride + 1)
}

fn dims4<T: Real>(op: &'static str, x: &Tensor<T>) -> Result<[usize; 4]> {
    match x.shape() {
        &[b, c, h, w] => Ok([b, c, h, w]),
        s => Err(Error::Shape {
            op,
            lhs: s.to_vec(),
            rhs: vec![4],
        }),
    }
}

fn im2col<T: Real>(x: &[T], g: &Geom, col: &mut [T]) {
    let l = g.cols();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &mut col[((ci * g.kh + ki) * g.kw + kj) * l..][..l];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oi * g.wo..(oi + 1) * g.wo];
                    if ii < 0 || ii as usize >= g.h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, d) in dst.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *d = if jj < 0 || jj as usize >= g.w {
                            T::zero()
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], g: &Geom, x: &mut [T]) {
    let l = g.cols();
    for ci in 0..g.c {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &col[((ci * g.kh + ki) * g.kw + kj) * l..][..l];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii as usize >= g.h {
                        continue;
                    }
                    for oj in 0..g.wo {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && (jj as usize) < g.w {
                            plane[ii as usize * g.w + jj as usize] += row[oi * g.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

/// Unrolled patches of one sample (borrowed as-is for 1x1 stride-1 kernels).
fn patches<'a, T: Real>(xb: &'a [T], g: &Geom, buf: &'a mut Vec<T>) -> &'a [T] {
    if g.pointwise() {
        xb
    } else {
        buf.resize(g.rows() * g.cols(), T::zero());
        im2col(xb, g, buf);
        buf
    }
}

/// 2-D cross-correlation with zero padding: `x: [B, C, H, W]`,
/// `k: [O, C, kh, kw]`, optional `bias: [O]`.
pub fn conv2d<'t, T: Real>(
    x: Var<'t, T>,
    k: Var<'t, T>,
    bias: Option<Var<'t, T>>,
    stride: usize,
    pad: usize,
) -> Result<Var<'t, T>> {
    let (xv, kv) = (x.value(), k.value());
    let [b, c, h, w] = dims4("conv2d", &xv)?;
    let [o, kc, kh, kw] = dims4("conv2d kernel", &kv)?;
    let bad = || Error::Shape {
        op: "conv2d",
        lhs: xv.shape().to_vec(),
        rhs: kv.shape().to_vec(),
    };
    if kc != c || stride == 0 {
        return Err(bad());
    }
    let ho = out_extent(h, kh, stride, pad).ok_or_else(bad)?;
    let wo = out_extent(w, kw, stride, pad).ok_or_else(bad)?;
    let g = Geom {
        c,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        ho,
        wo,
    };
    let (rows, l) = (g.rows(), g.cols());
    let bv = match bias {
        Some(bvar) => {
            let bv = bvar.value();
            if bv.shape() != [o] {
                return Err(bad());
            }
            Some(bv)
        }
        None => None,
    };
    let mut y = vec![T::zero(); b * o * l];
    let (xd, kd) = (xv.data(), kv.data());
    let bd = bv.as_ref().map(|v| v.data());
    y.par_chunks_mut(o * l).enumerate().for_each(|(bi, yb)| {
        let mut buf = Vec::new();
        let col = patches(&xd[bi * c * h * w..(bi + 1) * c * h * w], &g, &mut buf);
        gemm(
            T::one(),
            MatRef::new(kd, o, rows),
            MatRef::new(col, rows, l),
            T::zero(),
            MatMut::new(yb, o, l),
        );
        if let Some(bd) = bd {
            for (row, &bb) in yb.chunks_mut(l).zip(bd) {
                row.iter_mut().for_each(|v| *v += bb);
            }
        }
    });
    let y = Tensor::new(vec![b, o, ho, wo], y)?;
    let mut parents = vec![x, k];
    parents.extend(bias);
    x.tape().push("conv2d", y, &parents, move |gr, needs| {
        let gd = gr.data();
        let (xd, kd) = (xv.data(), kv.data());
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); b * c * h * w];
            dx.par_chunks_mut(c * h * w).enumerate().for_each(|(bi, dxb)| {
                let gb = MatRef::new(&gd[bi * o * l..(bi + 1) * o * l], o, l);
                if g.pointwise() {
                    gemm(
                        T::one(),
                        MatRef::new(kd, o, rows).t(),
                        gb,
                        T::zero(),
                        MatMut::new(dxb, rows, l),
                    );
                } else {
                    let mut dcol = vec![T::zero(); rows * l];
                    gemm(
                        T::one(),
                        MatRef::new(kd, o, rows).t(),
                        gb,
                        T::zero(),
                        MatMut::new(&mut dcol, rows, l),
                    );
                    col2im(&dcol, &g, dxb);
                }
            });
            Tensor::new(vec![b, c, h, w], dx).expect("shape")
        });
        let dk = needs[1].then(|| {
            let partial: Vec<Vec<T>> = (0..b)
                .into_par_iter()
                .map(|bi| {
                    let mut buf = Vec::new();
                    let col = patches(&xd[bi * c * h * w..(bi + 1) * c * h * w], &g, &mut buf);
                    let mut dk = vec![T::zero(); o * rows];
                    let gb = MatRef::new(&gd[bi * o * l..(bi + 1) * o * l], o, l);
                    gemm(
                        T::one(),
                        gb,
                        MatRef::new(col, rows, l).t(),
                        T::zero(),
                        MatMut::new(&mut dk, o, rows),
                    );
                    dk
                })
                .collect();
            let mut dk = vec![T::zero(); o * rows];
            for p in partial {
                for (a, v) in dk.iter_mut().zip(p) {
                    *a += v;
                }
            }
            Tensor::new(vec![o, c, kh, kw], dk).expect("shape")
        });
        let mut out = vec![dx, dk];
        if needs.len() > 2 {
            let mut db = vec![T::zero(); o];
            for gb in gd.chunks(o * l) {
                for (d, row) in db.iter_mut().zip(gb.chunks(l)) {
                    *d += row.iter().fold(T::zero(), |a, &v| a + v);
                }
            }
            out.push(Some(Tensor::new(vec![o], db).expect("shape")));
        }
        out
    })
}

/// Max pooling without padding; ties route the gradient to the first maximum.
pub fn maxpool2d<T: Real>(x: Var<'_, T>, k: usize, stride: usize) -> Result<Var<'_, T>> {
    let xv = x.value();
    let [b, c, h, w] = dims4("maxpool2d", &xv)?;
    let bad = || Error::Shape {
        op: "maxpool2d",
        lhs: xv.shape().to_vec(),
        rhs: vec![k, stride],
    };
    if k == 0 || stride == 0 {
        return Err(bad());
    }
    let ho = out_extent(h, k, stride, 0).ok_or_else(bad)?;
    let wo = out_extent(w, k, stride, 0).ok_or_else(bad)?;
    let mut y = Vec::with_capacity(b * c * ho * wo);
    let mut arg = Vec::with_capacity(y.capacity());
    for p in 0..b * c {
        let plane = &xv.data()[p * h * w..(p + 1) * h * w];
        for oi in 0..ho {
            for oj in 0..wo {
                let mut best = (oi * stride) * w + oj * stride;
                for di in 0..k {
                    for dj in 0..k {
                        let idx = (oi * stride + di) * w + oj * stride + dj;
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                }
                y.push(plane[best]);
                arg.push(p * h * w + best);
            }
        }
    }
    let shape = xv.shape().to_vec();
    let y = Tensor::new(vec![b, c, ho, wo], y)?;
    x.tape().push("maxpool2d", y, &[x], move |g, _| {
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&i, &gv) in arg.iter().zip(g.data()) {
            d[i] += gv;
        }
        vec![Some(dx)]
    })
}

/// Average pooling without padding.
pub fn avgpool2d<T: Real>(x: Var<'_, T>, k: usize, stride: usize) -> Result<Var<'_, T>> {
    let xv = x.value();
    let [b, c, h, w] = dims4("avgpool2d", &xv)?;
    let bad = || Error::Shape {
        op: "avgpool2d",
        lhs: xv.shape().to_vec(),
        rhs: vec![k, stride],
    };
    if k == 0 || stride == 0 {
        return Err(bad());
    }
    let ho = out_extent(h, k, stride, 0).ok_or_else(bad)?;
    let wo = out_extent(w, k, stride, 0).ok_or_else(bad)?;
    let inv = T::of(1.0 / (k * k) as f64);
    let mut y = Vec::with_capacity(b * c * ho * wo);
    for p in 0..b * c {
        let plane = &xv.data()[p * h * w..(p + 1) * h * w];
        for oi in 0..ho {
            for oj in 0..wo {
                let mut s = T::zero();
                for di in 0..k {
                    for dj in 0..k {
                        s += plane[(oi * stride + di) * w + oj * stride + dj];
                    }
                }
                y.push(s * inv);
            }
        }
    }
    let y = Tensor::new(vec![b, c, ho, wo], y)?;
    x.tape().push("avgpool2d", y, &[x], move |g, _| {
        let mut dx = Tensor::zeros(&[b, c, h, w]);
        let d = dx.data_mut();
        for p in 0..b * c {
            for oi in 0..ho {
                for oj in 0..wo {
                    let gv = g.data()[(p * ho + oi) * wo + oj] * inv;
                    for di in 0..k {
                        for dj in 0..k {
                            d[p * h * w + (oi * stride + di) * w + oj * stride + dj] += gv;
                        }
                    }
                }
            }
        }
        vec![Some(dx)]
    })
}

/// Mean over the spatial axes: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool<T: Real>(x: Var<'_, T>) -> Result<Var<'_, T>> {
    let xv = x.value();
    let [b, c, h, w] = dims4("global_avg_pool", &xv)?;
    let hw = h * w;
    let inv = T::of(1.0 / hw as f64);
    let y: Vec<T> = xv
        .data()
        .chunks(hw)
        .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    let y = Tensor::new(vec![b, c], y)?;
    x.tape().push("global_avg_pool", y, &[x], move |g, _| {
        let mut d = Vec::with_capacity(b * c * hw);
        for &gv in g.data() {
            d.extend(std::iter::repeat_n(gv * inv, hw));
        }
        vec![Some(Tensor::new(vec![b, c, h, w], d).expect("shape"))]
    })
}

/// Normalization statistics source for [`batchnorm2d`].
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a, T> {
    /// Normalize with the batch's own statistics.
    Train,
    /// Normalize with stored running statistics.
    Eval { mean: &'a [T], var: &'a [T] },
}

/// Per-channel statistics of a training batch; `var` is the unbiased
/// estimate, as used for running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Batch normalization over `(B, H, W)` per channel followed by the affine
/// map `gamma * x̂ + beta`. In training mode the batch statistics are
/// returned so the caller can update its running estimates.
pub fn batchnorm2d<'t, T: Real>(
    x: Var<'t, T>,
    gamma: Var<'t, T>,
    beta: Var<'t, T>,
    mode: BnMode<'_, T>,
    eps: f64,
) -> Result<(Var<'t, T>, Option<BatchStats<T>>)> {
    let (xv, gv, bv) = (x.value(), gamma.value(), beta.value());
    let [b, c, h, w] = dims4("batchnorm2d", &xv)?;
    if gv.shape() != [c] || bv.shape() != [c] {
        return Err(Error::Shape {
            op: "batchnorm2d",
            lhs: xv.shape().to_vec(),
            rhs: gv.shape().to_vec(),
        });
    }
    let hw = h * w;
    let n = b * hw;
    let eps = T::of(eps);
    let channel = move |ci: usize| (0..b).flat_map(move |bi| (bi * c + ci) * hw..(bi * c + ci + 1) * hw);

    let (mean, var_biased, stats) = match mode {
        BnMode::Train => {
            let nf = T::of(n as f64);
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ci in 0..c {
                let m = channel(ci).fold(T::zero(), |a, i| a + xv.data()[i]) / nf;
                let v = channel(ci).fold(T::zero(), |a, i| {
                    let d = xv.data()[i] - m;
                    a + d * d
                }) / nf;
                mean[ci] = m;
                var[ci] = v;
            }
            let unbiased = if n > 1 {
                var.iter().map(|&v| v * nf / T::of((n - 1) as f64)).collect()
            } else {
                var.clone()
            };
            let stats = BatchStats {
                mean: mean.clone(),
                var: unbiased,
            };
            (mean, var, Some(stats))
        }
        BnMode::Eval { mean, var } => {
            if mean.len() != c || var.len() != c {
                return Err(Error::Shape {
                    op: "batchnorm2d running stats",
                    lhs: vec![c],
                    rhs: vec![mean.len(), var.len()],
                });
            }
            (mean.to_vec(), var.to_vec(), None)
        }
    };
    let train = stats.is_some();
    let inv: Vec<T> = var_biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); xv.len()];
    let mut y = vec![T::zero(); xv.len()];
    for ci in 0..c {
        for i in channel(ci) {
            let xh = (xv.data()[i] - mean[ci]) * inv[ci];
            xhat[i] = xh;
            y[i] = gv.data()[ci] * xh + bv.data()[ci];
        }
    }
    let y = Tensor::new(xv.shape().to_vec(), y)?;
    let out = x.tape().push("batchnorm2d", y, &[x, gamma, beta], move |g, needs| {
        let gd = g.data();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for ci in 0..c {
            for i in channel(ci) {
                dgamma[ci] += gd[i] * xhat[i];
                dbeta[ci] += gd[i];
            }
        }
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); gd.len()];
            let nf = T::of(n as f64);
            for ci in 0..c {
                let k = gv.data()[ci] * inv[ci];
                if train {
                    let (sg, sgx) = (dbeta[ci], dgamma[ci]);
                    for i in channel(ci) {
                        dx[i] = k / nf * (nf * gd[i] - sg - xhat[i] * sgx);
                    }
                } else {
                    for i in channel(ci) {
                        dx[i] = k * gd[i];
                    }
                }
            }
            Tensor::new(vec![b, c, h, w], dx).expect("shape")
        });
        vec![
            dx,
            Some(Tensor::new(vec![c], dgamma).expect("shape")),
            Some(Tensor::new(vec![c], dbeta).expect("shape")),
        ]
    })?;
    Ok((out, stats))
}
