//! Differentiable elementwise, dense, reduction and shape ops.

use rand::Rng;

use super::linalg::{gemm, MatMut, MatRef};
use super::real::Real;
use super::tape::Var;
use super::tensor::Tensor;
use crate::{Error, Result};

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

pub fn add<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    let (av, bv) = (a.value(), b.value());
    if av.shape() != bv.shape() {
        return Err(shape_err("add", av.shape(), bv.shape()));
    }
    let y = av.zip_map(&bv, |x, y| x + y);
    a.tape()
        .push("add", y, &[a, b], |g, _| vec![Some(g.clone()), Some(g.clone())])
}

/// Multiplies by a constant.
pub fn scale<'t, T: Real>(x: Var<'t, T>, s: f64) -> Result<Var<'t, T>> {
    let s = T::of(s);
    let y = x.value().map(|v| v * s);
    x.tape()
        .push("scale", y, &[x], move |g, _| vec![Some(g.map(|v| v * s))])
}

/// `max(x, 0)`, with derivative 0 at 0.
pub fn relu<T: Real>(x: Var<'_, T>) -> Result<Var<'_, T>> {
    let xv = x.value();
    let y = xv.map(|v| if v > T::zero() { v } else { T::zero() });
    x.tape().push("relu", y, &[x], move |g, _| {
        vec![Some(g.zip_map(&xv, |g, x| if x > T::zero() { g } else { T::zero() }))]
    })
}

/// Inverted dropout. Outside training, or with `p == 0`, returns `x` itself
/// and draws nothing from `rng`.
pub fn dropout<'t, T: Real>(x: Var<'t, T>, p: f64, train: bool, rng: &mut impl Rng) -> Result<Var<'t, T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok(x);
    }
    let xv = x.value();
    let keep = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..xv.len())
        .map(|_| if rng.random::<f64>() >= p { keep } else { T::zero() })
        .collect();
    let mask = Tensor::new(xv.shape().to_vec(), mask)?;
    let y = xv.zip_map(&mask, |a, m| a * m);
    x.tape().push("dropout", y, &[x], move |g, _| {
        vec![Some(g.zip_map(&mask, |a, m| a * m))]
    })
}

/// `y = x Wᵀ + b` for `x: [B, I]`, `W: [O, I]`, `b: [O]`.
pub fn linear<'t, T: Real>(x: Var<'t, T>, w: Var<'t, T>, b: Option<Var<'t, T>>) -> Result<Var<'t, T>> {
    let (xv, wv) = (x.value(), w.value());
    if xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[1] {
        return Err(shape_err("linear", xv.shape(), wv.shape()));
    }
    let (bs, i, o) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
    let mut y = vec![T::zero(); bs * o];
    gemm(
        T::one(),
        MatRef::new(xv.data(), bs, i),
        MatRef::new(wv.data(), o, i).t(),
        T::zero(),
        MatMut::new(&mut y, bs, o),
    );
    let mut parents = vec![x, w];
    if let Some(b) = b {
        let bv = b.value();
        if bv.shape() != [o] {
            return Err(shape_err("linear bias", bv.shape(), &[o]));
        }
        for row in y.chunks_mut(o) {
            for (v, &bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        parents.push(b);
    }
    let y = Tensor::new(vec![bs, o], y)?;
    x.tape().push("linear", y, &parents, move |g, needs| {
        let gd = g.data();
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); bs * i];
            gemm(
                T::one(),
                MatRef::new(gd, bs, o),
                MatRef::new(wv.data(), o, i),
                T::zero(),
                MatMut::new(&mut dx, bs, i),
            );
            Tensor::new(vec![bs, i], dx).expect("shape")
        });
        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); o * i];
            gemm(
                T::one(),
                MatRef::new(gd, bs, o).t(),
                MatRef::new(xv.data(), bs, i),
                T::zero(),
                MatMut::new(&mut dw, o, i),
            );
            Tensor::new(vec![o, i], dw).expect("shape")
        });
        let mut out = vec![dx, dw];
        if needs.len() > 2 {
            let mut db = vec![T::zero(); o];
            for row in gd.chunks(o) {
                for (d, &v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            out.push(Some(Tensor::new(vec![o], db).expect("shape")));
        }
        out
    })
}

/// Mean squared error over all elements against a constant target.
pub fn mse<'t, T: Real>(pred: Var<'t, T>, target: &Tensor<T>) -> Result<Var<'t, T>> {
    let pv = pred.value();
    if pv.shape() != target.shape() {
        return Err(shape_err("mse", pv.shape(), target.shape()));
    }
    let n = T::of(pv.len() as f64);
    let diff = pv.zip_map(target, |p, t| p - t);
    let loss = diff.data().iter().fold(T::zero(), |acc, &d| acc + d * d) / n;
    pred.tape().push("mse", Tensor::scalar(loss), &[pred], move |g, _| {
        let k = g.item() * T::of(2.0) / n;
        vec![Some(diff.map(|d| d * k))]
    })
}

pub fn sum<T: Real>(x: Var<'_, T>) -> Result<Var<'_, T>> {
    let xv = x.value();
    let s = xv.data().iter().fold(T::zero(), |a, &b| a + b);
    let shape = xv.shape().to_vec();
    x.tape().push("sum", Tensor::scalar(s), &[x], move |g, _| {
        vec![Some(Tensor::full(&shape, g.item()))]
    })
}

/// `sum(x ⊙ c)` for a constant `c`; projects a tensor to a scalar loss.
pub fn weighted_sum<'t, T: Real>(x: Var<'t, T>, c: &Tensor<T>) -> Result<Var<'t, T>> {
    let xv = x.value();
    if xv.shape() != c.shape() {
        return Err(shape_err("weighted_sum", xv.shape(), c.shape()));
    }
    let s = xv.data().iter().zip(c.data()).fold(T::zero(), |a, (&x, &c)| a + x * c);
    let c = c.clone();
    x.tape().push("weighted_sum", Tensor::scalar(s), &[x], move |g, _| {
        let k = g.item();
        vec![Some(c.map(|v| v * k))]
    })
}

pub fn reshape<'t, T: Real>(x: Var<'t, T>, shape: &[usize]) -> Result<Var<'t, T>> {
    let xv = x.value();
    let old = xv.shape().to_vec();
    let y = (*xv).clone().reshape(shape)?;
    x.tape().push("reshape", y, &[x], move |g, _| {
        vec![Some(g.clone().reshape(&old).expect("same size"))]
    })
}

/// `[B, ...] -> [B, prod(...)]`.
pub fn flatten<T: Real>(x: Var<'_, T>) -> Result<Var<'_, T>> {
    let s = x.shape();
    if s.is_empty() {
        return Err(shape_err("flatten", &s, &[]));
    }
    let rest: usize = s[1..].iter().product();
    reshape(x, &[s[0], rest])
}

pub fn concat<'t, T: Real>(xs: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    let first = xs.first().ok_or_else(|| Error::Config("concat of nothing".into()))?;
    let vals: Vec<_> = xs.iter().map(|x| x.value()).collect();
    let refs: Vec<&Tensor<T>> = vals.iter().map(|v| &**v).collect();
    let y = Tensor::concat(&refs, axis)?;
    let sizes: Vec<usize> = vals.iter().map(|v| v.shape()[axis]).collect();
    first.tape().push("concat", y, xs, move |g, _| {
        g.split(axis, &sizes)
            .expect("concat shapes")
            .into_iter()
            .map(Some)
            .collect()
    })
}

/// Swaps the two leading axes: `[A, B, ...] -> [B, A, ...]`.
pub fn swap01<T: Real>(x: Var<'_, T>) -> Result<Var<'_, T>> {
    let xv = x.value();
    if xv.rank() < 2 {
        return Err(shape_err("swap01", xv.shape(), &[]));
    }
    let y = swap01_tensor(&xv);
    x.tape().push("swap01", y, &[x], |g, _| vec![Some(swap01_tensor(g))])
}

pub(crate) fn swap01_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (a, b) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..b {
        for i in 0..a {
            let start = (i * b + j) * inner;
            out.extend_from_slice(&x.data()[start..start + inner]);
        }
    }
    let mut shape = s.to_vec();
    shape.swap(0, 1);
    Tensor::new(shape, out).expect("same size")
}

/// Slice `i` of the leading axis.
pub fn select0<T: Real>(x: Var<'_, T>, i: usize) -> Result<Var<'_, T>> {
    let xv = x.value();
    if xv.rank() == 0 || i >= xv.shape()[0] {
        return Err(shape_err("select0", xv.shape(), &[i]));
    }
    let full = xv.shape().to_vec();
    let inner: usize = full[1..].iter().product();
    let y = Tensor::new(full[1..].to_vec(), xv.data()[i * inner..(i + 1) * inner].to_vec())?;
    x.tape().push("select0", y, &[x], move |g, _| {
        let mut d = Tensor::zeros(&full);
        d.data_mut()[i * inner..(i + 1) * inner].copy_from_slice(g.data());
        vec![Some(d)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn relu_values() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(&[3], &[-2.0, 0.0, 5.0]).unwrap()).unwrap();
        let y = relu(x).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0, 5.0]);
        let g = tape.backward(sum(y).unwrap()).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn mse_gradient_hand_value() {
        let tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_f64(&[1], &[3.0]).unwrap()).unwrap();
        let l = mse(p, &Tensor::from_f64(&[1], &[1.0]).unwrap()).unwrap();
        assert_eq!(l.value().item(), 4.0);
        assert_eq!(tape.backward(l).unwrap().wrt(p).unwrap().data(), &[4.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::full(&[2, 3], 0.7)).unwrap();
        let g = tape.backward(sum(x).unwrap()).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn second_backward_errors() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[2], 1.0)).unwrap();
        let l = sum(x).unwrap();
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::Tape(_))));
        assert!(tape.constant(Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[2], 1.0)).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn non_finite_forward_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1], 1e300)).unwrap();
        let y = scale(x, 1e300);
        assert!(matches!(y, Err(Error::NonFinite { op: "scale" })));
    }

    #[test]
    fn shared_input_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[2], 1.5)).unwrap();
        let y = add(x, x).unwrap();
        let g = tape.backward(sum(y).unwrap()).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn dropout_eval_and_zero_p_are_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::full(&[4], 2.0)).unwrap();
        assert_eq!(dropout(x, 0.5, false, &mut rng).unwrap().id(), x.id());
        assert_eq!(dropout(x, 0.0, true, &mut rng).unwrap().id(), x.id());
    }

    #[test]
    fn dropout_preserves_mean() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[200_000], 1.0)).unwrap();
        let y = dropout(x, 0.5, true, &mut rng).unwrap().value();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
