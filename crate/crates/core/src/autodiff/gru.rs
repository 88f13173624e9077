//! Fused single-layer GRU.
//!
//! Gates are stacked in the order update `z`, reset `r`, candidate `n`:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = (1 − z) ⊙ h + z ⊙ n
//! ```

use super::linalg::{gemm, MatMut, MatRef};
use super::real::Real;
use super::tape::Var;
use super::tensor::Tensor;
use crate::{Error, Result};

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Gate-block (`[2H, H]`) and candidate-block (`[H, H]`) views of `U`.
fn split_u<T>(ud: &[T], hd: usize) -> (MatRef<'_, T>, MatRef<'_, T>) {
    let (zr, n) = ud.split_at(2 * hd * hd);
    (MatRef::new(zr, 2 * hd, hd), MatRef::new(n, hd, hd))
}

/// Runs the recurrence over `x: [T, B, I]` with weights `w: [3H, I]`,
/// `u: [3H, H]`, `b: [3H]`, from `h0: [B, H]` (zeros when absent).
/// Returns every hidden state, `[T, B, H]`.
pub fn gru<'t, T: Real>(
    x: Var<'t, T>,
    h0: Option<Var<'t, T>>,
    w: Var<'t, T>,
    u: Var<'t, T>,
    b: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let (xv, wv, uv, bv) = (x.value(), w.value(), u.value(), b.value());
    let bad = || Error::Shape {
        op: "gru",
        lhs: xv.shape().to_vec(),
        rhs: wv.shape().to_vec(),
    };
    let &[steps, bs, i] = xv.shape() else { return Err(bad()) };
    let &[h3, wi] = wv.shape() else { return Err(bad()) };
    let hd = h3 / 3;
    if h3 % 3 != 0 || hd == 0 || wi != i || uv.shape() != [h3, hd] || bv.shape() != [h3] || steps == 0 {
        return Err(bad());
    }
    let h0v = match h0 {
        Some(h) => {
            let v = h.value();
            if v.shape() != [bs, hd] {
                return Err(bad());
            }
            v.data().to_vec()
        }
        None => vec![T::zero(); bs * hd],
    };

    // Input projections for all steps at once.
    let rows = steps * bs;
    let mut xp = vec![T::zero(); rows * h3];
    gemm(
        T::one(),
        MatRef::new(xv.data(), rows, i),
        MatRef::new(wv.data(), h3, i).t(),
        T::zero(),
        MatMut::new(&mut xp, rows, h3),
    );
    for row in xp.chunks_mut(h3) {
        for (v, &bb) in row.iter_mut().zip(bv.data()) {
            *v += bb;
        }
    }

    let step = bs * hd;
    let mut hs = vec![T::zero(); steps * step];
    let mut zs = vec![T::zero(); steps * step];
    let mut rs = vec![T::zero(); steps * step];
    let mut ns = vec![T::zero(); steps * step];
    let mut rhs = vec![T::zero(); steps * step];
    let (u_zr, u_n) = split_u(uv.data(), hd);
    let mut a_zr = vec![T::zero(); bs * 2 * hd];
    let mut a_n = vec![T::zero(); step];
    for t in 0..steps {
        let (done, rest) = hs.split_at_mut(t * step);
        let hprev: &[T] = if t == 0 { &h0v } else { &done[(t - 1) * step..] };
        let hcur = &mut rest[..step];
        gemm(
            T::one(),
            MatRef::new(hprev, bs, hd),
            u_zr.t(),
            T::zero(),
            MatMut::new(&mut a_zr, bs, 2 * hd),
        );
        let o = t * step;
        for bi in 0..bs {
            let xrow = &xp[(t * bs + bi) * h3..];
            for j in 0..hd {
                let k = bi * hd + j;
                let z = sigmoid(xrow[j] + a_zr[bi * 2 * hd + j]);
                let r = sigmoid(xrow[hd + j] + a_zr[bi * 2 * hd + hd + j]);
                zs[o + k] = z;
                rs[o + k] = r;
                rhs[o + k] = r * hprev[k];
            }
        }
        gemm(
            T::one(),
            MatRef::new(&rhs[o..o + step], bs, hd),
            u_n.t(),
            T::zero(),
            MatMut::new(&mut a_n, bs, hd),
        );
        for bi in 0..bs {
            let xrow = &xp[(t * bs + bi) * h3..];
            for j in 0..hd {
                let k = bi * hd + j;
                let n = (xrow[2 * hd + j] + a_n[k]).tanh();
                ns[o + k] = n;
                let z = zs[o + k];
                hcur[k] = (T::one() - z) * hprev[k] + z * n;
            }
        }
    }
    let y = Tensor::new(vec![steps, bs, hd], hs.clone())?;

    let mut parents = vec![x, w, u, b];
    parents.extend(h0);
    x.tape().push("gru", y, &parents, move |g, needs| {
        let gd = g.data();
        let one = T::one();
        let (u_zr, u_n) = split_u(uv.data(), hd);
        let mut dxp = vec![T::zero(); rows * h3];
        let mut du = vec![T::zero(); h3 * hd];
        let mut dh = vec![T::zero(); step];
        let mut dhp = vec![T::zero(); step];
        let mut drh = vec![T::zero(); step];
        for t in (0..steps).rev() {
            let o = t * step;
            let hprev: &[T] = if t == 0 { &h0v } else { &hs[o - step..o] };
            for k in 0..step {
                dh[k] += gd[o + k];
            }
            let dxp_t = &mut dxp[t * bs * h3..(t + 1) * bs * h3];
            for bi in 0..bs {
                for j in 0..hd {
                    let k = bi * hd + j;
                    let (z, n) = (zs[o + k], ns[o + k]);
                    let dz = dh[k] * (n - hprev[k]);
                    let dn = dh[k] * z;
                    dhp[k] = dh[k] * (one - z);
                    dxp_t[bi * h3 + j] = dz * z * (one - z);
                    dxp_t[bi * h3 + 2 * hd + j] = dn * (one - n * n);
                }
            }
            // Candidate path: a_n = (r ⊙ h) U_nᵀ.
            let dan = MatRef::strided(&dxp_t[2 * hd..], bs, hd, h3, 1);
            gemm(one, dan, u_n, T::zero(), MatMut::new(&mut drh, bs, hd));
            gemm(
                one,
                dan.t(),
                MatRef::new(&rhs[o..o + step], bs, hd),
                one,
                MatMut::new(&mut du[2 * hd * hd..], hd, hd),
            );
            for bi in 0..bs {
                for j in 0..hd {
                    let k = bi * hd + j;
                    let r = rs[o + k];
                    dhp[k] += drh[k] * r;
                    let dr = drh[k] * hprev[k];
                    dxp_t[bi * h3 + hd + j] = dr * r * (one - r);
                }
            }
            // Gate path: a_zr = h U_zrᵀ.
            let dazr = MatRef::strided(&dxp_t[..], bs, 2 * hd, h3, 1);
            gemm(one, dazr, u_zr, one, MatMut::new(&mut dhp, bs, hd));
            gemm(
                one,
                dazr.t(),
                MatRef::new(hprev, bs, hd),
                one,
                MatMut::new(&mut du[..2 * hd * hd], 2 * hd, hd),
            );
            std::mem::swap(&mut dh, &mut dhp);
        }
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); rows * i];
            gemm(
                one,
                MatRef::new(&dxp, rows, h3),
                MatRef::new(wv.data(), h3, i),
                T::zero(),
                MatMut::new(&mut dx, rows, i),
            );
            Tensor::new(vec![steps, bs, i], dx).expect("shape")
        });
        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); h3 * i];
            gemm(
                one,
                MatRef::new(&dxp, rows, h3).t(),
                MatRef::new(xv.data(), rows, i),
                T::zero(),
                MatMut::new(&mut dw, h3, i),
            );
            Tensor::new(vec![h3, i], dw).expect("shape")
        });
        let mut db = vec![T::zero(); h3];
        for row in dxp.chunks(h3) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut out = vec![
            dx,
            dw,
            Some(Tensor::new(vec![h3, hd], du).expect("shape")),
            Some(Tensor::new(vec![h3], db).expect("shape")),
        ];
        if needs.len() > 4 {
            out.push(Some(Tensor::new(vec![bs, hd], dh).expect("shape")));
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn zero_weights_halve_the_state() {
        let tape = Tape::<f64>::new();
        let h = 4;
        let x = tape.constant(Tensor::full(&[1, 1, 2], 0.3)).unwrap();
        let h0 = tape
            .constant(Tensor::from_f64(&[1, h], &[1.0, -2.0, 0.5, 4.0]).unwrap())
            .unwrap();
        let w = tape.constant(Tensor::zeros(&[3 * h, 2])).unwrap();
        let u = tape.constant(Tensor::zeros(&[3 * h, h])).unwrap();
        let b = tape.constant(Tensor::zeros(&[3 * h])).unwrap();
        let y = gru(x, Some(h0), w, u, b).unwrap();
        assert_eq!(y.value().data(), &[0.5, -1.0, 0.25, 2.0]);
    }
}
