//! 2×2 pooling, global pooling and time-axis resampling kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Avg,
    Max,
}

/// 2×2 pooling with stride 2. Odd extents are padded by edge replication.
///
/// For max pooling the returned vector holds, per output element, the flat input index that
/// won (first in row-major window order on ties).
pub(crate) fn pool2x2_forward<F: Scalar>(
    x: &Tensor<F>,
    kind: PoolKind,
) -> Result<(Tensor<F>, Vec<usize>)> {
    let [n, c, h, w] = x.dims4()?;
    if h == 0 || w == 0 {
        return Err(Error::Shape("pool2x2 on empty spatial extent".into()));
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = Vec::new();
    if kind == PoolKind::Max {
        argmax.reserve(n * c * oh * ow);
    }
    let quarter = F::of(0.25);
    let xd = x.data();
    let od = out.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            let rows = [2 * i, (2 * i + 1).min(h - 1)];
            for j in 0..ow {
                let cols = [2 * j, (2 * j + 1).min(w - 1)];
                let idx = [
                    base + rows[0] * w + cols[0],
                    base + rows[0] * w + cols[1],
                    base + rows[1] * w + cols[0],
                    base + rows[1] * w + cols[1],
                ];
                match kind {
                    PoolKind::Avg => {
                        od[o] = (xd[idx[0]] + xd[idx[1]] + xd[idx[2]] + xd[idx[3]]) * quarter;
                    }
                    PoolKind::Max => {
                        let mut best = idx[0];
                        for &k in &idx[1..] {
                            if xd[k] > xd[best] {
                                best = k;
                            }
                        }
                        od[o] = xd[best];
                        argmax.push(best);
                    }
                }
                o += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub(crate) fn pool2x2_backward<F: Scalar>(
    x_shape: &[usize],
    dy: &Tensor<F>,
    kind: PoolKind,
    argmax: &[usize],
) -> Result<Tensor<F>> {
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    match kind {
        PoolKind::Max => {
            for (&src, &g) in argmax.iter().zip(dy.data()) {
                dxd[src] += g;
            }
        }
        PoolKind::Avg => {
            let (h, w) = (x_shape[2], x_shape[3]);
            let [n, c, oh, ow] = dy.dims4()?;
            let quarter = F::of(0.25);
            let mut o = 0;
            for plane in 0..n * c {
                let base = plane * h * w;
                for i in 0..oh {
                    let rows = [2 * i, (2 * i + 1).min(h - 1)];
                    for j in 0..ow {
                        let cols = [2 * j, (2 * j + 1).min(w - 1)];
                        let g = dy.data()[o] * quarter;
                        for r in rows {
                            for cc in cols {
                                dxd[base + r * w + cc] += g;
                            }
                        }
                        o += 1;
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// `(N, C, T, F)` → `(N, C)`: mean over frequency, then max over time.
///
/// Also returns the winning time index per `(n, c)`.
pub(crate) fn global_clip_forward<F: Scalar>(x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    let [n, c, t, f] = x.dims4()?;
    if t == 0 || f == 0 {
        return Err(Error::Shape("global pooling over an empty map".into()));
    }
    let inv_f = F::one() / F::of(f as f64);
    let mut out = Tensor::zeros(&[n, c]);
    let mut arg = vec![0; n * c];
    for plane in 0..n * c {
        let base = plane * t * f;
        let mut best = F::neg_infinity();
        for ti in 0..t {
            let row = &x.data()[base + ti * f..base + (ti + 1) * f];
            let m = row.iter().copied().sum::<F>() * inv_f;
            if m > best || ti == 0 {
                best = m;
                arg[plane] = ti;
            }
        }
        out.data_mut()[plane] = best;
    }
    Ok((out, arg))
}

pub(crate) fn global_clip_backward<F: Scalar>(
    x_shape: &[usize],
    dy: &Tensor<F>,
    arg: &[usize],
) -> Tensor<F> {
    let (t, f) = (x_shape[2], x_shape[3]);
    let inv_f = F::one() / F::of(f as f64);
    let mut dx = Tensor::zeros(x_shape);
    for (plane, (&ti, &g)) in arg.iter().zip(dy.data()).enumerate() {
        let start = plane * t * f + ti * f;
        dx.data_mut()[start..start + f]
            .iter_mut()
            .for_each(|v| *v = g * inv_f);
    }
    dx
}

/// `(N, C, T, F)` → `(N, T, C)`: mean over frequency, time retained.
pub(crate) fn global_frames_forward<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let [n, c, t, f] = x.dims4()?;
    if f == 0 {
        return Err(Error::Shape(
            "global pooling over an empty frequency axis".into(),
        ));
    }
    let inv_f = F::one() / F::of(f as f64);
    let mut out = Tensor::zeros(&[n, t, c]);
    for b in 0..n {
        for ch in 0..c {
            for ti in 0..t {
                let s = ((b * c + ch) * t + ti) * f;
                out.data_mut()[(b * t + ti) * c + ch] =
                    x.data()[s..s + f].iter().copied().sum::<F>() * inv_f;
            }
        }
    }
    Ok(out)
}

pub(crate) fn global_frames_backward<F: Scalar>(x_shape: &[usize], dy: &Tensor<F>) -> Tensor<F> {
    let (n, c, t, f) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let inv_f = F::one() / F::of(f as f64);
    let mut dx = Tensor::zeros(x_shape);
    for b in 0..n {
        for ch in 0..c {
            for ti in 0..t {
                let g = dy.data()[(b * t + ti) * c + ch] * inv_f;
                let s = ((b * c + ch) * t + ti) * f;
                dx.data_mut()[s..s + f].iter_mut().for_each(|v| *v = g);
            }
        }
    }
    dx
}

/// Source time index of output step `t` for nearest-neighbour upsampling.
fn upsample_source(t: usize, factor: usize, len_in: usize) -> usize {
    (t / factor).min(len_in - 1)
}

/// `(N, T', K)` → `(N, out_len, K)` repeating each step `factor` times, then cropping.
pub(crate) fn upsample_time_forward<F: Scalar>(
    x: &Tensor<F>,
    factor: usize,
    out_len: usize,
) -> Result<Tensor<F>> {
    let [n, t, k] = x.dims3()?;
    if t == 0 || factor == 0 {
        return Err(Error::Shape("upsample of an empty time axis".into()));
    }
    let mut out = Tensor::zeros(&[n, out_len, k]);
    for b in 0..n {
        for to in 0..out_len {
            let ti = upsample_source(to, factor, t);
            let src = &x.data()[(b * t + ti) * k..(b * t + ti + 1) * k];
            out.data_mut()[(b * out_len + to) * k..(b * out_len + to + 1) * k].copy_from_slice(src);
        }
    }
    Ok(out)
}

pub(crate) fn upsample_time_backward<F: Scalar>(
    x_shape: &[usize],
    dy: &Tensor<F>,
    factor: usize,
) -> Tensor<F> {
    let (n, t, k) = (x_shape[0], x_shape[1], x_shape[2]);
    let out_len = dy.shape()[1];
    let mut dx = Tensor::zeros(x_shape);
    for b in 0..n {
        for to in 0..out_len {
            let ti = upsample_source(to, factor, t);
            for kk in 0..k {
                dx.data_mut()[(b * t + ti) * k + kk] += dy.data()[(b * out_len + to) * k + kk];
            }
        }
    }
    dx
}

/// `(N, C, T, F)` → `(N, C, len, F)` with `len ≥ T`, replicating the last frame.
pub(crate) fn pad_time_forward<F: Scalar>(x: &Tensor<F>, len: usize) -> Result<Tensor<F>> {
    let [n, c, t, f] = x.dims4()?;
    if t == 0 || len < t {
        return Err(Error::Shape(format!("cannot edge-pad {t} frames to {len}")));
    }
    let mut out = Tensor::zeros(&[n, c, len, f]);
    for plane in 0..n * c {
        for to in 0..len {
            let ti = to.min(t - 1);
            let src = &x.data()[(plane * t + ti) * f..(plane * t + ti + 1) * f];
            out.data_mut()[(plane * len + to) * f..(plane * len + to + 1) * f].copy_from_slice(src);
        }
    }
    Ok(out)
}

pub(crate) fn pad_time_backward<F: Scalar>(x_shape: &[usize], dy: &Tensor<F>) -> Tensor<F> {
    let (n, c, t, f) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let len = dy.shape()[2];
    let mut dx = Tensor::zeros(x_shape);
    for plane in 0..n * c {
        for to in 0..len {
            let ti = to.min(t - 1);
            for ff in 0..f {
                dx.data_mut()[(plane * t + ti) * f + ff] += dy.data()[(plane * len + to) * f + ff];
            }
        }
    }
    dx
}

/// `(N, T, K)` → `(N, K)` maximum over time, with the winning index per `(n, k)`.
pub(crate) fn max_time_forward<F: Scalar>(x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    let [n, t, k] = x.dims3()?;
    if t == 0 {
        return Err(Error::Shape("max over an empty time axis".into()));
    }
    let mut out = Tensor::zeros(&[n, k]);
    let mut arg = vec![0; n * k];
    for b in 0..n {
        for kk in 0..k {
            let mut best = (b * t) * k + kk;
            for ti in 1..t {
                let i = (b * t + ti) * k + kk;
                if x.data()[i] > x.data()[best] {
                    best = i;
                }
            }
            out.data_mut()[b * k + kk] = x.data()[best];
            arg[b * k + kk] = best;
        }
    }
    Ok((out, arg))
}
