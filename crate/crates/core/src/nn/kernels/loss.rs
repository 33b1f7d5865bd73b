//! Numerically stable fused losses. Each returns the loss value and its gradient w.r.t. the
//! prediction, scaled for an upstream gradient of one.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Mean over rows of `-Σ_k y_k ln softmax(z)_k` for `(N, K)` logits and one-hot targets.
pub(crate) fn cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    target: &Tensor<F>,
) -> Result<(F, Tensor<F>)> {
    let (n, k) = match logits.shape() {
        [n, k] => (*n, *k),
        s => {
            return Err(Error::Shape(format!(
                "cross entropy expects (N, K) logits, got {s:?}"
            )))
        }
    };
    if target.shape() != logits.shape() {
        return Err(Error::Shape(
            "cross entropy: target shape differs from logits".into(),
        ));
    }
    if n == 0 || k == 0 {
        return Err(Error::Shape("cross entropy on an empty batch".into()));
    }
    for row in target.data().chunks(k) {
        let ones = row.iter().filter(|&&v| v == F::one()).count();
        let zeros = row.iter().filter(|&&v| v == F::zero()).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::InvalidInput(
                "cross entropy target rows must be one-hot".into(),
            ));
        }
    }
    let inv_n = F::one() / F::of(n as f64);
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = F::zero();
    for (r, (z, y)) in logits
        .data()
        .chunks(k)
        .zip(target.data().chunks(k))
        .enumerate()
    {
        let zmax = z.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = zmax + z.iter().map(|&v| (v - zmax).exp()).sum::<F>().ln();
        for kk in 0..k {
            let log_p = z[kk] - lse;
            loss -= y[kk] * log_p;
            grad.data_mut()[r * k + kk] = (log_p.exp() - y[kk]) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// Mean binary cross entropy with logits, optionally restricted to `mask > 0` elements.
///
/// The mean is over unmasked elements; an all-zero mask yields zero loss.
pub(crate) fn binary_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    target: &Tensor<F>,
    mask: Option<&Tensor<F>>,
) -> Result<(F, Tensor<F>)> {
    if target.shape() != logits.shape() || mask.is_some_and(|m| m.shape() != logits.shape()) {
        return Err(Error::Shape(
            "binary cross entropy: target/mask shape differs".into(),
        ));
    }
    let count = match mask {
        Some(m) => m.data().iter().filter(|&&v| v > F::zero()).count(),
        None => logits.len(),
    };
    let mut grad = Tensor::zeros(logits.shape());
    if count == 0 {
        return Ok((F::zero(), grad));
    }
    let inv = F::one() / F::of(count as f64);
    let mut loss = F::zero();
    for i in 0..logits.len() {
        let w = mask.map_or(F::one(), |m| m.data()[i]);
        if w <= F::zero() {
            continue;
        }
        let (z, y) = (logits.data()[i], target.data()[i]);
        // max(z, 0) - z·y + ln(1 + e^{-|z|})
        loss += w * (z.max(F::zero()) - z * y + (-z.abs()).exp().ln_1p());
        grad.data_mut()[i] = w * (sigmoid(z) - y) * inv;
    }
    Ok((loss * inv, grad))
}

/// `Σ mask·|pred − target| / denom`; zero when `denom` is zero.
pub(crate) fn masked_l1<F: Scalar>(
    pred: &Tensor<F>,
    target: &Tensor<F>,
    mask: &Tensor<F>,
    denom: usize,
) -> Result<(F, Tensor<F>)> {
    if target.shape() != pred.shape() || mask.shape() != pred.shape() {
        return Err(Error::Shape("masked L1: shapes differ".into()));
    }
    let mut grad = Tensor::zeros(pred.shape());
    if denom == 0 {
        return Ok((F::zero(), grad));
    }
    let inv = F::one() / F::of(denom as f64);
    let mut loss = F::zero();
    for i in 0..pred.len() {
        let w = mask.data()[i];
        if w == F::zero() {
            continue;
        }
        let d = pred.data()[i] - target.data()[i];
        loss += w * d.abs();
        let sign = if d > F::zero() {
            F::one()
        } else if d < F::zero() {
            -F::one()
        } else {
            F::zero()
        };
        grad.data_mut()[i] = w * sign * inv;
    }
    Ok((loss * inv, grad))
}

pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}
