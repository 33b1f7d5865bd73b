//! Per-channel batch normalization over `(N, H, W)` of an NCHW tensor.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Saved state for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct BnSaved<F> {
    /// Normalized input, same layout as `x`.
    pub xhat: Vec<F>,
    /// `1 / sqrt(var + eps)` per channel.
    pub inv_std: Vec<F>,
}

/// Batch statistics of one train-mode call, for the running-average update.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<F> {
    pub mean: Vec<F>,
    /// Unbiased variance (`m - 1` denominator).
    pub var_unbiased: Vec<F>,
}

fn check<F: Scalar>(x: &Tensor<F>, gamma: &Tensor<F>, beta: &Tensor<F>) -> Result<[usize; 4]> {
    let dims = x.dims4()?;
    if gamma.len() != dims[1] || beta.len() != dims[1] {
        return Err(Error::Shape(format!(
            "batchnorm: {} channels but gamma/beta have {}/{}",
            dims[1],
            gamma.len(),
            beta.len()
        )));
    }
    Ok(dims)
}

pub(crate) fn forward_train<F: Scalar>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
) -> Result<(Tensor<F>, BnSaved<F>, BatchStats<F>)> {
    let [n, c, h, w] = check(x, gamma, beta)?;
    let hw = h * w;
    let m = n * hw;
    if m == 0 {
        return Err(Error::Shape("batchnorm over an empty batch".into()));
    }
    let eps = F::of(BN_EPS);
    let xd = x.data();
    let mut out = Tensor::zeros(x.shape());
    let mut xhat = vec![F::zero(); xd.len()];
    let mut inv_std = vec![F::zero(); c];
    let mut stats = BatchStats {
        mean: vec![F::zero(); c],
        var_unbiased: vec![F::zero(); c],
    };
    let mf = F::of(m as f64);
    for ch in 0..c {
        let planes = || (0..n).map(move |b| (b * c + ch) * hw);
        let mut sum = F::zero();
        for p in planes() {
            sum += xd[p..p + hw].iter().copied().sum::<F>();
        }
        let mean = sum / mf;
        let mut sq = F::zero();
        for p in planes() {
            for &v in &xd[p..p + hw] {
                sq += (v - mean) * (v - mean);
            }
        }
        let var = sq / mf;
        let istd = F::one() / (var + eps).sqrt();
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        let od = out.data_mut();
        for p in planes() {
            for i in p..p + hw {
                let xh = (xd[i] - mean) * istd;
                xhat[i] = xh;
                od[i] = g * xh + bt;
            }
        }
        inv_std[ch] = istd;
        stats.mean[ch] = mean;
        stats.var_unbiased[ch] = if m > 1 {
            sq / F::of((m - 1) as f64)
        } else {
            F::zero()
        };
    }
    Ok((out, BnSaved { xhat, inv_std }, stats))
}

/// Returns `(dx, dgamma, dbeta)` for train-mode normalization.
pub(crate) fn backward_train<F: Scalar>(
    dy: &Tensor<F>,
    gamma: &Tensor<F>,
    saved: &BnSaved<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let [n, c, h, w] = dy.dims4()?;
    let hw = h * w;
    let mf = F::of((n * hw) as f64);
    let dyd = dy.data();
    let mut dx = Tensor::zeros(dy.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut sum_dy = F::zero();
        let mut sum_dy_xhat = F::zero();
        for b in 0..n {
            let p = (b * c + ch) * hw;
            for i in p..p + hw {
                sum_dy += dyd[i];
                sum_dy_xhat += dyd[i] * saved.xhat[i];
            }
        }
        dgamma.data_mut()[ch] = sum_dy_xhat;
        dbeta.data_mut()[ch] = sum_dy;
        let scale = gamma.data()[ch] * saved.inv_std[ch] / mf;
        let dxd = dx.data_mut();
        for b in 0..n {
            let p = (b * c + ch) * hw;
            for i in p..p + hw {
                dxd[i] = scale * (mf * dyd[i] - sum_dy - saved.xhat[i] * sum_dy_xhat);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Eval-mode normalization with fixed statistics; returns output and saved state.
pub(crate) fn forward_eval<F: Scalar>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    running_mean: &[F],
    running_var: &[F],
) -> Result<(Tensor<F>, BnSaved<F>)> {
    let [n, c, h, w] = check(x, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::Shape(
            "batchnorm: running statistics have wrong length".into(),
        ));
    }
    let hw = h * w;
    let eps = F::of(BN_EPS);
    let inv_std: Vec<F> = running_var
        .iter()
        .map(|&v| F::one() / (v + eps).sqrt())
        .collect();
    let mut out = Tensor::zeros(x.shape());
    let mut xhat = vec![F::zero(); x.len()];
    let (xd, od) = (x.data(), out.data_mut());
    for b in 0..n {
        for ch in 0..c {
            let p = (b * c + ch) * hw;
            let (mu, is) = (running_mean[ch], inv_std[ch]);
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in p..p + hw {
                let xh = (xd[i] - mu) * is;
                xhat[i] = xh;
                od[i] = g * xh + bt;
            }
        }
    }
    Ok((out, BnSaved { xhat, inv_std }))
}

pub(crate) fn backward_eval<F: Scalar>(
    dy: &Tensor<F>,
    gamma: &Tensor<F>,
    saved: &BnSaved<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let [n, c, h, w] = dy.dims4()?;
    let hw = h * w;
    let mut dx = Tensor::zeros(dy.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let dyd = dy.data();
    for b in 0..n {
        for ch in 0..c {
            let p = (b * c + ch) * hw;
            let scale = gamma.data()[ch] * saved.inv_std[ch];
            for i in p..p + hw {
                dx.data_mut()[i] = dyd[i] * scale;
                dgamma.data_mut()[ch] += dyd[i] * saved.xhat[i];
                dbeta.data_mut()[ch] += dyd[i];
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_standardizes_each_channel() {
        let data: Vec<f64> = (0..2 * 3 * 4 * 5)
            .map(|i| ((i * 37) % 11) as f64 * 0.7 - 2.0)
            .collect();
        let x = Tensor::from_vec(&[2, 3, 4, 5], data).unwrap();
        let (y, _, _) = forward_train(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3])).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| y.data()[(b * 3 + ch) * 20..(b * 3 + ch + 1) * 20].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 40.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn standardized_input_passes_through() {
        let x = Tensor::<f64>::from_vec(&[2, 1, 1, 2], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let (y, _, _) = forward_train(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1])).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn eval_with_initial_stats_is_near_identity() {
        let x = Tensor::<f64>::from_vec(&[1, 2, 1, 2], vec![0.5, -0.25, 3.0, 0.0]).unwrap();
        let (y, _) = forward_eval(
            &x,
            &Tensor::full(&[2], 1.0),
            &Tensor::zeros(&[2]),
            &[0.0, 0.0],
            &[1.0, 1.0],
        )
        .unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
