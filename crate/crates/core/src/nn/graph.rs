//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, so the reverse of that order is a
//! valid topological order for backpropagation. A graph lives for one forward/backward pass;
//! parameters are copied in as leaves and their gradients read back after [`Graph::backward`].

use crate::error::{Error, Result};
use crate::nn::kernels::{conv, loss, norm, pool};
use crate::nn::tensor::{gemm, Scalar, Tensor};

pub use crate::nn::kernels::norm::BatchStats;
pub use crate::nn::kernels::pool::PoolKind;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        saved: norm::BnSaved<F>,
        train: bool,
    },
    Relu {
        x: Var,
    },
    Pool {
        x: Var,
        kind: PoolKind,
        argmax: Vec<usize>,
    },
    GlobalClip {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalFrames {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    UpsampleTime {
        x: Var,
        factor: usize,
    },
    PadTime {
        x: Var,
    },
    MaxTime {
        x: Var,
        argmax: Vec<usize>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: F,
    },
    Dot {
        x: Var,
        w: Vec<F>,
    },
    /// Fused loss: gradient w.r.t. the single prediction input is precomputed.
    Loss {
        pred: Var,
        grad: Tensor<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant leaf (no gradient).
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the last [`backward`](Self::backward) root w.r.t. `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Same-padded stride-1 convolution without bias. `x` is NCHW, `w` is `(Cout, Cin, kh, kw)`.
    pub fn conv2d(&mut self, x: Var, w: Var) -> Result<Var> {
        let y = conv::conv2d_forward(self.value(x), self.value(w))?;
        let rg = self.needs(&[x, w]);
        Ok(self.push(y, Op::Conv2d { x, w }, rg))
    }

    /// Train-mode batch normalization; also returns the batch statistics.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, BatchStats<F>)> {
        let (y, saved, stats) =
            norm::forward_train(self.value(x), self.value(gamma), self.value(beta))?;
        let rg = self.needs(&[x, gamma, beta]);
        Ok((
            self.push(
                y,
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    saved,
                    train: true,
                },
                rg,
            ),
            stats,
        ))
    }

    /// Eval-mode batch normalization with fixed running statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[F],
        running_var: &[F],
    ) -> Result<Var> {
        let (y, saved) = norm::forward_eval(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running_mean,
            running_var,
        )?;
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
                train: false,
            },
            rg,
        ))
    }

    /// Propagates NaN, so a poisoned input surfaces as a non-finite loss.
    pub fn relu(&mut self, x: Var) -> Var {
        let y = self
            .value(x)
            .map(|v| if v < F::zero() { F::zero() } else { v });
        let rg = self.needs(&[x]);
        self.push(y, Op::Relu { x }, rg)
    }

    pub fn pool2x2(&mut self, x: Var, kind: PoolKind) -> Result<Var> {
        let (y, argmax) = pool::pool2x2_forward(self.value(x), kind)?;
        let rg = self.needs(&[x]);
        Ok(self.push(y, Op::Pool { x, kind, argmax }, rg))
    }

    /// `(N, C, T, F)` → `(N, C)`: average over frequency, then max over time.
    pub fn global_pool_clip(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = pool::global_clip_forward(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(y, Op::GlobalClip { x, argmax }, rg))
    }

    /// `(N, C, T, F)` → `(N, T, C)`: average over frequency only.
    pub fn global_pool_frames(&mut self, x: Var) -> Result<Var> {
        let y = pool::global_frames_forward(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(y, Op::GlobalFrames { x }, rg))
    }

    /// Affine map over the last axis: `y = x·Wᵀ + b` with `W` of shape `(out, in)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (out_f, in_f) = match wv.shape() {
            [o, i] => (*o, *i),
            s => {
                return Err(Error::Shape(format!(
                    "linear weight must be (out, in), got {s:?}"
                )))
            }
        };
        let last = xv.shape().last().copied().unwrap_or(0);
        if last != in_f || bv.len() != out_f {
            return Err(Error::Shape(format!(
                "linear: input width {last}, weight {:?}, bias {}",
                wv.shape(),
                bv.len()
            )));
        }
        let rows = xv.len() / in_f.max(1);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("non-scalar input") = out_f;
        let mut y = vec![F::zero(); rows * out_f];
        for r in 0..rows {
            y[r * out_f..(r + 1) * out_f].copy_from_slice(bv.data());
        }
        gemm(
            rows,
            in_f,
            out_f,
            xv.data(),
            false,
            wv.data(),
            true,
            &mut y,
            F::one(),
        );
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(Tensor::from_vec(&shape, y)?, Op::Linear { x, w, b }, rg))
    }

    /// `(N, T', K)` → `(N, out_len, K)` by repeating every step `factor` times.
    pub fn upsample_time(&mut self, x: Var, factor: usize, out_len: usize) -> Result<Var> {
        let y = pool::upsample_time_forward(self.value(x), factor, out_len)?;
        let rg = self.needs(&[x]);
        Ok(self.push(y, Op::UpsampleTime { x, factor }, rg))
    }

    /// Right-pads the time axis (dim 2) of an NCHW tensor to `len` by edge replication.
    pub fn pad_time(&mut self, x: Var, len: usize) -> Result<Var> {
        let y = pool::pad_time_forward(self.value(x), len)?;
        let rg = self.needs(&[x]);
        Ok(self.push(y, Op::PadTime { x }, rg))
    }

    /// `(N, T, K)` → `(N, K)` maximum over time.
    pub fn max_time(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = pool::max_time_forward(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(y, Op::MaxTime { x, argmax }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "add: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut y = av.clone();
        y.add_assign(bv);
        let rg = self.needs(&[a, b]);
        Ok(self.push(y, Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        let y = self.value(x).map(|v| v * s);
        let rg = self.needs(&[x]);
        self.push(y, Op::Scale { x, s }, rg)
    }

    /// Scalar `Σ w·x` with constant weights.
    pub fn dot(&mut self, x: Var, weights: &Tensor<F>) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != weights.len() {
            return Err(Error::Shape("dot: length mismatch".into()));
        }
        let s = xv
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a * b)
            .sum();
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::scalar(s),
            Op::Dot {
                x,
                w: weights.data().to_vec(),
            },
            rg,
        ))
    }

    fn push_loss(&mut self, pred: Var, value: F, grad: Tensor<F>) -> Var {
        let rg = self.needs(&[pred]);
        self.push(Tensor::scalar(value), Op::Loss { pred, grad }, rg)
    }

    /// Softmax cross entropy averaged over the batch; `target` rows must be one-hot.
    pub fn loss_ce(&mut self, logits: Var, target: &Tensor<F>) -> Result<Var> {
        let (l, g) = loss::cross_entropy(self.value(logits), target)?;
        Ok(self.push_loss(logits, l, g))
    }

    /// Sigmoid binary cross entropy averaged over (unmasked) elements.
    pub fn loss_bce(
        &mut self,
        logits: Var,
        target: &Tensor<F>,
        mask: Option<&Tensor<F>>,
    ) -> Result<Var> {
        let (l, g) = loss::binary_cross_entropy(self.value(logits), target, mask)?;
        Ok(self.push_loss(logits, l, g))
    }

    /// `Σ mask·|pred − target| / denom`.
    pub fn masked_l1(
        &mut self,
        pred: Var,
        target: &Tensor<F>,
        mask: &Tensor<F>,
        denom: usize,
    ) -> Result<Var> {
        let (l, g) = loss::masked_l1(self.value(pred), target, mask, denom)?;
        Ok(self.push_loss(pred, l, g))
    }

    /// Joint detection/localisation loss.
    ///
    /// BCE on the detection logits plus `lambda` times the absolute azimuth and elevation errors,
    /// summed over the (frame, class) pairs where the class is active and divided by the number
    /// of such pairs. With no active pair the localisation term is zero.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_seld(
        &mut self,
        sed_logits: Var,
        azimuth: Var,
        elevation: Var,
        activity: &Tensor<F>,
        azimuth_target: &Tensor<F>,
        elevation_target: &Tensor<F>,
        lambda: F,
    ) -> Result<Var> {
        let active = activity.data().iter().filter(|&&v| v > F::zero()).count();
        let bce = self.loss_bce(sed_logits, activity, None)?;
        let azi = self.masked_l1(azimuth, azimuth_target, activity, active)?;
        let ele = self.masked_l1(elevation, elevation_target, activity, active)?;
        let doa = self.add(azi, ele)?;
        let doa = self.scale(doa, lambda);
        self.add(bce, doa)
    }

    /// Backpropagates from a scalar root, replacing any previous gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(Tensor::full(self.value(root).shape(), F::one()));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(dy) = self.grads[i].take() else {
                continue;
            };
            let contributions = self.node_backward(i, &dy)?;
            self.grads[i] = Some(dy);
            for (v, g) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut self.grads[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn node_backward(&self, i: usize, dy: &Tensor<F>) -> Result<Vec<(Var, Tensor<F>)>> {
        let node = &self.nodes[i];
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w } => {
                let (dx, dw) =
                    conv::conv2d_backward(self.value(*x), self.value(*w), dy, rg(x), rg(w))?;
                let mut v = Vec::new();
                if let Some(dx) = dx {
                    v.push((*x, dx));
                }
                if let Some(dw) = dw {
                    v.push((*w, dw));
                }
                v
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
                train,
            } => {
                let gv = self.value(*gamma);
                let (dx, dg, db) = if *train {
                    norm::backward_train(dy, gv, saved)?
                } else {
                    norm::backward_eval(dy, gv, saved)?
                };
                vec![(*x, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let mut dx = dy.clone();
                for (g, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if v <= F::zero() {
                        *g = F::zero();
                    }
                }
                vec![(*x, dx)]
            }
            Op::Pool { x, kind, argmax } => {
                vec![(
                    *x,
                    pool::pool2x2_backward(self.value(*x).shape(), dy, *kind, argmax)?,
                )]
            }
            Op::GlobalClip { x, argmax } => {
                vec![(
                    *x,
                    pool::global_clip_backward(self.value(*x).shape(), dy, argmax),
                )]
            }
            Op::GlobalFrames { x } => {
                vec![(*x, pool::global_frames_backward(self.value(*x).shape(), dy))]
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (out_f, in_f) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.len() / in_f.max(1);
                let mut v = Vec::new();
                if rg(x) {
                    let mut dx = Tensor::zeros(xv.shape());
                    gemm(
                        rows,
                        out_f,
                        in_f,
                        dy.data(),
                        false,
                        wv.data(),
                        false,
                        dx.data_mut(),
                        F::zero(),
                    );
                    v.push((*x, dx));
                }
                if rg(w) {
                    let mut dw = Tensor::zeros(wv.shape());
                    gemm(
                        out_f,
                        rows,
                        in_f,
                        dy.data(),
                        true,
                        xv.data(),
                        false,
                        dw.data_mut(),
                        F::zero(),
                    );
                    v.push((*w, dw));
                }
                if rg(b) {
                    let mut db = Tensor::zeros(&[out_f]);
                    for row in dy.data().chunks(out_f) {
                        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    v.push((*b, db));
                }
                v
            }
            Op::UpsampleTime { x, factor } => {
                vec![(
                    *x,
                    pool::upsample_time_backward(self.value(*x).shape(), dy, *factor),
                )]
            }
            Op::PadTime { x } => vec![(*x, pool::pad_time_backward(self.value(*x).shape(), dy))],
            Op::MaxTime { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                for (&src, &g) in argmax.iter().zip(dy.data()) {
                    dx.data_mut()[src] += g;
                }
                vec![(*x, dx)]
            }
            Op::Add { a, b } => vec![(*a, dy.clone()), (*b, dy.clone())],
            Op::Scale { x, s } => vec![(*x, dy.map(|g| g * *s))],
            Op::Dot { x, w } => {
                let g = dy.item();
                let data = w.iter().map(|&wi| wi * g).collect();
                vec![(*x, Tensor::from_vec(self.value(*x).shape(), data)?)]
            }
            Op::Loss { pred, grad } => {
                let g = dy.item();
                vec![(*pred, grad.map(|v| v * g))]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_and_zero_weight() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let w = g.param(eye);
        let b = g.param(Tensor::zeros(&[3]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y), g.value(x));

        let w0 = g.param(Tensor::zeros(&[2, 3]));
        let b0 = g.param(Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap());
        let y0 = g.linear(x, w0, b0).unwrap();
        assert_eq!(g.value(y0).data(), &[0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn ce_gradient_is_softmax_minus_target_over_n() {
        let mut g = Graph::<f64>::new();
        let z = g.param(Tensor::from_vec(&[2, 3], vec![0.1, 0.5, -0.3, 2.0, 0.0, 1.0]).unwrap());
        let y = Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let l = g.loss_ce(z, &y).unwrap();
        g.backward(l).unwrap();
        let grad = g.grad(z).unwrap();
        for r in 0..2 {
            let row = &g.value(z).data()[r * 3..r * 3 + 3];
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            for k in 0..3 {
                let expect = (row[k].exp() / s - y.data()[r * 3 + k]) / 2.0;
                assert!((grad.data()[r * 3 + k] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn seld_loss_reduces_to_bce_without_activity() {
        let mut g = Graph::<f64>::new();
        let sed = g.param(Tensor::from_vec(&[1, 2, 2], vec![0.3, -0.2, 1.0, 0.4]).unwrap());
        let azi = g.param(Tensor::full(&[1, 2, 2], 0.7));
        let ele = g.param(Tensor::full(&[1, 2, 2], -0.1));
        let zeros = Tensor::zeros(&[1, 2, 2]);
        let total = g
            .loss_seld(sed, azi, ele, &zeros, &zeros, &zeros, 1.0)
            .unwrap();
        let bce = g.loss_bce(sed, &zeros, None).unwrap();
        assert_eq!(g.value(total).item(), g.value(bce).item());
    }

    #[test]
    fn seld_loss_single_active_frame() {
        // bce + λ·(0.5 + 0) / 1
        let mut g = Graph::<f64>::new();
        let sed = g.param(Tensor::from_vec(&[1, 2, 1], vec![0.0, -3.0]).unwrap());
        let azi = g.param(Tensor::from_vec(&[1, 2, 1], vec![0.25, 0.9]).unwrap());
        let ele = g.param(Tensor::from_vec(&[1, 2, 1], vec![0.1, 0.3]).unwrap());
        let act = Tensor::from_vec(&[1, 2, 1], vec![1.0, 0.0]).unwrap();
        let azi_t = Tensor::from_vec(&[1, 2, 1], vec![-0.25, 0.0]).unwrap();
        let ele_t = Tensor::from_vec(&[1, 2, 1], vec![0.1, 0.0]).unwrap();
        let total = g
            .loss_seld(sed, azi, ele, &act, &azi_t, &ele_t, 1.0)
            .unwrap();
        let bce = (2f64.ln() + (1.0 + (-3f64).exp()).ln()) / 2.0;
        assert!((g.value(total).item() - (bce + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }
}
