//! CNN5 / CNN9 / CNN13 trunks with clip-level, frame-level and localisation heads.
//!
//! Every convolution is followed by batch normalization and ReLU, and each block ends in a
//! 2×2 pooling stage. Convolutions have no bias; batch norm's shift plays that role, which is
//! what makes the trunk parameter counts come out at 4,304,320 (CNN5), 4,686,144 (CNN9) and
//! 75,477,312 (CNN13) for the canonical single-channel, 64-wide configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    glorot_uniform, BatchStats, Graph, Mode, ParamStore, PoolKind, Scalar, Tensor, Var, BN_MOMENTUM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Cnn5,
    Cnn9,
    Cnn13,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Clip-level softmax (single-label classification).
    ClipSoftmax,
    /// Clip-level sigmoid (multi-label tagging).
    ClipSigmoid,
    /// Frame-level sigmoid (event detection).
    FrameSigmoid,
    /// Frame-level sigmoid plus azimuth/elevation regression.
    Seld,
}

impl HeadKind {
    pub fn is_clip(self) -> bool {
        matches!(self, HeadKind::ClipSoftmax | HeadKind::ClipSigmoid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    /// Convolution weights plus batch-norm scale and shift.
    Trunk,
    /// Trunk plus head weights and biases.
    All,
}

fn default_base() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    #[serde(alias = "pool")]
    pub pool_kind: PoolKind,
    pub in_channels: usize,
    pub n_classes: usize,
    pub head: HeadKind,
    /// Width of the first block; later blocks double it. 64 reproduces the published models.
    #[serde(default = "default_base")]
    pub base_channels: usize,
}

impl ModelSpec {
    pub fn new(
        arch: Arch,
        pool_kind: PoolKind,
        in_channels: usize,
        n_classes: usize,
        head: HeadKind,
    ) -> Self {
        Self {
            arch,
            pool_kind,
            in_channels,
            n_classes,
            head,
            base_channels: 64,
        }
    }

    pub fn with_base_channels(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    /// `(out_channels, convs_per_block, kernel)` for every block.
    pub fn blocks(&self) -> Vec<(usize, usize, usize)> {
        let b = self.base_channels;
        let (n_blocks, convs, kernel) = match self.arch {
            Arch::Cnn5 => (4, 1, 5),
            Arch::Cnn9 => (4, 2, 3),
            Arch::Cnn13 => (6, 2, 3),
        };
        (0..n_blocks).map(|i| (b << i, convs, kernel)).collect()
    }

    pub fn pooling_stages(&self) -> usize {
        self.blocks().len()
    }

    /// Time (and frequency) reduction of the trunk: `2^(pooling stages)`.
    pub fn downsample_factor(&self) -> usize {
        1 << self.pooling_stages()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.n_classes == 0 || self.base_channels == 0 {
            return Err(Error::Config(format!(
                "in_channels, n_classes and base_channels must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvUnit {
    weight: usize,
    gamma: usize,
    beta: usize,
    running_mean: usize,
    running_var: usize,
}

#[derive(Debug, Clone)]
struct Dense {
    weight: usize,
    bias: usize,
}

/// Graph outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    /// `(N, K)` for clip heads, `(N, T, K)` for frame heads.
    pub logits: Var,
    pub azimuth: Option<Var>,
    pub elevation: Option<Var>,
}

/// Frame-head evaluation result, normalized angle units for SELD.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput<F> {
    pub logits: Tensor<F>,
    pub azimuth: Option<Tensor<F>>,
    pub elevation: Option<Tensor<F>>,
}

/// Batch statistics collected by a train-mode pass, one entry per batch-norm layer.
#[derive(Debug, Clone)]
pub struct BnUpdates<F>(Vec<(usize, usize, BatchStats<F>)>);

#[derive(Debug, Clone)]
pub struct Model<F> {
    spec: ModelSpec,
    params: ParamStore<F>,
    blocks: Vec<Vec<ConvUnit>>,
    head: Dense,
    head_azimuth: Option<Dense>,
    head_elevation: Option<Dense>,
}

impl<F: Scalar> Model<F> {
    /// Builds and initializes a model: Glorot-uniform weights, zero biases, BN γ = 1, β = 0,
    /// running mean 0 and variance 1.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut blocks = Vec::new();
        let mut cin = spec.in_channels;
        for (bi, (cout, convs, k)) in spec.blocks().into_iter().enumerate() {
            let mut units = Vec::new();
            for ci in 0..convs {
                let prefix = format!("block{}.conv{}", bi + 1, ci + 1);
                let bn = format!("block{}.bn{}", bi + 1, ci + 1);
                let w = glorot_uniform(&[cout, cin, k, k], cin * k * k, cout * k * k, &mut rng);
                units.push(ConvUnit {
                    weight: params.add_param(&format!("{prefix}.weight"), w)?,
                    gamma: params
                        .add_param(&format!("{bn}.gamma"), Tensor::full(&[cout], F::one()))?,
                    beta: params.add_param(&format!("{bn}.beta"), Tensor::zeros(&[cout]))?,
                    running_mean: params
                        .add_buffer(&format!("{bn}.running_mean"), Tensor::zeros(&[cout]))?,
                    running_var: params.add_buffer(
                        &format!("{bn}.running_var"),
                        Tensor::full(&[cout], F::one()),
                    )?,
                });
                cin = cout;
            }
            blocks.push(units);
        }
        let k = spec.n_classes;
        let mut dense = |name: &str, rng: &mut ChaCha8Rng| -> Result<Dense> {
            Ok(Dense {
                weight: params.add_param(
                    &format!("{name}.weight"),
                    glorot_uniform(&[k, cin], cin, k, rng),
                )?,
                bias: params.add_param(&format!("{name}.bias"), Tensor::zeros(&[k]))?,
            })
        };
        let head = dense("head", &mut rng)?;
        let (head_azimuth, head_elevation) = if spec.head == HeadKind::Seld {
            (
                Some(dense("head_azimuth", &mut rng)?),
                Some(dense("head_elevation", &mut rng)?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            spec,
            params,
            blocks,
            head,
            head_azimuth,
            head_elevation,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn downsample_factor_time(&self) -> usize {
        self.spec.downsample_factor()
    }

    pub fn count_parameters(&self, scope: Scope) -> usize {
        let head_params =
            |d: &Dense| self.params.param(d.weight).len() + self.params.param(d.bias).len();
        let heads: usize = std::iter::once(&self.head)
            .chain(self.head_azimuth.as_ref())
            .chain(self.head_elevation.as_ref())
            .map(head_params)
            .sum();
        match scope {
            Scope::All => self.params.numel(),
            Scope::Trunk => self.params.numel() - heads,
        }
    }

    /// Records the network on `g`. `bound` are this model's parameters as returned by
    /// [`ParamStore::bind`]; `x` is `(N, C_in, T, F)` with time on axis 2.
    pub fn forward_graph(
        &self,
        g: &mut Graph<F>,
        bound: &[Var],
        x: Var,
        mode: Mode,
    ) -> Result<(ModelOutput, BnUpdates<F>)> {
        let [_, c, t, _] = g.value(x).dims4()?;
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        if t == 0 {
            return Err(Error::Shape("input has no frames".into()));
        }
        let factor = self.downsample_factor_time();
        let padded = t.div_ceil(factor) * factor;
        let mut h = if padded != t {
            g.pad_time(x, padded)?
        } else {
            x
        };
        let mut updates = Vec::new();
        for units in &self.blocks {
            for u in units {
                h = g.conv2d(h, bound[u.weight])?;
                h = match mode {
                    Mode::Train => {
                        let (y, stats) = g.batchnorm_train(h, bound[u.gamma], bound[u.beta])?;
                        updates.push((u.running_mean, u.running_var, stats));
                        y
                    }
                    Mode::Eval => g.batchnorm_eval(
                        h,
                        bound[u.gamma],
                        bound[u.beta],
                        self.params.buffer(u.running_mean).data(),
                        self.params.buffer(u.running_var).data(),
                    )?,
                };
                h = g.relu(h);
            }
            h = g.pool2x2(h, self.spec.pool_kind)?;
        }
        let dense =
            |g: &mut Graph<F>, d: &Dense, feat: Var| g.linear(feat, bound[d.weight], bound[d.bias]);
        let out = if self.spec.head.is_clip() {
            let pooled = g.global_pool_clip(h)?;
            ModelOutput {
                logits: dense(g, &self.head, pooled)?,
                azimuth: None,
                elevation: None,
            }
        } else {
            let pooled = g.global_pool_frames(h)?;
            let frame_head = |g: &mut Graph<F>, d: &Dense| -> Result<Var> {
                let y = dense(g, d, pooled)?;
                g.upsample_time(y, factor, t)
            };
            let logits = frame_head(g, &self.head)?;
            let azimuth = self
                .head_azimuth
                .as_ref()
                .map(|d| frame_head(g, d))
                .transpose()?;
            let elevation = self
                .head_elevation
                .as_ref()
                .map(|d| frame_head(g, d))
                .transpose()?;
            ModelOutput {
                logits,
                azimuth,
                elevation,
            }
        };
        Ok((out, BnUpdates(updates)))
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn apply_bn_updates(&mut self, updates: BnUpdates<F>) {
        let m = F::of(BN_MOMENTUM);
        for (mean_i, var_i, stats) in updates.0 {
            for (r, &b) in self
                .params
                .buffer_mut(mean_i)
                .data_mut()
                .iter_mut()
                .zip(&stats.mean)
            {
                *r = (F::one() - m) * *r + m * b;
            }
            for (r, &b) in self
                .params
                .buffer_mut(var_i)
                .data_mut()
                .iter_mut()
                .zip(&stats.var_unbiased)
            {
                *r = (F::one() - m) * *r + m * b;
            }
        }
    }

    fn eval(&self, x: &Tensor<F>) -> Result<(Graph<F>, ModelOutput)> {
        let mut g = Graph::new();
        let bound: Vec<Var> = self
            .params
            .params()
            .iter()
            .map(|p| g.input(p.tensor.clone()))
            .collect();
        let xv = g.input(x.clone());
        let (out, _) = self.forward_graph(&mut g, &bound, xv, Mode::Eval)?;
        Ok((g, out))
    }

    /// Eval-mode clip logits `(N, K)`.
    pub fn forward_clip(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if !self.spec.head.is_clip() {
            return Err(Error::InvalidInput(
                "forward_clip on a frame-level head".into(),
            ));
        }
        let (g, out) = self.eval(x)?;
        Ok(g.value(out.logits).clone())
    }

    /// Eval-mode frame logits `(N, T, K)` (plus normalized angles for SELD) at the input
    /// frame rate.
    pub fn forward_frames(&self, x: &Tensor<F>) -> Result<FrameOutput<F>> {
        if self.spec.head.is_clip() {
            return Err(Error::InvalidInput(
                "forward_frames on a clip-level head".into(),
            ));
        }
        let (g, out) = self.eval(x)?;
        Ok(FrameOutput {
            logits: g.value(out.logits).clone(),
            azimuth: out.azimuth.map(|v| g.value(v).clone()),
            elevation: out.elevation.map(|v| g.value(v).clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(arch: Arch, head: HeadKind) -> ModelSpec {
        ModelSpec::new(arch, PoolKind::Avg, 1, 10, head)
    }

    #[test]
    fn published_trunk_parameter_counts() {
        let count = |a| {
            Model::<f32>::build(spec(a, HeadKind::ClipSoftmax), 0)
                .unwrap()
                .count_parameters(Scope::Trunk)
        };
        assert_eq!(count(Arch::Cnn5), 4_304_320);
        assert_eq!(count(Arch::Cnn9), 4_686_144);
    }

    #[test]
    fn head_counts_added_in_all_scope() {
        let m =
            Model::<f32>::build(spec(Arch::Cnn9, HeadKind::Seld).with_base_channels(4), 0).unwrap();
        let head = 3 * (32 * 10 + 10);
        assert_eq!(
            m.count_parameters(Scope::All) - m.count_parameters(Scope::Trunk),
            head
        );
    }

    #[test]
    fn zero_input_yields_head_bias() {
        let mut m = Model::<f64>::build(
            spec(Arch::Cnn9, HeadKind::ClipSigmoid).with_base_channels(2),
            1,
        )
        .unwrap();
        let bias: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.3).collect();
        m.params_mut()
            .set("head.bias", Tensor::from_vec(&[10], bias.clone()).unwrap())
            .unwrap();
        let y = m.forward_clip(&Tensor::zeros(&[2, 1, 32, 64])).unwrap();
        for row in y.data().chunks(10) {
            for (a, b) in row.iter().zip(&bias) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frame_head_restores_input_length() {
        let m = Model::<f32>::build(
            spec(Arch::Cnn9, HeadKind::FrameSigmoid).with_base_channels(2),
            1,
        )
        .unwrap();
        let y = m.forward_frames(&Tensor::zeros(&[1, 1, 100, 64])).unwrap();
        assert_eq!(y.logits.shape(), &[1, 100, 10]);
        assert!(m.forward_clip(&Tensor::zeros(&[1, 1, 16, 64])).is_err());
    }

    #[test]
    fn wrong_input_channels_rejected() {
        let m = Model::<f32>::build(
            spec(Arch::Cnn5, HeadKind::ClipSoftmax).with_base_channels(2),
            1,
        )
        .unwrap();
        assert!(matches!(
            m.forward_clip(&Tensor::zeros(&[1, 4, 16, 64])),
            Err(Error::Shape(_))
        ));
    }
}
