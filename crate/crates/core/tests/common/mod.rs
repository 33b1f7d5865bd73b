#![allow(dead_code)]

pub mod oracles;
pub mod workflow;

use listenkit::models::{Arch, HeadKind, Model, ModelSpec};
use listenkit::nn::gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
use listenkit::nn::{Graph, Mode, PoolKind, Tensor, Var};
use listenkit::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

pub struct GradCase {
    pub name: String,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
    pub opts: GradCheckOptions,
    /// Largest acceptable relative error for this case.
    pub tol: f64,
}

impl GradCase {
    pub fn run(&self, seed: u64) -> Result<GradCheckReport> {
        check_gradients(
            &self.inputs,
            &self.build,
            GradCheckOptions { seed, ..self.opts },
        )
    }

    fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn binary(rng: &mut ChaCha8Rng, shape: &[usize], p: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| if rng.gen_bool(p) { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap()
}

pub fn one_hot(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[n, k]);
    for r in 0..n {
        let c = rng.gen_range(0..k);
        t.data_mut()[r * k + c] = 1.0;
    }
    t
}

/// Scalarizes `v` with fixed random weights so every output element carries gradient.
fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = uniform(&mut rng, g.value(v).shape(), -1.0, 1.0);
    g.dot(v, &w)
}

fn case(name: &str, inputs: Vec<Tensor<f64>>, build: Build) -> GradCase {
    let opts = GradCheckOptions {
        max_per_input: 48,
        ..Default::default()
    };
    GradCase {
        name: name.to_string(),
        inputs,
        build,
        opts,
        tol: 1e-4,
    }
}

/// One finite-difference case per differentiable operation, plus composed graphs.
pub fn op_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    let x = uniform(&mut rng, &[2, 3, 5, 5], -1.0, 1.0);
    let w = uniform(&mut rng, &[4, 3, 3, 3], -0.5, 0.5);
    cases.push(
        case(
            "conv2d_3x3",
            vec![x, w],
            Box::new(move |g, v| {
                let y = g.conv2d(v[0], v[1])?;
                project(g, y, seed)
            }),
        )
        .tol(1e-6),
    );

    let x = uniform(&mut rng, &[1, 2, 6, 4], -1.0, 1.0);
    let w = uniform(&mut rng, &[3, 2, 5, 5], -0.5, 0.5);
    cases.push(case(
        "conv2d_5x5",
        vec![x, w],
        Box::new(move |g, v| {
            let y = g.conv2d(v[0], v[1])?;
            project(g, y, seed)
        }),
    ));

    let bn_inputs = |rng: &mut ChaCha8Rng| {
        vec![
            uniform(rng, &[3, 2, 3, 4], -2.0, 2.0),
            uniform(rng, &[2], 0.5, 1.5),
            uniform(rng, &[2], -0.5, 0.5),
        ]
    };
    cases.push(
        case(
            "batchnorm_train",
            bn_inputs(&mut rng),
            Box::new(move |g, v| {
                let (y, _) = g.batchnorm_train(v[0], v[1], v[2])?;
                project(g, y, seed)
            }),
        )
        .tol(1e-5),
    );
    let (rm, rv) = (vec![0.3, -0.2], vec![1.5, 0.7]);
    cases.push(case(
        "batchnorm_eval",
        bn_inputs(&mut rng),
        Box::new(move |g, v| {
            let y = g.batchnorm_eval(v[0], v[1], v[2], &rm, &rv)?;
            project(g, y, seed)
        }),
    ));

    cases.push(case(
        "relu",
        vec![uniform(&mut rng, &[2, 3, 4], -1.0, 1.0)],
        Box::new(move |g, v| {
            let y = g.relu(v[0]);
            project(g, y, seed)
        }),
    ));

    for (kind, name) in [(PoolKind::Avg, "pool_avg"), (PoolKind::Max, "pool_max")] {
        cases.push(case(
            name,
            vec![uniform(&mut rng, &[2, 2, 5, 6], -1.0, 1.0)],
            Box::new(move |g, v| {
                let y = g.pool2x2(v[0], kind)?;
                project(g, y, seed)
            }),
        ));
    }

    cases.push(
        case(
            "global_pool_clip",
            vec![uniform(&mut rng, &[2, 3, 6, 5], -1.0, 1.0)],
            Box::new(move |g, v| {
                let y = g.global_pool_clip(v[0])?;
                project(g, y, seed)
            }),
        )
        .tol(1e-6),
    );
    cases.push(case(
        "global_pool_frames",
        vec![uniform(&mut rng, &[2, 3, 4, 5], -1.0, 1.0)],
        Box::new(move |g, v| {
            let y = g.global_pool_frames(v[0])?;
            project(g, y, seed)
        }),
    ));
    cases.push(
        case(
            "linear",
            vec![
                uniform(&mut rng, &[2, 3, 5], -1.0, 1.0),
                uniform(&mut rng, &[4, 5], -1.0, 1.0),
                uniform(&mut rng, &[4], -1.0, 1.0),
            ],
            Box::new(move |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                project(g, y, seed)
            }),
        )
        .tol(1e-7),
    );
    cases.push(case(
        "upsample_time",
        vec![uniform(&mut rng, &[2, 3, 4], -1.0, 1.0)],
        Box::new(move |g, v| {
            let y = g.upsample_time(v[0], 4, 10)?;
            project(g, y, seed)
        }),
    ));
    cases.push(case(
        "pad_time",
        vec![uniform(&mut rng, &[1, 2, 3, 2], -1.0, 1.0)],
        Box::new(move |g, v| {
            let y = g.pad_time(v[0], 8)?;
            project(g, y, seed)
        }),
    ));
    cases.push(case(
        "max_time",
        vec![uniform(&mut rng, &[2, 5, 3], -1.0, 1.0)],
        Box::new(move |g, v| {
            let y = g.max_time(v[0])?;
            project(g, y, seed)
        }),
    ));

    let target = one_hot(&mut rng, 4, 5);
    cases.push(case(
        "loss_ce",
        vec![uniform(&mut rng, &[4, 5], -3.0, 3.0)],
        Box::new(move |g, v| g.loss_ce(v[0], &target)),
    ));
    let (target, mask) = (
        binary(&mut rng, &[2, 6, 3], 0.4),
        binary(&mut rng, &[2, 6, 3], 0.7),
    );
    cases.push(
        case(
            "loss_bce_masked",
            vec![uniform(&mut rng, &[2, 6, 3], -4.0, 4.0)],
            Box::new(move |g, v| g.loss_bce(v[0], &target, Some(&mask))),
        )
        .tol(1e-6),
    );
    let act = binary(&mut rng, &[2, 5, 3], 0.5);
    let azi_t = uniform(&mut rng, &[2, 5, 3], -1.0, 1.0);
    let ele_t = uniform(&mut rng, &[2, 5, 3], -1.0, 1.0);
    cases.push(case(
        "loss_seld",
        vec![
            uniform(&mut rng, &[2, 5, 3], -3.0, 3.0),
            uniform(&mut rng, &[2, 5, 3], -1.0, 1.0),
            uniform(&mut rng, &[2, 5, 3], -1.0, 1.0),
        ],
        Box::new(move |g, v| g.loss_seld(v[0], v[1], v[2], &act, &azi_t, &ele_t, 0.7)),
    ));

    // conv → BN → ReLU → pool → global clip pooling → linear → BCE + CE
    let (t_bce, t_ce) = (binary(&mut rng, &[2, 3], 0.5), one_hot(&mut rng, 2, 3));
    cases.push(case(
        "composed_block",
        vec![
            uniform(&mut rng, &[2, 1, 6, 4], -1.0, 1.0),
            uniform(&mut rng, &[3, 1, 3, 3], -0.5, 0.5),
            uniform(&mut rng, &[3], 0.5, 1.5),
            uniform(&mut rng, &[3], -0.2, 0.2),
            uniform(&mut rng, &[3, 3], -1.0, 1.0),
            uniform(&mut rng, &[3], -0.1, 0.1),
        ],
        Box::new(move |g, v| {
            let h = g.conv2d(v[0], v[1])?;
            let (h, _) = g.batchnorm_train(h, v[2], v[3])?;
            let h = g.relu(h);
            let h = g.pool2x2(h, PoolKind::Avg)?;
            let h = g.global_pool_clip(h)?;
            let z = g.linear(h, v[4], v[5])?;
            let a = g.loss_bce(z, &t_bce, None)?;
            let b = g.loss_ce(z, &t_ce)?;
            let b = g.scale(b, 0.5);
            g.add(a, b)
        }),
    ));
    cases
}

pub const ARCH_CONFIGS: [(Arch, PoolKind); 4] = [
    (Arch::Cnn5, PoolKind::Avg),
    (Arch::Cnn9, PoolKind::Avg),
    (Arch::Cnn9, PoolKind::Max),
    (Arch::Cnn13, PoolKind::Avg),
];

pub const HEADS: [HeadKind; 4] = [
    HeadKind::ClipSoftmax,
    HeadKind::ClipSigmoid,
    HeadKind::FrameSigmoid,
    HeadKind::Seld,
];

/// Whole-network case at tiny width: gradients of the task loss w.r.t. the input and every
/// parameter tensor. Uses a frame count that is not a multiple of the downsampling factor so
/// the edge-padding path is exercised.
pub fn arch_case(arch: Arch, pool: PoolKind, head: HeadKind, mode: Mode, seed: u64) -> GradCase {
    let k = 3;
    let in_ch = if head == HeadKind::Seld { 4 } else { 1 };
    let spec = ModelSpec::new(arch, pool, in_ch, k, head).with_base_channels(2);
    let mut model = Model::<f64>::build(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    if mode == Mode::Eval {
        // Non-trivial running statistics.
        let names: Vec<String> = model
            .params()
            .buffers()
            .iter()
            .map(|b| b.name.clone())
            .collect();
        for name in names {
            let len = model.params().get(&name).unwrap().len();
            let (lo, hi) = if name.ends_with("running_var") {
                (0.5, 2.0)
            } else {
                (-0.3, 0.3)
            };
            model
                .params_mut()
                .set(&name, uniform(&mut rng, &[len], lo, hi))
                .unwrap();
        }
    }
    let (n, t, f) = (2, 20, 8);
    let x = uniform(&mut rng, &[n, in_ch, t, f], -1.0, 1.0);
    let mut inputs = vec![x];
    inputs.extend(model.params().params().iter().map(|p| p.tensor.clone()));
    let clip_ce = one_hot(&mut rng, n, k);
    let clip_bce = binary(&mut rng, &[n, k], 0.5);
    let act = binary(&mut rng, &[n, t, k], 0.5);
    let azi = uniform(&mut rng, &[n, t, k], -1.0, 1.0);
    let ele = uniform(&mut rng, &[n, t, k], -1.0, 1.0);
    let build: Build = Box::new(move |g, v| {
        let (out, _) = model.forward_graph(g, &v[1..], v[0], mode)?;
        match head {
            HeadKind::ClipSoftmax => g.loss_ce(out.logits, &clip_ce),
            HeadKind::ClipSigmoid => g.loss_bce(out.logits, &clip_bce, None),
            HeadKind::FrameSigmoid => g.loss_bce(out.logits, &act, None),
            HeadKind::Seld => g.loss_seld(
                out.logits,
                out.azimuth.expect("seld head"),
                out.elevation.expect("seld head"),
                &act,
                &azi,
                &ele,
                1.0,
            ),
        }
    });
    let opts = GradCheckOptions {
        step: 3e-6,
        floor: 1e-5,
        kink_tol: Some(1e-5),
        max_per_input: 3,
        seed: 0,
    };
    GradCase {
        name: format!("{arch:?}-{pool:?}-{head:?}-{mode:?}"),
        inputs,
        build,
        opts,
        tol: 1e-4,
    }
}
