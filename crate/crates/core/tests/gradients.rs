mod common;

use common::{arch_case, op_cases, ARCH_CONFIGS, HEADS};
use listenkit::nn::{Graph, Mode, Tensor};
use proptest::prelude::*;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..5 {
        for case in op_cases(seed) {
            let r = case.run(seed).unwrap();
            assert!(
                r.max_rel_error < case.tol,
                "{} seed {seed}: {r:?}",
                case.name
            );
        }
    }
}

#[test]
fn conv_gradient_is_tight() {
    // 2×3×5×5 input, four 3×3 filters.
    let case = op_cases(11)
        .into_iter()
        .find(|c| c.name == "conv2d_3x3")
        .unwrap();
    let r = case.run(11).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn architectures_match_finite_differences() {
    for (i, (arch, pool)) in ARCH_CONFIGS.iter().enumerate() {
        for (j, head) in HEADS.iter().enumerate() {
            let mode = if (i + j) % 2 == 0 {
                Mode::Train
            } else {
                Mode::Eval
            };
            let case = arch_case(*arch, *pool, *head, mode, (i * 4 + j) as u64);
            let r = case.run(1).unwrap();
            assert!(r.max_rel_error < case.tol, "{}: {r:?}", case.name);
        }
    }
}

fn rand_tensor(shape: &[usize], values: &[f64]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, values[..n].to_vec()).unwrap()
}

proptest! {
    #[test]
    fn softmax_shift_invariance(values in prop::collection::vec(-5.0f64..5.0, 12), shift in -50.0f64..50.0, cls in 0usize..4) {
        let logits = rand_tensor(&[3, 4], &values);
        let mut y = Tensor::zeros(&[3, 4]);
        for r in 0..3 { y.data_mut()[r * 4 + (cls + r) % 4] = 1.0; }
        let mut g = Graph::new();
        let a = g.input(logits.clone());
        let b = g.input(logits.map(|v| v + shift));
        let la = g.loss_ce(a, &y).unwrap();
        let lb = g.loss_ce(b, &y).unwrap();
        prop_assert!((g.value(la).item() - g.value(lb).item()).abs() < 1e-10);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients(values in prop::collection::vec(-3.0f64..3.0, 24), bits in prop::collection::vec(any::<bool>(), 12)) {
        let x = rand_tensor(&[2, 6], &values);
        let w = rand_tensor(&[6], &values[12..]);
        let target = Tensor::from_vec(&[2, 6], bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap();
        let grads = |which: u8| {
            let mut g = Graph::new();
            let xv = g.param(x.clone());
            let a = g.loss_bce(xv, &target, None).unwrap();
            let b = g.dot(xv, &Tensor::from_vec(&[2, 6], [w.data(), w.data()].concat()).unwrap()).unwrap();
            let root = match which { 0 => a, 1 => b, _ => g.add(a, b).unwrap() };
            g.backward(root).unwrap();
            g.grad(xv).unwrap().clone()
        };
        let (ga, gb, gs) = (grads(0), grads(1), grads(2));
        for i in 0..12 {
            prop_assert!((ga.data()[i] + gb.data()[i] - gs.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn global_clip_pool_is_permutation_invariant(
        values in prop::collection::vec(-3.0f64..3.0, 30),
        perm_t in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        perm_f in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let x = rand_tensor(&[1, 1, 5, 6], &values);
        let mut permuted = Tensor::zeros(&[1, 1, 5, 6]);
        for t in 0..5 {
            for f in 0..6 {
                permuted.data_mut()[perm_t[t] * 6 + perm_f[f]] = x.data()[t * 6 + f];
            }
        }
        let mut g = Graph::new();
        let a = g.input(x);
        let b = g.input(permuted);
        let pa = g.global_pool_clip(a).unwrap();
        let pb = g.global_pool_clip(b).unwrap();
        prop_assert!((g.value(pa).item() - g.value(pb).item()).abs() < 1e-12);
    }

    #[test]
    fn stable_losses_finite_at_large_logits(sign in prop::collection::vec(any::<bool>(), 8)) {
        let z = Tensor::<f64>::from_vec(&[2, 4], sign.iter().map(|&s| if s { 100.0 } else { -100.0 }).collect()).unwrap();
        let y = Tensor::from_vec(&[2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut g = Graph::new();
        let zv = g.param(z);
        let a = g.loss_bce(zv, &y, None).unwrap();
        let b = g.loss_ce(zv, &y).unwrap();
        let s = g.add(a, b).unwrap();
        g.backward(s).unwrap();
        prop_assert!(g.value(s).item().is_finite());
        prop_assert!(g.grad(zv).unwrap().all_finite());
    }
}
