//! Central finite-difference gradient checking in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Perturbation `h` in `(f(x + h) − f(x − h)) / 2h`.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so near-zero gradients are compared
    /// absolutely.
    pub floor: f64,
    /// Piecewise-linear graphs (ReLU, max) have kinks; one may lie within `step` of the
    /// evaluation point, which spoils the central difference. When set, a coordinate whose central
    /// estimate misses by more than this is re-estimated with second-order one-sided differences
    /// `(−3f(x) + 4f(x ± h) − f(x ± 2h)) / ±2h`, and the best of the three estimates is kept.
    /// Such coordinates are counted in [`GradCheckReport::kinks`].
    pub kink_tol: Option<f64>,
    /// Coordinates checked per input tensor (all of them when the tensor is smaller).
    pub max_per_input: usize,
    /// Seed for choosing coordinates.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            floor: 1e-6,
            kink_tol: None,
            max_per_input: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Coordinates settled by a one-sided estimate.
    pub kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<G>(inputs: &[Tensor<f64>], build: &G) -> Result<f64>
where
    G: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Compares reverse-mode gradients of the scalar built by `build` against central differences
/// for every input tensor.
pub fn check_gradients<G>(
    inputs: &[Tensor<f64>],
    build: G,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    G: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            g.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
        kinks: 0,
    };
    let mut work = inputs.to_vec();
    let center = match opts.kink_tol {
        Some(_) => evaluate(inputs, &build)?,
        None => 0.0,
    };
    for (ti, t) in inputs.iter().enumerate() {
        let picks: Vec<usize> = if t.len() <= opts.max_per_input {
            (0..t.len()).collect()
        } else {
            sample(&mut rng, t.len(), opts.max_per_input).into_vec()
        };
        for j in picks {
            let x0 = t.data()[j];
            work[ti].data_mut()[j] = x0 + opts.step;
            let plus = evaluate(&work, &build)?;
            work[ti].data_mut()[j] = x0 - opts.step;
            let minus = evaluate(&work, &build)?;
            work[ti].data_mut()[j] = x0;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let analytic_j = analytic[ti].data()[j];
            let mut err = relative_error(analytic_j, numeric, opts.floor);
            if opts.kink_tol.is_some_and(|tol| err > tol) {
                work[ti].data_mut()[j] = x0 + 2.0 * opts.step;
                let plus2 = evaluate(&work, &build)?;
                work[ti].data_mut()[j] = x0 - 2.0 * opts.step;
                let minus2 = evaluate(&work, &build)?;
                work[ti].data_mut()[j] = x0;
                let h2 = 2.0 * opts.step;
                let fwd = (-3.0 * center + 4.0 * plus - plus2) / h2;
                let bwd = (3.0 * center - 4.0 * minus + minus2) / h2;
                let one_sided = relative_error(analytic_j, fwd, opts.floor)
                    .min(relative_error(analytic_j, bwd, opts.floor));
                if one_sided < err {
                    err = one_sided;
                    report.kinks += 1;
                }
            }
            if !err.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at input {ti}[{j}]"
                )));
            }
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (ti, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
