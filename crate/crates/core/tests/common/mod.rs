//! Shared test oracles and fixtures.
#![allow(dead_code)]

pub mod brute;
pub mod fixtures;
pub mod grad_suite;

use vqvc::tensor::{Graph, ParamStore, Tensor, Var};

/// Central finite differences of `f` with respect to every entry of every
/// parameter in `names`, compared with the analytic gradient. Returns the worst
/// relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn max_grad_error(
    store: &ParamStore<f64>,
    names: &[&str],
    eps: f64,
    floor: f64,
    f: impl Fn(&mut Graph<f64>, &ParamStore<f64>) -> Var,
) -> f64 {
    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut g = Graph::new();
    let loss = f(&mut g, &analytic);
    g.backward(loss, &mut analytic).unwrap();
    let mut worst: f64 = 0.0;
    for &name in names {
        let grad = analytic
            .grad(name)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(name).unwrap().shape().to_vec()));
        for i in 0..grad.numel() {
            let eval = |delta: f64| {
                let mut s = store.clone();
                s.get_mut(name).unwrap().data_mut()[i] += delta;
                let mut g = Graph::new();
                let l = f(&mut g, &s);
                g.value(l).item()
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = grad.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}

/// Deterministic pseudo-random values in [-1, 1) (LCG), independent of the crate's RNG.
pub fn lcg_values(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

pub fn rand_tensor(seed: u64, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), lcg_values(seed, n)).unwrap()
}
