//! Brute-force recomputations of the quantizer, the contrastive loss and DTW.

use super::fixtures::{rows, signal, tiny_vq, vq_params};
use super::lcg_values;
use vqvc::acoustic::AcousticSeq;
use vqvc::metrics::{cepstra, dtw, frame_distortion, mcd_aligned};
use vqvc::tensor::{Graph, Rng, Tensor};
use vqvc::vq::{GumbelNoise, Negatives, QuantMode};

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Causal conv by direct summation: `out[t][o] = b[o] + Σ_j Σ_i w[j][i][o] x[t-(k-1)+j][i]`.
fn causal_conv(x: &[Vec<f64>], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (k, cin, cout) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    (0..x.len())
        .map(|t| {
            (0..cout)
                .map(|o| {
                    let mut s = b.data()[o];
                    for j in 0..k {
                        let src = t as isize - (k as isize - 1) + j as isize;
                        if src < 0 {
                            continue;
                        }
                        for i in 0..cin {
                            s += w.data()[(j * cin + i) * cout + o] * x[src as usize][i];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub struct GumbelCheck {
    pub max_prob_error: f64,
    pub argmax_mismatches: usize,
}

/// Gumbel-softmax probabilities and hard indices against the direct formula,
/// over several (V, T, τ) with G = 2.
pub fn gumbel() -> GumbelCheck {
    let mut out = GumbelCheck {
        max_prob_error: 0.0,
        argmax_mismatches: 0,
    };
    for (v, frames, seed) in [(4usize, 12usize, 1u64), (3, 7, 2), (2, 5, 3)] {
        let m = tiny_vq(v, 2);
        let p = vq_params(&m, seed);
        let noise = GumbelNoise::sample(frames, 2, v, &mut Rng::new(seed + 10));
        for tau in [0.5, 1.0, 2.0] {
            let mut g = Graph::new();
            let z = m.encode(&mut g, &p, &signal(frames, seed)).unwrap();
            let q = m.quantize(&mut g, &p, z, QuantMode::Train { tau, noise: &noise }).unwrap();
            let zv = rows(g.value(z));
            for gi in 0..2 {
                let w = p.get(&format!("q/logits{gi}/w")).unwrap();
                let b = p.get(&format!("q/logits{gi}/b")).unwrap();
                let probs = g.value(q.soft_probs[gi]);
                for t in 0..frames {
                    let logit = |j: usize| b.data()[j] + (0..4).map(|i| zv[t][gi * 4 + i] * w.data()[i * v + j]).sum::<f64>();
                    let e: Vec<f64> = (0..v).map(|j| ((logit(j) + noise.groups[gi][t * v + j]) / tau).exp()).collect();
                    let total: f64 = e.iter().sum();
                    let mut best = 0;
                    for j in 0..v {
                        out.max_prob_error = out.max_prob_error.max((probs.row(t)[j] - e[j] / total).abs());
                        if e[j] > e[best] {
                            best = j;
                        }
                    }
                    if q.indices[t * 2 + gi] as usize != best {
                        out.argmax_mismatches += 1;
                    }
                }
            }
        }
    }
    out
}

/// Worst relative error of the contrastive loss against a direct summation
/// over positions, offsets and sampled negatives.
pub fn contrastive_loss() -> f64 {
    let mut worst: f64 = 0.0;
    for (v, k, frames, seed) in [(4usize, 2usize, 12usize, 4u64), (4, 3, 9, 5), (3, 1, 4, 6), (2, 2, 3, 7)] {
        let m = tiny_vq(v, k);
        let p = vq_params(&m, seed);
        let noise = GumbelNoise::sample(frames, 2, v, &mut Rng::new(seed + 20));
        let negs = Negatives::sample(frames, k, 3, &mut Rng::new(seed + 30));
        let mut g = Graph::new();
        let (loss, q) = m
            .loss(&mut g, &p, &signal(frames, seed), QuantMode::Train { tau: 1.3, noise: &noise }, &negs)
            .unwrap();
        let zv = m.encode(&mut g, &p, &signal(frames, seed)).unwrap();
        let z = rows(g.value(zv));
        // reconstruction from indices and the shared codebook
        let cb = p.get("q/codebook").unwrap();
        let mut c: Vec<Vec<f64>> = (0..frames)
            .map(|t| (0..2).flat_map(|gi| cb.row(q.indices[t * 2 + gi] as usize).to_vec()).collect())
            .collect();
        let layers = m.cfg.aggregator.layers.len();
        for l in 0..layers {
            c = causal_conv(&c, p.get(&format!("agg/conv{l}/w")).unwrap(), p.get(&format!("agg/conv{l}/b")).unwrap());
            if l + 1 < layers {
                c.iter_mut().flatten().for_each(|x| *x = x.max(0.0));
            }
        }
        let weight = m.cfg.contrastive.lambda / m.cfg.contrastive.negatives as f64;
        let mut want = 0.0;
        for kk in 1..=k {
            let wk = p.get(&format!("pred/w{kk}")).unwrap();
            let (dz, dc) = (wk.shape()[0], wk.shape()[1]);
            let score = |a: &[f64], ci: &[f64]| -> f64 {
                (0..dz).map(|r| a[r] * (0..dc).map(|s| wk.data()[r * dc + s] * ci[s]).sum::<f64>()).sum()
            };
            for i in 0..frames - kk {
                want -= log_sigmoid(score(&z[i + kk], &c[i]));
                for n in 0..3 {
                    let j = negs.idx[kk - 1][n][i];
                    want -= weight * log_sigmoid(-score(&z[j], &c[i]));
                }
            }
        }
        let got = g.value(loss).item();
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    worst
}

/// Every monotone path from (0,0) to (n-1,m-1) with steps (1,0),(0,1),(1,1);
/// returns the lexicographically smallest (cost, length).
pub fn best_path(cost: &[Vec<f64>]) -> (f64, usize) {
    fn walk(cost: &[Vec<f64>], i: usize, j: usize, acc: f64, len: usize, best: &mut (f64, usize)) {
        let acc = acc + cost[i][j];
        let len = len + 1;
        let (n, m) = (cost.len(), cost[0].len());
        if i == n - 1 && j == m - 1 {
            if acc < best.0 || (acc == best.0 && len < best.1) {
                *best = (acc, len);
            }
            return;
        }
        if i + 1 < n {
            walk(cost, i + 1, j, acc, len, best);
        }
        if j + 1 < m {
            walk(cost, i, j + 1, acc, len, best);
        }
        if i + 1 < n && j + 1 < m {
            walk(cost, i + 1, j + 1, acc, len, best);
        }
    }
    let mut best = (f64::INFINITY, usize::MAX);
    walk(cost, 0, 0, 0.0, 0, &mut best);
    best
}

pub fn acoustic(seed: u64, frames: usize, dim: usize) -> AcousticSeq {
    let v: Vec<f32> = lcg_values(seed, frames * dim).iter().map(|&x| (x * 3.0) as f32).collect();
    AcousticSeq::new(dim, v).unwrap()
}

/// DTW and DTW-MCD against exhaustive path enumeration for every size up to
/// 5×6. Returns (worst relative cost error, path-length mismatches).
pub fn dtw_grid() -> (f64, usize) {
    let (mut worst, mut mismatches) = (0.0f64, 0);
    let mut seed = 0;
    for n in 1..=5 {
        for m in 1..=6 {
            for _ in 0..5 {
                seed += 1;
                let (a, b) = (acoustic(seed, n, 6), acoustic(seed + 1000, m, 6));
                let (ca, cb) = (cepstra(&a), cepstra(&b));
                let local: Vec<Vec<f64>> = ca.iter().map(|x| cb.iter().map(|y| frame_distortion(x, y)).collect()).collect();
                let (cost, len) = best_path(&local);
                let al = dtw(&local).unwrap();
                let (mean, pairs) = mcd_aligned(&a, &b, true).unwrap();
                worst = worst.max((al.cost - cost).abs() / cost.max(1.0));
                worst = worst.max((mean - cost / len as f64).abs() / (cost / len as f64).max(1.0));
                mismatches += usize::from(al.path.len() != len) + usize::from(pairs != len);
            }
        }
    }
    (worst, mismatches)
}
