//! Finite-difference gradient checks. Each returns the worst relative error
//! over every entry of the parameters it perturbs.

use super::fixtures::{frames, index_seq, perturbed, signal, small_seq2seq, tiny_vq, vq_params};
use super::{max_grad_error, rand_tensor};
use vqvc::seq2seq::FrontEnd;
use vqvc::tensor::{Graph, ParamStore, Rng, Var};
use vqvc::vq::{GumbelNoise, Negatives, QuantMode};

pub const TOL: f64 = 1e-3;
const EPS: f64 = 1e-3;
const FLOOR: f64 = 1e-6;

fn store(entries: &[(&str, &[usize])]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (i, (n, shape)) in entries.iter().enumerate() {
        s.insert(n, rand_tensor(100 + i as u64, shape));
    }
    s
}

/// Projects a tensor to a scalar with fixed random weights so every output entry matters.
fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> Var {
    let shape = g.shape(v).to_vec();
    let w = g.constant(rand_tensor(seed, &shape));
    let p = g.mul(v, w).unwrap();
    g.sum(p).unwrap()
}

fn check(entries: &[(&str, &[usize])], f: impl Fn(&mut Graph<f64>, &ParamStore<f64>) -> Var) -> f64 {
    let s = store(entries);
    let names: Vec<&str> = entries.iter().map(|e| e.0).collect();
    max_grad_error(&s, &names, EPS, FLOOR, f)
}

pub fn matmul(nt: bool) -> f64 {
    if nt {
        check(&[("a", &[3, 4]), ("b", &[5, 4])], |g, s| {
            let (a, b) = (g.param(s, "a").unwrap(), g.param(s, "b").unwrap());
            let y = g.matmul_nt(a, b).unwrap();
            project(g, y, 2)
        })
    } else {
        check(&[("a", &[3, 4]), ("b", &[4, 2])], |g, s| {
            let (a, b) = (g.param(s, "a").unwrap(), g.param(s, "b").unwrap());
            let y = g.matmul(a, b).unwrap();
            project(g, y, 1)
        })
    }
}

pub fn transpose() -> f64 {
    check(&[("a", &[3, 4])], |g, s| {
        let a = g.param(s, "a").unwrap();
        let y = g.transpose(a).unwrap();
        project(g, y, 3)
    })
}

pub fn elementwise_broadcast() -> f64 {
    check(&[("a", &[3, 4]), ("r", &[4]), ("s", &[]), ("m", &[3, 4])], |g, s| {
        let a = g.param(s, "a").unwrap();
        let r = g.param(s, "r").unwrap();
        let sc = g.param(s, "s").unwrap();
        let m = g.param(s, "m").unwrap();
        let x = g.add(a, r).unwrap();
        let x = g.mul(x, sc).unwrap();
        let x = g.sub(x, m).unwrap();
        let x = g.mul(x, m).unwrap();
        let x = g.mul(x, r).unwrap();
        let x = g.scale(x, 0.7).unwrap();
        project(g, x, 4)
    })
}

pub fn conv1d(causal: bool) -> f64 {
    if causal {
        check(&[("x", &[7, 3]), ("w", &[3, 3, 2])], |g, s| {
            let (x, w) = (g.param(s, "x").unwrap(), g.param(s, "w").unwrap());
            let y = g.conv1d(x, w, 1, 2, 1).unwrap();
            project(g, y, 6)
        })
    } else {
        check(&[("x", &[11, 2]), ("w", &[3, 2, 4])], |g, s| {
            let (x, w) = (g.param(s, "x").unwrap(), g.param(s, "w").unwrap());
            let y = g.conv1d(x, w, 2, 0, 0).unwrap();
            project(g, y, 5)
        })
    }
}

pub fn softmax() -> f64 {
    check(&[("a", &[4, 5])], |g, s| {
        let a = g.param(s, "a").unwrap();
        let y = g.softmax(a).unwrap();
        project(g, y, 7)
    })
}

pub fn exp_log() -> f64 {
    check(&[("a", &[4, 5])], |g, s| {
        let a = g.param(s, "a").unwrap();
        let e = g.exp(a).unwrap();
        let y = g.log(e).unwrap();
        let y = g.exp(y).unwrap();
        project(g, y, 8)
    })
}

pub fn sigmoids() -> f64 {
    check(&[("a", &[4, 5])], |g, s| {
        let a = g.param(s, "a").unwrap();
        let y = g.sigmoid(a).unwrap();
        let z = g.log_sigmoid(a).unwrap();
        let y = g.add(y, z).unwrap();
        project(g, y, 9)
    })
}

pub fn relu_abs() -> f64 {
    check(&[("a", &[4, 5])], |g, s| {
        // random values in [-1,1) keep clear of the kinks at 0 by more than EPS
        let a = g.param(s, "a").unwrap();
        let y = g.relu(a).unwrap();
        let z = g.abs(a).unwrap();
        let y = g.add(y, z).unwrap();
        project(g, y, 10)
    })
}

pub fn layer_norm() -> f64 {
    check(&[("a", &[4, 6])], |g, s| {
        let a = g.param(s, "a").unwrap();
        let y = g.layer_norm(a, 1e-5).unwrap();
        project(g, y, 11)
    })
}

pub fn embedding() -> f64 {
    check(&[("t", &[5, 3])], |g, s| {
        let t = g.param(s, "t").unwrap();
        let y = g.embedding(t, &[4, 0, 4, 2]).unwrap();
        project(g, y, 12)
    })
}

pub fn concat_slice_reduce() -> f64 {
    check(&[("a", &[2, 3]), ("b", &[2, 2]), ("c", &[1, 3])], |g, s| {
        let (a, b, c) = (g.param(s, "a").unwrap(), g.param(s, "b").unwrap(), g.param(s, "c").unwrap());
        let h = g.concat(&[a, b, a], 1).unwrap();
        let v = g.concat(&[a, c], 0).unwrap();
        let hs = g.slice(h, 1, 1, 6).unwrap();
        let vs = g.slice(v, 0, 1, 3).unwrap();
        let p1 = project(g, hs, 13);
        let p2 = project(g, vs, 14);
        let rs = g.sum_cols(v).unwrap();
        let p3 = project(g, rs, 15);
        let m = g.mean(a).unwrap();
        let t = g.add(p1, p2).unwrap();
        let t = g.add(t, p3).unwrap();
        g.add(t, m).unwrap()
    })
}

pub fn three_layer_mlp() -> f64 {
    let entries: &[(&str, &[usize])] = &[
        ("w1", &[6, 8]),
        ("b1", &[8]),
        ("w2", &[8, 8]),
        ("b2", &[8]),
        ("w3", &[8, 3]),
        ("b3", &[3]),
    ];
    check(entries, |g, s| {
        let x = g.constant(rand_tensor(77, &[5, 6]));
        let mut h = x;
        for (i, (w, b)) in [("w1", "b1"), ("w2", "b2"), ("w3", "b3")].iter().enumerate() {
            let (w, b) = (g.param(s, w).unwrap(), g.param(s, b).unwrap());
            h = g.linear(h, w, Some(b)).unwrap();
            if i < 2 {
                h = g.sigmoid(h).unwrap();
            }
        }
        let y = g.softmax(h).unwrap();
        let y = g.log(y).unwrap();
        project(g, y, 16)
    })
}

pub fn ops() -> Vec<(&'static str, f64)> {
    vec![
        ("matmul", matmul(false)),
        ("matmul_nt", matmul(true)),
        ("transpose", transpose()),
        ("elementwise", elementwise_broadcast()),
        ("conv1d", conv1d(false)),
        ("conv1d_causal", conv1d(true)),
        ("softmax", softmax()),
        ("exp_log", exp_log()),
        ("sigmoid", sigmoids()),
        ("relu_abs", relu_abs()),
        ("layer_norm", layer_norm()),
        ("embedding", embedding()),
        ("concat_slice_reduce", concat_slice_reduce()),
        ("mlp", three_layer_mlp()),
    ]
}

/// Contrastive loss with the relaxed quantizer (all parameters), and with hard
/// straight-through selection (codebook and downstream parameters, where the
/// forward is exact).
pub fn contrastive() -> Vec<(&'static str, f64)> {
    let (v, k, n) = (4, 2, 12);
    let m = tiny_vq(v, k);
    let p = vq_params(&m, 40);
    let sig = signal(n, 41);
    let noise = GumbelNoise::sample(n, 2, v, &mut Rng::new(42));
    let negs = Negatives::sample(n, k, 3, &mut Rng::new(43));
    let all: Vec<String> = p.names().map(str::to_owned).collect();
    let names: Vec<&str> = all.iter().map(String::as_str).collect();
    let relaxed = max_grad_error(&p, &names, 1e-5, FLOOR, |g, s| {
        m.loss(g, s, &sig, QuantMode::Relaxed { tau: 0.9, noise: &noise }, &negs).unwrap().0
    });
    let downstream: Vec<&str> = names
        .iter()
        .copied()
        .filter(|n| n.starts_with("q/codebook") || n.starts_with("agg/") || n.starts_with("pred/"))
        .collect();
    let hard = max_grad_error(&p, &downstream, 1e-5, FLOOR, |g, s| {
        m.loss(g, s, &sig, QuantMode::Train { tau: 0.9, noise: &noise }, &negs).unwrap().0
    });
    vec![("contrastive_relaxed", relaxed), ("contrastive_straight_through", hard)]
}

pub fn seq2seq_loss(front_end: FrontEnd) -> f64 {
    let model = small_seq2seq(front_end);
    let p = perturbed(&model, 3);
    let tokens = model.tokens(&index_seq(5, 4, 11)).unwrap();
    let target = frames(7, 6, 12);
    let names: Vec<&str> = p.names().collect();
    max_grad_error(&p, &names, 1e-5, FLOOR, |g, s| model.loss(g, s, &tokens, &target, None).unwrap().total)
}

/// Training-mode loss with the dropout mask pinned by a fixed RNG per evaluation.
pub fn seq2seq_loss_dropout() -> f64 {
    let model = small_seq2seq(FrontEnd::Separate);
    let p = perturbed(&model, 4);
    let tokens = model.tokens(&index_seq(5, 4, 21)).unwrap();
    let target = frames(7, 6, 22);
    let names = ["dec/prenet1/w", "dec/prenet2/w", "dec/prenet_proj/w", "fe/table"];
    max_grad_error(&p, &names, 1e-5, FLOOR, |g, s| {
        let mut rng = Rng::new(99);
        model.loss(g, s, &tokens, &target, Some(&mut rng)).unwrap().total
    })
}

pub fn seq2seq() -> Vec<(&'static str, f64)> {
    vec![
        ("seq2seq_separate", seq2seq_loss(FrontEnd::Separate)),
        ("seq2seq_joint", seq2seq_loss(FrontEnd::Joint)),
        ("seq2seq_dropout", seq2seq_loss_dropout()),
    ]
}
