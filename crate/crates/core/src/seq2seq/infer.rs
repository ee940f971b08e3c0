//! Autoregressive decoding with cached keys and values.

use super::model::{position_value, Seq2SeqModel, Tokens, LN_EPS};
use crate::acoustic::AcousticSeq;
use crate::error::{contract, Result};
use crate::tensor::{Graph, ParamStore, Tensor};

fn get<'a>(p: &'a ParamStore<f32>, name: &str) -> Result<&'a Tensor<f32>> {
    p.get(name).ok_or_else(|| contract(format!("missing parameter '{name}'")))
}

struct Linear<'a> {
    w: &'a Tensor<f32>,
    b: &'a Tensor<f32>,
}

impl<'a> Linear<'a> {
    fn load(p: &'a ParamStore<f32>, name: &str) -> Result<Self> {
        Ok(Self {
            w: get(p, &format!("{name}/w"))?,
            b: get(p, &format!("{name}/b"))?,
        })
    }

    fn apply(&self, x: &[f32]) -> Vec<f32> {
        let out = self.w.cols();
        let mut y = self.b.data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w.data()[i * out..(i + 1) * out];
            for (yo, &w) in y.iter_mut().zip(row) {
                *yo += xi * w;
            }
        }
        y
    }
}

struct Norm<'a> {
    g: &'a Tensor<f32>,
    b: &'a Tensor<f32>,
}

impl<'a> Norm<'a> {
    fn load(p: &'a ParamStore<f32>, name: &str) -> Result<Self> {
        Ok(Self {
            g: get(p, &format!("{name}/g"))?,
            b: get(p, &format!("{name}/b"))?,
        })
    }

    fn apply(&self, x: &[f32]) -> Vec<f32> {
        let n = x.len() as f64;
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let is = 1.0 / (var + LN_EPS).sqrt();
        x.iter()
            .zip(self.g.data().iter().zip(self.b.data()))
            .map(|(&v, (&g, &b))| ((v as f64 - mean) * is) as f32 * g + b)
            .collect()
    }
}

struct Attn<'a> {
    q: Linear<'a>,
    k: Linear<'a>,
    v: Linear<'a>,
    o: Linear<'a>,
}

impl<'a> Attn<'a> {
    fn load(p: &'a ParamStore<f32>, name: &str) -> Result<Self> {
        Ok(Self {
            q: Linear::load(p, &format!("{name}/q"))?,
            k: Linear::load(p, &format!("{name}/k"))?,
            v: Linear::load(p, &format!("{name}/v"))?,
            o: Linear::load(p, &format!("{name}/o"))?,
        })
    }

    /// One query row against cached key and value rows.
    fn attend(&self, q: &[f32], keys: &[Vec<f32>], values: &[Vec<f32>], heads: usize) -> Vec<f32> {
        let dh = q.len() / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut cat = vec![0f32; q.len()];
        for h in 0..heads {
            let r = h * dh..(h + 1) * dh;
            let scores: Vec<f32> = keys
                .iter()
                .map(|k| (q[r.clone()].iter().zip(&k[r.clone()]).map(|(a, b)| a * b).sum::<f32>() as f64 * scale) as f32)
                .collect();
            let max = scores.iter().fold(f32::NEG_INFINITY, |m, &s| m.max(s));
            let exps: Vec<f64> = scores.iter().map(|&s| ((s - max) as f64).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (e, v) in exps.iter().zip(values) {
                let a = (e / z) as f32;
                for (c, &x) in cat[r.clone()].iter_mut().zip(&v[r.clone()]) {
                    *c += a * x;
                }
            }
        }
        self.o.apply(&cat)
    }
}

struct Layer<'a> {
    ln1: Norm<'a>,
    self_attn: Attn<'a>,
    ln2: Norm<'a>,
    cross: Attn<'a>,
    ln3: Norm<'a>,
    ffn1: Linear<'a>,
    ffn2: Linear<'a>,
    cross_k: Vec<Vec<f32>>,
    cross_v: Vec<Vec<f32>>,
    self_k: Vec<Vec<f32>>,
    self_v: Vec<Vec<f32>>,
}

fn add_into(x: &mut [f32], y: &[f32]) {
    x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
}

fn relu(mut x: Vec<f32>) -> Vec<f32> {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Incremental decoder over fixed encoder states. Each [`Decoder::step`]
/// consumes the previous frame and yields the next frame and stop logit.
pub struct Decoder<'a> {
    model: &'a Seq2SeqModel,
    prenet1: Linear<'a>,
    prenet2: Linear<'a>,
    prenet_proj: Linear<'a>,
    pe_scale: f32,
    layers: Vec<Layer<'a>>,
    ln: Norm<'a>,
    out_frame: Linear<'a>,
    out_stop: Linear<'a>,
    t: usize,
}

impl<'a> Decoder<'a> {
    /// `states` is the `[n, model_dim]` encoder output.
    pub fn new(model: &'a Seq2SeqModel, p: &'a ParamStore<f32>, states: &Tensor<f32>) -> Result<Self> {
        let mut layers = Vec::new();
        for l in 0..model.cfg.dec_layers {
            let pre = format!("dec/l{l}");
            let cross = Attn::load(p, &format!("{pre}/cross"))?;
            let rows: Vec<&[f32]> = (0..states.rows()).map(|i| states.row(i)).collect();
            layers.push(Layer {
                ln1: Norm::load(p, &format!("{pre}/ln1"))?,
                self_attn: Attn::load(p, &format!("{pre}/self"))?,
                ln2: Norm::load(p, &format!("{pre}/ln2"))?,
                cross_k: rows.iter().map(|r| cross.k.apply(r)).collect(),
                cross_v: rows.iter().map(|r| cross.v.apply(r)).collect(),
                cross,
                ln3: Norm::load(p, &format!("{pre}/ln3"))?,
                ffn1: Linear::load(p, &format!("{pre}/ffn1"))?,
                ffn2: Linear::load(p, &format!("{pre}/ffn2"))?,
                self_k: Vec::new(),
                self_v: Vec::new(),
            });
        }
        Ok(Self {
            model,
            prenet1: Linear::load(p, "dec/prenet1")?,
            prenet2: Linear::load(p, "dec/prenet2")?,
            prenet_proj: Linear::load(p, "dec/prenet_proj")?,
            pe_scale: get(p, "dec/pe_scale")?.data()[0],
            layers,
            ln: Norm::load(p, "dec/ln")?,
            out_frame: Linear::load(p, "out/frame")?,
            out_stop: Linear::load(p, "out/stop")?,
            t: 0,
        })
    }

    pub fn step(&mut self, prev: &[f32]) -> (Vec<f32>, f32) {
        let heads = self.model.cfg.heads;
        let d = self.model.cfg.model_dim;
        let h = relu(self.prenet1.apply(prev));
        let h = relu(self.prenet2.apply(&h));
        let mut x = self.prenet_proj.apply(&h);
        for (j, xi) in x.iter_mut().enumerate() {
            *xi += self.pe_scale * position_value(self.t, j, d) as f32;
        }
        for l in &mut self.layers {
            let h = l.ln1.apply(&x);
            l.self_k.push(l.self_attn.k.apply(&h));
            l.self_v.push(l.self_attn.v.apply(&h));
            let a = l.self_attn.attend(&l.self_attn.q.apply(&h), &l.self_k, &l.self_v, heads);
            add_into(&mut x, &a);
            let h = l.ln2.apply(&x);
            let a = l.cross.attend(&l.cross.q.apply(&h), &l.cross_k, &l.cross_v, heads);
            add_into(&mut x, &a);
            let h = l.ln3.apply(&x);
            let f = l.ffn2.apply(&relu(l.ffn1.apply(&h)));
            add_into(&mut x, &f);
        }
        let h = self.ln.apply(&x);
        self.t += 1;
        (self.out_frame.apply(&h), self.out_stop.apply(&h)[0])
    }
}

impl Seq2SeqModel {
    /// Encoder states for inference, `[n, model_dim]`.
    pub fn encoder_states(&self, p: &ParamStore<f32>, tokens: &Tokens) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let st = self.encode(&mut g, p, tokens)?;
        Ok(g.value(st.h).clone())
    }

    /// Free-running decoding. Stops after the first frame whose stop
    /// probability exceeds `stop_threshold`, or at `max_len` frames with the
    /// `truncated` flag set.
    pub fn infer(&self, p: &ParamStore<f32>, tokens: &Tokens, max_len: usize, stop_threshold: f64) -> Result<AcousticSeq> {
        if max_len == 0 {
            return Err(contract("max_len must be positive"));
        }
        let states = self.encoder_states(p, tokens)?;
        let mut dec = Decoder::new(self, p, &states)?;
        let dim = self.cfg.feat_dim;
        let mut prev = vec![0f32; dim];
        let mut out = Vec::new();
        let mut stopped = false;
        for _ in 0..max_len {
            let (frame, stop) = dec.step(&prev);
            if !frame.iter().all(|v| v.is_finite()) || !stop.is_finite() {
                return Err(crate::Error::Numeric("decoder produced a non-finite frame".into()));
            }
            out.extend_from_slice(&frame);
            prev = frame;
            if 1.0 / (1.0 + (-stop as f64).exp()) > stop_threshold {
                stopped = true;
                break;
            }
        }
        let mut seq = AcousticSeq::new(dim, out)?;
        seq.truncated = !stopped;
        Ok(seq)
    }

    /// [`Seq2SeqModel::infer`] with the configured threshold and
    /// `max_len_factor ×` tokens as the length cap.
    pub fn convert(&self, p: &ParamStore<f32>, tokens: &Tokens) -> Result<AcousticSeq> {
        self.infer(p, tokens, self.cfg.max_len_factor * tokens.len(), self.cfg.stop_threshold)
    }
}
