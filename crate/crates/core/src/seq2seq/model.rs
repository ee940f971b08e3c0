use super::config::{FrontEnd, Seq2SeqConfig};
use crate::acoustic::AcousticSeq;
use crate::codec::{joint_id, separate, IndexSeq};
use crate::error::{contract, Result};
use crate::tensor::{init, Graph, ParamStore, Real, Rng, Tensor, Var};

pub(crate) const LN_EPS: f64 = 1e-5;
/// Additive attention mask for disallowed positions.
const MASKED: f64 = -1e9;

/// Table rows per input token, one list per lookup (`G` lists in separate
/// mode, one in joint mode).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokens {
    pub ids: Vec<Vec<usize>>,
}

impl Tokens {
    pub fn len(&self) -> usize {
        self.ids[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Encoder output `h_{1:n}` plus the self-attention maps of every layer and head.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    pub h: Var,
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct DecoderOutput {
    /// `[m, feat_dim]`
    pub frames: Var,
    /// `[m, 1]` stop logits.
    pub stop: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub l1: Var,
    pub bce: Var,
}

/// Entry `(pos, j)` of the sinusoidal position table of width `d`.
pub fn position_value(pos: usize, j: usize, d: usize) -> f64 {
    let a = pos as f64 / 10000f64.powf((2 * (j / 2)) as f64 / d as f64);
    if j.is_multiple_of(2) {
        a.sin()
    } else {
        a.cos()
    }
}

/// Sinusoidal position table, `[n, d]`.
pub fn positional_encoding<T: Real>(n: usize, d: usize) -> Tensor<T> {
    let data = (0..n * d).map(|i| T::from_f64(position_value(i / d, i % d, d))).collect();
    Tensor::new(vec![n, d], data).expect("length matches shape")
}

fn causal_mask<T: Real>(m: usize) -> Tensor<T> {
    let data = (0..m * m)
        .map(|i| if i % m > i / m { T::from_f64(MASKED) } else { T::zero() })
        .collect();
    Tensor::new(vec![m, m], data).expect("length matches shape")
}

/// Transformer encoder-decoder from index tokens to acoustic frames with a
/// stop-token head. Pre-layer-norm residual blocks throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel {
    pub cfg: Seq2SeqConfig,
}

impl Seq2SeqModel {
    pub fn new(cfg: Seq2SeqConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamStore<f32> {
        let c = &self.cfg;
        let d = c.model_dim;
        let mut p = ParamStore::new();
        let linear = |p: &mut ParamStore<f32>, name: &str, i: usize, o: usize, rng: &mut Rng| {
            p.insert(&format!("{name}/w"), init::fan_in_uniform(&[i, o], i, rng));
            p.insert(&format!("{name}/b"), Tensor::zeros([o]));
        };
        let norm = |p: &mut ParamStore<f32>, name: &str| {
            p.insert(&format!("{name}/g"), Tensor::full([d], 1.0));
            p.insert(&format!("{name}/b"), Tensor::zeros([d]));
        };
        p.insert("fe/table", init::normal(&[c.vocab_rows(), c.table_dim()], 1.0, rng));
        if c.has_projection() {
            linear(&mut p, "fe/proj", c.groups * c.emb_dim, d, rng);
        }
        p.insert("enc/pe_scale", Tensor::full([1], 1.0));
        p.insert("dec/pe_scale", Tensor::full([1], 1.0));
        for l in 0..c.enc_layers {
            let pre = format!("enc/l{l}");
            norm(&mut p, &format!("{pre}/ln1"));
            for m in ["q", "k", "v", "o"] {
                linear(&mut p, &format!("{pre}/attn/{m}"), d, d, rng);
            }
            norm(&mut p, &format!("{pre}/ln2"));
            linear(&mut p, &format!("{pre}/ffn1"), d, c.ffn_dim, rng);
            linear(&mut p, &format!("{pre}/ffn2"), c.ffn_dim, d, rng);
        }
        norm(&mut p, "enc/ln");
        linear(&mut p, "dec/prenet1", c.feat_dim, c.prenet_dim, rng);
        linear(&mut p, "dec/prenet2", c.prenet_dim, c.prenet_dim, rng);
        linear(&mut p, "dec/prenet_proj", c.prenet_dim, d, rng);
        for l in 0..c.dec_layers {
            let pre = format!("dec/l{l}");
            norm(&mut p, &format!("{pre}/ln1"));
            for m in ["q", "k", "v", "o"] {
                linear(&mut p, &format!("{pre}/self/{m}"), d, d, rng);
            }
            norm(&mut p, &format!("{pre}/ln2"));
            for m in ["q", "k", "v", "o"] {
                linear(&mut p, &format!("{pre}/cross/{m}"), d, d, rng);
            }
            norm(&mut p, &format!("{pre}/ln3"));
            linear(&mut p, &format!("{pre}/ffn1"), d, c.ffn_dim, rng);
            linear(&mut p, &format!("{pre}/ffn2"), c.ffn_dim, d, rng);
        }
        norm(&mut p, "dec/ln");
        linear(&mut p, "out/frame", d, c.feat_dim, rng);
        linear(&mut p, "out/stop", d, 1, rng);
        p
    }

    /// Table rows for every tuple of `seq`.
    pub fn tokens(&self, seq: &IndexSeq) -> Result<Tokens> {
        let c = &self.cfg;
        if seq.groups() != c.groups || seq.codewords() != c.codewords {
            return Err(contract(format!(
                "index sequence has G={} V={} but the model expects G={} V={}",
                seq.groups(),
                seq.codewords(),
                c.groups,
                c.codewords
            )));
        }
        if seq.is_empty() {
            return Err(contract("cannot encode an empty index sequence"));
        }
        let ids = match c.front_end {
            FrontEnd::Separate => {
                let mut cols = vec![Vec::with_capacity(seq.len()); c.groups];
                for t in seq.tuples() {
                    for (g, id) in separate(t, c.codewords)?.into_iter().enumerate() {
                        cols[g].push(id);
                    }
                }
                cols
            }
            FrontEnd::Joint => vec![seq.tuples().map(|t| joint_id(t, c.codewords)).collect::<Result<_>>()?],
        };
        Ok(Tokens { ids })
    }

    /// Token embeddings at model width, before positions are added.
    pub fn embed_tokens<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, tokens: &Tokens) -> Result<Var> {
        let rows = self.cfg.vocab_rows();
        if tokens.ids.iter().flatten().any(|&i| i >= rows) {
            return Err(contract(format!("token id outside the {rows}-row embedding table")));
        }
        let table = g.param(p, "fe/table")?;
        let parts = tokens
            .ids
            .iter()
            .map(|ids| g.gather(table, ids))
            .collect::<Result<Vec<_>, _>>()?;
        let mut e = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 1)? };
        if self.cfg.has_projection() {
            e = self.linear(g, p, "fe/proj", e)?;
        }
        Ok(e)
    }

    pub fn embed_front_end<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, tokens: &Tokens) -> Result<Var> {
        let e = self.embed_tokens(g, p, tokens)?;
        self.add_positions(g, p, "enc/pe_scale", e)
    }

    pub fn encode_tokens<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, emb: Var) -> Result<EncoderStates> {
        if g.shape(emb)[0] == 0 {
            return Err(contract("encoder input is empty"));
        }
        let mut x = emb;
        let mut attention = Vec::new();
        for l in 0..self.cfg.enc_layers {
            let pre = format!("enc/l{l}");
            let h = self.norm(g, p, &format!("{pre}/ln1"), x)?;
            let (a, maps) = self.attention(g, p, &format!("{pre}/attn"), h, h, None)?;
            attention.extend(maps);
            x = g.add(x, a)?;
            x = self.ffn_block(g, p, &pre, "ln2", x)?;
        }
        let h = self.norm(g, p, "enc/ln", x)?;
        Ok(EncoderStates { h, attention })
    }

    pub fn encode<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, tokens: &Tokens) -> Result<EncoderStates> {
        let e = self.embed_front_end(g, p, tokens)?;
        self.encode_tokens(g, p, e)
    }

    /// Teacher-forced decoder pass. The input at step `t` is target frame
    /// `t-1`, with a zero frame at `t = 0`. `dropout` enables prenet dropout.
    pub fn decode_teacher<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        states: &EncoderStates,
        target: &AcousticSeq,
        dropout: Option<&mut Rng>,
    ) -> Result<DecoderOutput> {
        let c = &self.cfg;
        if target.dim() != c.feat_dim {
            return Err(contract(format!("target frames have dim {} but the model emits {}", target.dim(), c.feat_dim)));
        }
        let m = target.len();
        if m == 0 {
            return Err(contract("target sequence is empty"));
        }
        let mut shifted = vec![T::zero(); c.feat_dim];
        shifted.extend(target.data()[..(m - 1) * c.feat_dim].iter().map(|&v| T::from_f64(v as f64)));
        let inputs = g.constant(Tensor::new(vec![m, c.feat_dim], shifted)?);
        let mut rng = dropout;
        let mut x = self.linear(g, p, "dec/prenet1", inputs)?;
        x = g.relu(x)?;
        x = self.dropout(g, x, rng.as_deref_mut())?;
        x = self.linear(g, p, "dec/prenet2", x)?;
        x = g.relu(x)?;
        x = self.dropout(g, x, rng)?;
        x = self.linear(g, p, "dec/prenet_proj", x)?;
        x = self.add_positions(g, p, "dec/pe_scale", x)?;
        let mask = g.constant(causal_mask(m));
        for l in 0..c.dec_layers {
            let pre = format!("dec/l{l}");
            let h = self.norm(g, p, &format!("{pre}/ln1"), x)?;
            let (a, _) = self.attention(g, p, &format!("{pre}/self"), h, h, Some(mask))?;
            x = g.add(x, a)?;
            let h = self.norm(g, p, &format!("{pre}/ln2"), x)?;
            let (a, _) = self.attention(g, p, &format!("{pre}/cross"), h, states.h, None)?;
            x = g.add(x, a)?;
            x = self.ffn_block(g, p, &pre, "ln3", x)?;
        }
        let h = self.norm(g, p, "dec/ln", x)?;
        let frames = self.linear(g, p, "out/frame", h)?;
        let stop = self.linear(g, p, "out/stop", h)?;
        Ok(DecoderOutput { frames, stop })
    }

    /// `L1(pred, target) + BCE(stop)`, both averaged over frames; positive stop
    /// labels are weighted by `stop_pos_weight`.
    pub fn loss<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        tokens: &Tokens,
        target: &AcousticSeq,
        dropout: Option<&mut Rng>,
    ) -> Result<LossParts> {
        let states = self.encode(g, p, tokens)?;
        let out = self.decode_teacher(g, p, &states, target, dropout)?;
        self.loss_from_output(g, &out, target)
    }

    pub fn loss_from_output<T: Real>(&self, g: &mut Graph<T>, out: &DecoderOutput, target: &AcousticSeq) -> Result<LossParts> {
        let m = target.len();
        let y = g.constant(Tensor::new(
            vec![m, self.cfg.feat_dim],
            target.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
        )?);
        let diff = g.sub(out.frames, y)?;
        let diff = g.abs(diff)?;
        let l1 = g.mean(diff)?;

        let labels = target.stop_labels();
        let w = self.cfg.stop_pos_weight;
        let wpos = g.constant(Tensor::new(vec![m, 1], labels.iter().map(|&y| T::from_f64(w * y as f64)).collect())?);
        let wneg = g.constant(Tensor::new(vec![m, 1], labels.iter().map(|&y| T::from_f64(1.0 - y as f64)).collect())?);
        let lp = g.log_sigmoid(out.stop)?;
        let lp = g.mul(lp, wpos)?;
        let neg = g.scale(out.stop, -1.0)?;
        let ln = g.log_sigmoid(neg)?;
        let ln = g.mul(ln, wneg)?;
        let both = g.add(lp, ln)?;
        let bce = g.sum(both)?;
        let bce = g.scale(bce, -1.0 / m as f64)?;
        let total = g.add(l1, bce)?;
        Ok(LossParts { total, l1, bce })
    }

    pub(crate) fn linear<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, name: &str, x: Var) -> Result<Var> {
        let w = g.param(p, &format!("{name}/w"))?;
        let b = g.param(p, &format!("{name}/b"))?;
        Ok(g.linear(x, w, Some(b))?)
    }

    fn norm<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, name: &str, x: Var) -> Result<Var> {
        let gain = g.param(p, &format!("{name}/g"))?;
        let bias = g.param(p, &format!("{name}/b"))?;
        let h = g.layer_norm(x, LN_EPS)?;
        let h = g.mul(h, gain)?;
        Ok(g.add(h, bias)?)
    }

    fn add_positions<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, scale: &str, x: Var) -> Result<Var> {
        let n = g.shape(x)[0];
        let pe = g.constant(positional_encoding(n, self.cfg.model_dim));
        let alpha = g.param(p, scale)?;
        let pe = g.mul(pe, alpha)?;
        Ok(g.add(x, pe)?)
    }

    fn ffn_block<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, pre: &str, ln: &str, x: Var) -> Result<Var> {
        let h = self.norm(g, p, &format!("{pre}/{ln}"), x)?;
        let h = self.linear(g, p, &format!("{pre}/ffn1"), h)?;
        let h = g.relu(h)?;
        let h = self.linear(g, p, &format!("{pre}/ffn2"), h)?;
        Ok(g.add(x, h)?)
    }

    fn dropout<T: Real>(&self, g: &mut Graph<T>, x: Var, rng: Option<&mut Rng>) -> Result<Var> {
        let rate = self.cfg.prenet_dropout;
        let Some(rng) = rng else { return Ok(x) };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let shape = g.shape(x).to_vec();
        let n = shape.iter().product();
        let mask = (0..n).map(|_| if rng.uniform() < rate { T::zero() } else { keep }).collect();
        let mask = g.constant(Tensor::new(shape, mask)?);
        Ok(g.mul(x, mask)?)
    }

    /// Multi-head scaled dot-product attention of `xq` over `xkv`. Returns the
    /// output projection and the per-head attention maps.
    fn attention<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        name: &str,
        xq: Var,
        xkv: Var,
        mask: Option<Var>,
    ) -> Result<(Var, Vec<Var>)> {
        let dh = self.cfg.head_dim();
        let q = self.linear(g, p, &format!("{name}/q"), xq)?;
        let k = self.linear(g, p, &format!("{name}/k"), xkv)?;
        let v = self.linear(g, p, &format!("{name}/v"), xkv)?;
        let mut heads = Vec::with_capacity(self.cfg.heads);
        let mut maps = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = g.slice(q, 1, lo, hi)?;
            let kh = g.slice(k, 1, lo, hi)?;
            let vh = g.slice(v, 1, lo, hi)?;
            let s = g.matmul_nt(qh, kh)?;
            let mut s = g.scale(s, 1.0 / (dh as f64).sqrt())?;
            if let Some(m) = mask {
                s = g.add(s, m)?;
            }
            let a = g.softmax(s)?;
            maps.push(a);
            heads.push(g.matmul(a, vh)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat(&heads, 1)? };
        Ok((self.linear(g, p, &format!("{name}/o"), cat)?, maps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(front_end: FrontEnd) -> Seq2SeqModel {
        Seq2SeqModel::new(Seq2SeqConfig {
            front_end,
            codewords: 4,
            emb_dim: 4,
            model_dim: 16,
            ffn_dim: 24,
            feat_dim: 3,
            prenet_dim: 8,
            ..Seq2SeqConfig::default()
        })
        .unwrap()
    }

    fn seq(tuples: &[[u32; 2]]) -> IndexSeq {
        IndexSeq::new(2, 4, tuples.iter().flatten().copied().collect()).unwrap()
    }

    fn target(m: usize, seed: u64) -> AcousticSeq {
        let mut rng = Rng::new(seed);
        AcousticSeq::new(3, (0..m * 3).map(|_| rng.normal() as f32).collect()).unwrap()
    }

    fn rows(t: &Tensor<f32>) -> Vec<Vec<f32>> {
        (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
    }

    #[test]
    fn token_ids_per_front_end() {
        let s = seq(&[[1, 3], [0, 2]]);
        assert_eq!(small(FrontEnd::Separate).tokens(&s).unwrap().ids, vec![vec![1, 0], vec![7, 6]]);
        assert_eq!(small(FrontEnd::Joint).tokens(&s).unwrap().ids, vec![vec![7, 2]]);
        let wrong = IndexSeq::new(2, 8, vec![1, 2]).unwrap();
        assert!(small(FrontEnd::Separate).tokens(&wrong).is_err());
    }

    #[test]
    fn table_sizes() {
        let sep = small(FrontEnd::Separate).init_params(&mut Rng::new(0));
        let joint = small(FrontEnd::Joint).init_params(&mut Rng::new(0));
        assert_eq!(sep.get("fe/table").unwrap().shape(), &[8, 4]);
        assert_eq!(joint.get("fe/table").unwrap().shape(), &[16, 16]);
        assert!(sep.contains("fe/proj/w") && !joint.contains("fe/proj/w"));
    }

    #[test]
    fn shared_group_index_shares_embedding_prefix() {
        let m = small(FrontEnd::Separate);
        let p = m.init_params(&mut Rng::new(1));
        let mut g = Graph::new();
        let t = m.tokens(&seq(&[[2, 0], [2, 3]])).unwrap();
        let table = g.param(&p, "fe/table").unwrap();
        let parts: Vec<Var> = t.ids.iter().map(|ids| g.gather(table, ids).unwrap()).collect();
        let cat = g.concat(&parts, 1).unwrap();
        let r = rows(g.value(cat));
        assert_eq!(r[0][..4], r[1][..4]);
        assert_ne!(r[0][4..], r[1][4..]);
    }

    #[test]
    fn encoder_preserves_length_and_uses_positions() {
        let m = small(FrontEnd::Separate);
        let p = m.init_params(&mut Rng::new(2));
        let run = |s: &IndexSeq| {
            let mut g = Graph::new();
            let st = m.encode(&mut g, &p, &m.tokens(s).unwrap()).unwrap();
            for a in &st.attention {
                for r in rows(g.value(*a)) {
                    assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-5);
                }
            }
            rows(g.value(st.h))
        };
        assert_eq!(run(&seq(&[[1, 1]])).len(), 1);
        let a = run(&seq(&[[1, 2], [3, 0], [1, 2]]));
        let b = run(&seq(&[[1, 2], [1, 2], [3, 0]]));
        assert_eq!(a.len(), 3);
        // the same tuple at different positions encodes differently
        assert_ne!(a[0], b[1]);
    }

    #[test]
    fn decoder_is_causal() {
        let m = small(FrontEnd::Joint);
        let p = m.init_params(&mut Rng::new(3));
        let tok = m.tokens(&seq(&[[0, 1], [2, 3]])).unwrap();
        let base = target(6, 4);
        let out = |y: &AcousticSeq| {
            let mut g = Graph::new();
            let st = m.encode(&mut g, &p, &tok).unwrap();
            let o = m.decode_teacher(&mut g, &p, &st, y, None).unwrap();
            (rows(g.value(o.frames)), rows(g.value(o.stop)))
        };
        let (f0, s0) = out(&base);
        for t in 0..6 {
            let mut data = base.data().to_vec();
            data[t * 3 + 1] += 5.0;
            let (f1, s1) = out(&AcousticSeq::new(3, data).unwrap());
            // frame t feeds the prediction at t+1 onwards
            for u in 0..=t {
                assert_eq!(f0[u], f1[u]);
                assert_eq!(s0[u], s1[u]);
            }
            if t + 1 < 6 {
                assert_ne!(f0[t + 1], f1[t + 1]);
            }
        }
    }

    #[test]
    fn dropout_only_when_requested() {
        let m = small(FrontEnd::Separate);
        let p = m.init_params(&mut Rng::new(5));
        let tok = m.tokens(&seq(&[[0, 1], [2, 3]])).unwrap();
        let y = target(4, 6);
        let loss = |rng: Option<&mut Rng>| {
            let mut g = Graph::new();
            let l = m.loss(&mut g, &p, &tok, &y, rng).unwrap();
            g.value(l.total).item()
        };
        assert_eq!(loss(None), loss(None));
        assert_ne!(loss(None), loss(Some(&mut Rng::new(7))));
        assert_eq!(loss(Some(&mut Rng::new(7))), loss(Some(&mut Rng::new(7))));
    }

    #[test]
    fn loss_parts_add_up() {
        let m = small(FrontEnd::Separate);
        let p = m.init_params(&mut Rng::new(8));
        let tok = m.tokens(&seq(&[[3, 1]])).unwrap();
        let y = target(5, 9);
        let mut g = Graph::new();
        let l = m.loss(&mut g, &p, &tok, &y, None).unwrap();
        let (t, a, b) = (g.value(l.total).item(), g.value(l.l1).item(), g.value(l.bce).item());
        assert!((t - a - b).abs() < 1e-6 && a > 0.0 && b > 0.0);
        assert!(m.loss(&mut Graph::new(), &p, &tok, &target(0, 1), None).is_err());
    }

    #[test]
    fn positional_table() {
        let pe: Tensor<f64> = positional_encoding(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.row(2)[0] - 2f64.sin()).abs() < 1e-12);
        assert!((pe.row(2)[3] - (2.0 / 100.0f64).cos()).abs() < 1e-12);
    }
}
