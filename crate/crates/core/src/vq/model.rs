use super::config::VqConfig;
use crate::codec::IndexSeq;
use crate::dsp;
use crate::error::{contract, Result};
use crate::tensor::{init, Graph, ParamStore, Real, Rng, Tensor, Var};

const LN_EPS: f64 = 1e-5;
const POWER_FLOOR: f64 = 1e-8;
/// Brings log power (about -18..5) to roughly unit range.
const LOG_POWER_SCALE: f64 = 0.2;
/// Logit weights start uniform within this multiple of the fan-in bound.
const LOGIT_INIT_GAIN: f64 = 4.0;

/// Gumbel draws for every group, `frames × V` each, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GumbelNoise {
    pub frames: usize,
    pub codewords: usize,
    pub groups: Vec<Vec<f64>>,
}

impl GumbelNoise {
    pub fn sample(frames: usize, groups: usize, codewords: usize, rng: &mut Rng) -> Self {
        Self {
            frames,
            codewords,
            groups: (0..groups)
                .map(|_| (0..frames * codewords).map(|_| rng.gumbel()).collect())
                .collect(),
        }
    }

    pub fn zeros(frames: usize, groups: usize, codewords: usize) -> Self {
        Self {
            frames,
            codewords,
            groups: vec![vec![0.0; frames * codewords]; groups],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum QuantMode<'a> {
    /// Noise-free argmax of the logits.
    Eval,
    /// Hard codeword in the forward pass, Gumbel-softmax gradient in the backward pass.
    Train { tau: f64, noise: &'a GumbelNoise },
    /// Forward pass uses the soft Gumbel-softmax mixture itself. Smooth, so it
    /// is what finite-difference checks of the encoder path run against.
    Relaxed { tau: f64, noise: &'a GumbelNoise },
}

pub struct QuantizerOutput {
    /// `[frames, d]`, group slices are the selected codewords.
    pub zhat: Var,
    /// Row-major `frames × G`.
    pub indices: Vec<u32>,
    /// Per-group `[frames, V]` probabilities; empty in eval mode.
    pub soft_probs: Vec<Var>,
}

/// Uniform negatives from the same sequence, excluding the positive position.
/// `idx[k-1][n][i]` is the frame standing in for `z_{i+k}` as negative `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Negatives {
    pub idx: Vec<Vec<Vec<usize>>>,
}

impl Negatives {
    pub fn sample(frames: usize, steps: usize, count: usize, rng: &mut Rng) -> Self {
        let idx = (1..=steps)
            .map(|k| {
                (0..count)
                    .map(|_| {
                        (0..frames.saturating_sub(k))
                            .map(|i| {
                                let j = rng.below(frames - 1);
                                if j >= i + k {
                                    j + 1
                                } else {
                                    j
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { idx }
    }
}

/// First index of the maximum; ties go to the lowest index.
pub fn argmax(row: &[impl Real]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Convolutional encoder, grouped Gumbel-softmax quantizer, causal aggregator
/// and the K-step contrastive head.
#[derive(Clone, Debug, PartialEq)]
pub struct VqModel {
    pub cfg: VqConfig,
}

impl VqModel {
    pub fn new(cfg: VqConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn group_dim(&self) -> usize {
        self.cfg.dim() / self.cfg.quantizer.groups
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamStore<f32> {
        let mut p = ParamStore::new();
        let mut c_in = self.cfg.encoder.input_dim();
        for (l, layer) in self.cfg.encoder.layers.iter().enumerate() {
            let fan_in = layer.kernel * c_in;
            p.insert(&format!("enc/conv{l}/w"), init::fan_in_uniform(&[layer.kernel, c_in, layer.channels], fan_in, rng));
            p.insert(&format!("enc/conv{l}/b"), init::fan_in_uniform(&[layer.channels], fan_in, rng));
            c_in = layer.channels;
        }
        let (gd, v) = (self.group_dim(), self.cfg.quantizer.codewords);
        for g in 0..self.cfg.quantizer.groups {
            let a = LOGIT_INIT_GAIN / (gd as f64).sqrt();
            p.insert(&format!("q/logits{g}/w"), init::uniform(&[gd, v], a, rng));
            p.insert(&format!("q/logits{g}/b"), Tensor::zeros([v]));
        }
        p.insert("q/codebook", init::normal(&[v, gd], 1.0, rng));
        let mut c_in = self.cfg.dim();
        for (l, &(ch, k)) in self.cfg.aggregator.layers.iter().enumerate() {
            p.insert(&format!("agg/conv{l}/w"), init::fan_in_uniform(&[k, c_in, ch], k * c_in, rng));
            p.insert(&format!("agg/conv{l}/b"), Tensor::zeros([ch]));
            c_in = ch;
        }
        let (dz, dc) = (self.cfg.dim(), self.cfg.context_dim());
        for k in 1..=self.cfg.contrastive.steps {
            p.insert(&format!("pred/w{k}"), init::fan_in_uniform(&[dz, dc], dc, rng));
        }
        p
    }

    /// Maps raw samples to latent frames `[frames, d]`.
    ///
    /// The signal is scaled to unit RMS, framed into scaled log power spectra,
    /// and passed through the conv stack (ReLU and layer norm between layers).
    pub fn encode<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, signal: &[f32]) -> Result<Var> {
        let enc = &self.cfg.encoder;
        let rf = enc.receptive_field();
        if enc.frames(signal.len()) == 0 {
            return Err(contract(format!(
                "signal of {} samples yields no frames (receptive field {rf})",
                signal.len()
            )));
        }
        let rms = (signal.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / signal.len() as f64).sqrt();
        let scale = if rms > 1e-6 { 1.0 / rms } else { 1.0 };
        let scaled: Vec<f32> = signal.iter().map(|&v| (v as f64 * scale) as f32).collect();
        let spectra = dsp::power_frames(&scaled, enc.span, enc.hop, enc.fft);
        let data = spectra
            .iter()
            .flatten()
            .map(|&e| T::from_f64(e.max(POWER_FLOOR).ln() * LOG_POWER_SCALE))
            .collect();
        let mut h = g.constant(Tensor::new(vec![spectra.len(), enc.input_dim()], data)?);
        let last = enc.layers.len() - 1;
        for (l, layer) in enc.layers.iter().enumerate() {
            let w = g.param(p, &format!("enc/conv{l}/w"))?;
            let b = g.param(p, &format!("enc/conv{l}/b"))?;
            h = g.conv1d(h, w, layer.stride, 0, 0)?;
            h = g.add(h, b)?;
            if l < last {
                h = g.relu(h)?;
                h = g.layer_norm(h, LN_EPS)?;
            }
        }
        Ok(h)
    }

    pub fn quantize<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, z: Var, mode: QuantMode<'_>) -> Result<QuantizerOutput> {
        let (groups, v, gd) = (self.cfg.quantizer.groups, self.cfg.quantizer.codewords, self.group_dim());
        let frames = g.shape(z)[0];
        if g.shape(z)[1] != self.cfg.dim() {
            return Err(contract(format!("latent dim {} != {}", g.shape(z)[1], self.cfg.dim())));
        }
        if let QuantMode::Train { tau, noise } | QuantMode::Relaxed { tau, noise } = mode {
            if tau <= 0.0 || !tau.is_finite() {
                return Err(contract(format!("temperature must be positive, got {tau}")));
            }
            if noise.frames != frames || noise.codewords != v || noise.groups.len() != groups {
                return Err(contract("Gumbel noise does not match the latent sequence"));
            }
        }
        let codebook = g.param(p, "q/codebook")?;
        let mut indices = vec![0u32; frames * groups];
        let mut slices = Vec::with_capacity(groups);
        let mut soft_probs = Vec::new();
        for gi in 0..groups {
            let zg = g.slice(z, 1, gi * gd, (gi + 1) * gd)?;
            let w = g.param(p, &format!("q/logits{gi}/w"))?;
            let b = g.param(p, &format!("q/logits{gi}/b"))?;
            let logits = g.linear(zg, w, Some(b))?;
            let zhat_g = match mode {
                QuantMode::Eval => {
                    let ids: Vec<usize> = g.value(logits).data().chunks(v).map(argmax).collect();
                    for (t, &i) in ids.iter().enumerate() {
                        indices[t * groups + gi] = i as u32;
                    }
                    g.gather(codebook, &ids)?
                }
                QuantMode::Train { tau, noise } | QuantMode::Relaxed { tau, noise } => {
                    let nz = Tensor::new(vec![frames, v], noise.groups[gi].iter().map(|&x| T::from_f64(x)).collect())?;
                    let nz = g.constant(nz);
                    let noisy = g.add(logits, nz)?;
                    let noisy = g.scale(noisy, 1.0 / tau)?;
                    let probs = g.softmax(noisy)?;
                    soft_probs.push(probs);
                    let pv = g.value(probs).data().to_vec();
                    for (t, row) in pv.chunks(v).enumerate() {
                        indices[t * groups + gi] = argmax(row) as u32;
                    }
                    let weights = if matches!(mode, QuantMode::Train { .. }) {
                        // value = one-hot, gradient = d probs
                        let mut delta = vec![T::zero(); frames * v];
                        for t in 0..frames {
                            let j = indices[t * groups + gi] as usize;
                            for c in 0..v {
                                let hard = if c == j { T::one() } else { T::zero() };
                                delta[t * v + c] = hard - pv[t * v + c];
                            }
                        }
                        let delta = g.constant(Tensor::new(vec![frames, v], delta)?);
                        g.add(probs, delta)?
                    } else {
                        probs
                    };
                    g.matmul(weights, codebook)?
                }
            };
            slices.push(zhat_g);
        }
        let zhat = if slices.len() == 1 { slices[0] } else { g.concat(&slices, 1)? };
        Ok(QuantizerOutput {
            zhat,
            indices,
            soft_probs,
        })
    }

    /// Causal convolution stack; output frame `t` sees only inputs `<= t`.
    pub fn aggregate<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, zhat: Var) -> Result<Var> {
        if g.shape(zhat)[0] == 0 {
            return Err(contract("aggregate needs at least one frame"));
        }
        let mut h = zhat;
        let last = self.cfg.aggregator.layers.len().saturating_sub(1);
        for (l, &(_, k)) in self.cfg.aggregator.layers.iter().enumerate() {
            let w = g.param(p, &format!("agg/conv{l}/w"))?;
            let b = g.param(p, &format!("agg/conv{l}/b"))?;
            h = g.conv1d(h, w, 1, k - 1, 0)?;
            h = g.add(h, b)?;
            if l < last {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    /// `Σ_k -Σ_i [log σ(z_{i+k}ᵀ W_k c_i) + (λ/N) Σ_n log σ(-z̃_nᵀ W_k c_i)]`.
    pub fn contrastive_loss<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, c: Var, z: Var, negs: &Negatives) -> Result<Var> {
        let cc = &self.cfg.contrastive;
        let frames = g.shape(z)[0];
        if g.shape(c)[0] != frames {
            return Err(contract("context and latent sequences differ in length"));
        }
        if frames <= cc.steps {
            return Err(contract(format!("sequence of {frames} frames is too short for K={}", cc.steps)));
        }
        if negs.idx.len() != cc.steps || negs.idx.iter().any(|n| n.len() != cc.negatives) {
            return Err(contract("negative samples do not match the contrastive config"));
        }
        let neg_weight = cc.lambda / cc.negatives as f64;
        let mut terms = Vec::new();
        for k in 1..=cc.steps {
            let ck = g.slice(c, 0, 0, frames - k)?;
            let wk = g.param(p, &format!("pred/w{k}"))?;
            let pred = g.matmul_nt(ck, wk)?;
            let zpos = g.slice(z, 0, k, frames)?;
            let pos = g.row_dot(pred, zpos)?;
            let lp = g.log_sigmoid(pos)?;
            let lp = g.sum(lp)?;
            terms.push(g.scale(lp, -1.0)?);
            for ids in &negs.idx[k - 1] {
                let zn = g.gather(z, ids)?;
                let s = g.row_dot(pred, zn)?;
                let s = g.scale(s, -1.0)?;
                let ln = g.log_sigmoid(s)?;
                let ln = g.sum(ln)?;
                terms.push(g.scale(ln, -neg_weight)?);
            }
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok(total)
    }

    /// Full training objective for one sequence.
    pub fn loss<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        signal: &[f32],
        mode: QuantMode<'_>,
        negs: &Negatives,
    ) -> Result<(Var, QuantizerOutput)> {
        let z = self.encode(g, p, signal)?;
        let q = self.quantize(g, p, z, mode)?;
        let c = self.aggregate(g, p, q.zhat)?;
        let l = self.contrastive_loss(g, p, c, z, negs)?;
        Ok((l, q))
    }

    /// Eval-mode indices, one G-tuple per encoder frame. The aggregator is not used.
    pub fn extract_indices(&self, p: &ParamStore<f32>, signal: &[f32]) -> Result<IndexSeq> {
        let mut g = Graph::new();
        let z = self.encode(&mut g, p, signal)?;
        let q = self.quantize(&mut g, p, z, QuantMode::Eval)?;
        IndexSeq::new(self.cfg.quantizer.groups, self.cfg.quantizer.codewords, q.indices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vq::config::{AggregatorConfig, ContrastiveConfig, ConvLayer, EncoderConfig, QuantizerConfig};

    fn small_cfg() -> VqConfig {
        let l = |channels| ConvLayer {
            channels,
            kernel: 1,
            stride: 1,
        };
        VqConfig {
            encoder: EncoderConfig {
                layers: vec![l(8), l(8)],
                ..EncoderConfig::default()
            },
            quantizer: QuantizerConfig { groups: 2, codewords: 4 },
            aggregator: AggregatorConfig {
                layers: vec![(6, 3), (6, 2)],
            },
            contrastive: ContrastiveConfig {
                steps: 2,
                negatives: 3,
                ..ContrastiveConfig::default()
            },
            ..VqConfig::default()
        }
    }

    fn signal(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = Rng::new(seed);
        (0..len).map(|_| rng.normal() as f32).collect()
    }

    #[test]
    fn encode_shapes_and_errors() {
        let m = VqModel::new(VqConfig::default()).unwrap();
        let p = m.init_params(&mut Rng::new(1));
        let mut g = Graph::new();
        let z = m.encode(&mut g, &p, &signal(100, 2)).unwrap();
        assert_eq!(g.shape(z), &[8, 16]);
        let z = m.encode(&mut g, &p, &signal(30, 2)).unwrap();
        assert_eq!(g.shape(z), &[1, 16]);
        assert!(m.encode(&mut g, &p, &signal(29, 2)).is_err());
    }

    #[test]
    fn zero_signal_gives_equal_frames() {
        let m = VqModel::new(VqConfig::default()).unwrap();
        let p = m.init_params(&mut Rng::new(1));
        let mut g = Graph::new();
        let z = m.encode(&mut g, &p, &[0.0; 90]).unwrap();
        let z = g.value(z);
        for t in 1..z.rows() {
            assert_eq!(z.row(t), z.row(0));
        }
    }

    #[test]
    fn eval_mode_picks_argmax_codeword() {
        let m = VqModel::new(small_cfg()).unwrap();
        let p = m.init_params(&mut Rng::new(3));
        let mut g = Graph::new();
        let z = m.encode(&mut g, &p, &signal(140, 4)).unwrap();
        let q = m.quantize(&mut g, &p, z, QuantMode::Eval).unwrap();
        assert!(q.soft_probs.is_empty());
        let zv = g.value(z).clone();
        let zhat = g.value(q.zhat).clone();
        let cb = p.get("q/codebook").unwrap();
        let gd = m.group_dim();
        for t in 0..zv.rows() {
            for gi in 0..2 {
                let w = p.get(&format!("q/logits{gi}/w")).unwrap();
                let b = p.get(&format!("q/logits{gi}/b")).unwrap();
                let logits: Vec<f32> = (0..4)
                    .map(|j| b.data()[j] + (0..gd).map(|i| zv.row(t)[gi * gd + i] * w.data()[i * 4 + j]).sum::<f32>())
                    .collect();
                let j = q.indices[t * 2 + gi] as usize;
                assert_eq!(j, argmax(&logits));
                assert_eq!(&zhat.row(t)[gi * gd..(gi + 1) * gd], cb.row(j));
            }
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let cfg = VqConfig {
            quantizer: QuantizerConfig { groups: 2, codewords: 8 },
            ..VqConfig::default()
        };
        let m = VqModel::new(cfg).unwrap();
        let p = m.init_params(&mut Rng::new(5));
        let mut g = Graph::new();
        let z = m.encode(&mut g, &p, &signal(120, 6)).unwrap();
        let noise = GumbelNoise::sample(10, 2, 8, &mut Rng::new(7));
        let q = m.quantize(&mut g, &p, z, QuantMode::Train { tau: 1e6, noise: &noise }).unwrap();
        for sp in &q.soft_probs {
            assert!(g.value(*sp).data().iter().all(|&v| (v - 0.125).abs() < 1e-3));
        }
    }

    #[test]
    fn train_mode_consistency() {
        let m = VqModel::new(small_cfg()).unwrap();
        let p = m.init_params(&mut Rng::new(8));
        let mut g = Graph::new();
        let z = m.encode(&mut g, &p, &signal(140, 9)).unwrap();
        let noise = GumbelNoise::sample(12, 2, 4, &mut Rng::new(10));
        let q = m.quantize(&mut g, &p, z, QuantMode::Train { tau: 0.7, noise: &noise }).unwrap();
        let cb = p.get("q/codebook").unwrap();
        let zhat = g.value(q.zhat).clone();
        for (gi, sp) in q.soft_probs.iter().enumerate() {
            for (t, row) in g.value(*sp).data().chunks(4).enumerate() {
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
                let j = q.indices[t * 2 + gi] as usize;
                assert_eq!(j, argmax(row));
                let got = &zhat.row(t)[gi * 4..(gi + 1) * 4];
                for (a, b) in got.iter().zip(cb.row(j)) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn bad_temperature_and_noise() {
        let m = VqModel::new(small_cfg()).unwrap();
        let p = m.init_params(&mut Rng::new(8));
        let mut g = Graph::new();
        let z = m.encode(&mut g, &p, &signal(140, 9)).unwrap();
        let noise = GumbelNoise::zeros(12, 2, 4);
        for tau in [0.0, -1.0, f64::NAN] {
            assert!(m.quantize(&mut g, &p, z, QuantMode::Train { tau, noise: &noise }).is_err());
        }
        let short = GumbelNoise::zeros(11, 2, 4);
        assert!(m.quantize(&mut g, &p, z, QuantMode::Relaxed { tau: 1.0, noise: &short }).is_err());
    }

    #[test]
    fn codebook_is_shared_across_groups() {
        let m = VqModel::new(small_cfg()).unwrap();
        let mut p = m.init_params(&mut Rng::new(11));
        let sig = signal(140, 12);
        let run = |p: &ParamStore<f32>| {
            let mut g = Graph::new();
            let z = m.encode(&mut g, p, &sig).unwrap();
            let q = m.quantize(&mut g, p, z, QuantMode::Eval).unwrap();
            (q.indices.clone(), g.value(q.zhat).clone())
        };
        let (idx, before) = run(&p);
        let j = idx[0] as usize;
        p.get_mut("q/codebook").unwrap().data_mut()[j * 4] += 1.0;
        let (idx2, after) = run(&p);
        assert_eq!(idx, idx2);
        for t in 0..before.rows() {
            for gi in 0..2 {
                let changed = before.row(t)[gi * 4] != after.row(t)[gi * 4];
                assert_eq!(changed, idx[t * 2 + gi] as usize == j);
            }
        }
    }

    #[test]
    fn aggregator_is_causal() {
        let m = VqModel::new(VqConfig::default()).unwrap();
        let p = m.init_params(&mut Rng::new(13));
        let full = crate::tensor::init::normal::<f32>(&[10, 16], 1.0, &mut Rng::new(14));
        let mut g = Graph::new();
        let x = g.constant(full.clone());
        let c = m.aggregate(&mut g, &p, x).unwrap();
        let c_full = g.value(c).clone();
        for t in 1..=10 {
            let prefix = Tensor::new(vec![t, 16], full.data()[..t * 16].to_vec()).unwrap();
            let x = g.constant(prefix);
            let c = m.aggregate(&mut g, &p, x).unwrap();
            assert_eq!(g.value(c).data(), &c_full.data()[..t * 16]);
        }
        // impulse at frame 4 moves only outputs >= 4
        let mut bumped = full.clone();
        bumped.data_mut()[4 * 16 + 3] += 5.0;
        let x = g.constant(bumped);
        let c = m.aggregate(&mut g, &p, x).unwrap();
        let c_b = g.value(c);
        for t in 0..10 {
            let same = c_b.row(t) == c_full.row(t);
            if t < 4 {
                assert!(same, "frame {t} changed");
            }
        }
        assert_ne!(c_b.row(4), c_full.row(4));
    }

    #[test]
    fn single_frame_aggregate() {
        let m = VqModel::new(VqConfig::default()).unwrap();
        let p = m.init_params(&mut Rng::new(13));
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![1, 16], 0.5f32));
        let c = m.aggregate(&mut g, &p, x).unwrap();
        assert_eq!(g.shape(c), &[1, 16]);
    }

    #[test]
    fn loss_needs_more_frames_than_steps() {
        let m = VqModel::new(small_cfg()).unwrap();
        let p = m.init_params(&mut Rng::new(15));
        // 2 frames, K = 2
        let sig = signal(40, 16);
        let negs = Negatives::sample(2, 2, 3, &mut Rng::new(1));
        let mut g = Graph::new();
        assert!(m.loss(&mut g, &p, &sig, QuantMode::Eval, &negs).is_err());
    }

    #[test]
    fn negatives_exclude_positive() {
        let n = Negatives::sample(9, 3, 20, &mut Rng::new(17));
        for (k, per_k) in n.idx.iter().enumerate() {
            for draw in per_k {
                assert_eq!(draw.len(), 9 - (k + 1));
                for (i, &j) in draw.iter().enumerate() {
                    assert!(j < 9 && j != i + k + 1);
                }
            }
        }
    }

    #[test]
    fn loss_bounded_below_by_zero() {
        let m = VqModel::new(small_cfg()).unwrap();
        let p = m.init_params(&mut Rng::new(18));
        let sig = signal(140, 19);
        let negs = Negatives::sample(12, 2, 3, &mut Rng::new(20));
        let mut g = Graph::new();
        let (l, _) = m.loss(&mut g, &p, &sig, QuantMode::Eval, &negs).unwrap();
        assert!(g.value(l).item() > 0.0);
    }

    #[test]
    fn extract_is_deterministic_and_frame_aligned() {
        let m = VqModel::new(VqConfig::default()).unwrap();
        let p = m.init_params(&mut Rng::new(21));
        let sig = signal(333, 22);
        let a = m.extract_indices(&p, &sig).unwrap();
        let b = m.extract_indices(&p, &sig).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), m.cfg.encoder.frames(sig.len()));
        assert_eq!(a.groups(), 2);
    }
}
