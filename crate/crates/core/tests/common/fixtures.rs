//! Small models and inputs shared by the oracle suites.

use super::lcg_values;
use vqvc::acoustic::AcousticSeq;
use vqvc::codec::IndexSeq;
use vqvc::seq2seq::{FrontEnd, Seq2SeqConfig, Seq2SeqModel};
use vqvc::tensor::{ParamStore, Rng, Tensor};
use vqvc::vq::{AggregatorConfig, ContrastiveConfig, ConvLayer, EncoderConfig, QuantizerConfig, VqConfig, VqModel};

pub fn tiny_vq(v: usize, k: usize) -> VqModel {
    let l = |channels| ConvLayer {
        channels,
        kernel: 1,
        stride: 1,
    };
    VqModel::new(VqConfig {
        encoder: EncoderConfig {
            fft: 32,
            layers: vec![l(6), l(8)],
            ..EncoderConfig::default()
        },
        quantizer: QuantizerConfig { groups: 2, codewords: v },
        aggregator: AggregatorConfig {
            layers: vec![(5, 3), (6, 2)],
        },
        contrastive: ContrastiveConfig {
            steps: k,
            negatives: 3,
            lambda: 2.5,
            ..ContrastiveConfig::default()
        },
        ..VqConfig::default()
    })
    .unwrap()
}

/// White noise long enough for exactly `frames` encoder frames.
pub fn signal(frames: usize, seed: u64) -> Vec<f32> {
    let mut rng = Rng::new(seed);
    (0..30 + 10 * (frames - 1)).map(|_| rng.normal() as f32).collect()
}

pub fn vq_params(m: &VqModel, seed: u64) -> ParamStore<f64> {
    m.init_params(&mut Rng::new(seed)).cast()
}

pub fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn small_seq2seq(front_end: FrontEnd) -> Seq2SeqModel {
    Seq2SeqModel::new(Seq2SeqConfig {
        groups: 2,
        codewords: 4,
        front_end,
        emb_dim: 4,
        model_dim: 16,
        heads: 2,
        ffn_dim: 24,
        enc_layers: 2,
        dec_layers: 2,
        feat_dim: 6,
        prenet_dim: 12,
        ..Seq2SeqConfig::default()
    })
    .unwrap()
}

pub fn index_seq(n: usize, v: usize, seed: u64) -> IndexSeq {
    let data = lcg_values(seed, 2 * n).iter().map(|x| ((x + 1.0) / 2.0 * v as f64) as u32 % v as u32).collect();
    IndexSeq::new(2, v, data).unwrap()
}

pub fn frames(m: usize, dim: usize, seed: u64) -> AcousticSeq {
    AcousticSeq::new(dim, lcg_values(seed, m * dim).iter().map(|&x| x as f32).collect()).unwrap()
}

/// Parameters perturbed away from their init so that layer-norm gains,
/// biases and position scales carry non-trivial gradients.
pub fn perturbed(model: &Seq2SeqModel, seed: u64) -> ParamStore<f64> {
    let mut p = model.init_params(&mut Rng::new(seed)).cast::<f64>();
    let names: Vec<String> = p.names().map(str::to_string).collect();
    for (k, name) in names.iter().enumerate() {
        let t = p.get_mut(name).unwrap();
        let noise = lcg_values(seed * 1000 + k as u64, t.numel());
        for (v, n) in t.data_mut().iter_mut().zip(noise) {
            *v += 0.1 * n;
        }
    }
    p
}
