use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::acoustic::AcousticSeq;
use crate::codec::{vocab_stats, IndexSeq, Postprocess};
use crate::error::{contract, Result};
use crate::metrics::{conversion_score, error_rate, SymbolTemplates};
use crate::seq2seq::{train_seq2seq, Pair, Seq2SeqModel, Seq2SeqTraining};
use crate::synth::{Corpus, Split, Utterance, ALPHABET};
use crate::tensor::{ParamStore, Rng};
use crate::vq::{pretrain_quantizer, QuantizerTraining, VqModel};

/// A trained feature extractor shared by every downstream cell.
#[derive(Clone, Debug)]
pub struct Quantizer {
    pub model: VqModel,
    pub params: ParamStore<f32>,
}

impl Quantizer {
    pub fn indices(&self, signal: &[f32]) -> Result<IndexSeq> {
        self.model.extract_indices(&self.params, signal)
    }
}

pub fn probe_signals(corpus: &Corpus) -> Vec<&[f32]> {
    corpus.split(Split::TargetValid).map(|u| u.synth.signal.as_slice()).collect()
}

pub fn train_quantizer(cfg: &RunConfig, corpus: &Corpus) -> Result<(Quantizer, QuantizerTraining)> {
    let model = VqModel::new(cfg.quantizer.clone())?;
    let signals: Vec<&[f32]> = corpus.split(Split::Quantizer).map(|u| u.synth.signal.as_slice()).collect();
    let (params, log) = pretrain_quantizer(&model, &signals, &probe_signals(corpus), cfg.seed, cfg.quantizer_log_every)?;
    Ok((Quantizer { model, params }, log))
}

/// Pairs postprocessed token sequences with target features.
pub fn make_pairs(model: &Seq2SeqModel, post: Postprocess, items: &[(&str, &IndexSeq, &AcousticSeq)]) -> Result<Vec<Pair>> {
    items
        .iter()
        .map(|(id, idx, target)| {
            Ok(Pair {
                id: id.to_string(),
                tokens: model.tokens(&post.apply(idx)?)?,
                target: (*target).clone(),
            })
        })
        .collect()
}

/// Frame-level indices for a set of utterances.
pub fn extract<'a>(q: &Quantizer, utts: impl IntoIterator<Item = &'a Utterance>) -> Result<Vec<(&'a Utterance, IndexSeq)>> {
    utts.into_iter().map(|u| Ok((u, q.indices(&u.synth.signal)?))).collect()
}

pub fn pairs_for<'a>(
    cfg: &RunConfig,
    model: &Seq2SeqModel,
    q: &Quantizer,
    utts: impl IntoIterator<Item = &'a Utterance>,
) -> Result<Vec<Pair>> {
    let extracted = extract(q, utts)?;
    let items: Vec<(&str, &IndexSeq, &AcousticSeq)> =
        extracted.iter().map(|(u, idx)| (u.id.as_str(), idx, &u.synth.features)).collect();
    make_pairs(model, cfg.postprocess, &items)
}

pub fn init_seq2seq(cfg: &RunConfig) -> Result<(Seq2SeqModel, ParamStore<f32>)> {
    let model = Seq2SeqModel::new(cfg.seq2seq.clone())?;
    let params = model.init_params(&mut Rng::derive(cfg.seed, "s2s/init"));
    Ok((model, params))
}

/// TTS-style pretraining on the large single-speaker set.
pub fn pretrain_phase(
    cfg: &RunConfig,
    model: &Seq2SeqModel,
    params: &mut ParamStore<f32>,
    train: &[Pair],
    valid: &[Pair],
) -> Result<Seq2SeqTraining> {
    train_seq2seq(model, params, train, valid, &cfg.pretrain, cfg.seed)
}

/// Adapts every parameter to the target set with a fresh optimizer.
pub fn finetune_phase(
    cfg: &RunConfig,
    model: &Seq2SeqModel,
    params: &mut ParamStore<f32>,
    train: &[Pair],
    valid: &[Pair],
) -> Result<Seq2SeqTraining> {
    params.reset_optimizer();
    train_seq2seq(model, params, train, valid, &cfg.finetune, cfg.seed.wrapping_add(1))
}

/// Symbol recognizer standing in for an ASR engine: nearest per-symbol mean of
/// the target speaker's whole training pool.
pub fn symbol_templates(corpus: &Corpus) -> Result<SymbolTemplates> {
    let data: Vec<(&AcousticSeq, Vec<u8>)> = corpus
        .split(Split::Target)
        .map(|u| (&u.synth.features, u.synth.frame_labels()))
        .collect();
    SymbolTemplates::fit(ALPHABET, data.iter().map(|(f, l)| (*f, l.as_slice())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UttScore {
    pub id: String,
    pub mcd_conv: f64,
    pub mcd_copy: f64,
    pub path_len: usize,
    pub ser: f64,
    pub frames: usize,
    pub oracle_frames: usize,
    pub truncated: bool,
}

/// Conversion quality over the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub target_size: usize,
    pub config_hash: String,
    pub n: usize,
    /// Utterances with `mcd_conv < mcd_copy`.
    pub wins: usize,
    pub mcd_conv: f64,
    pub mcd_copy: f64,
    pub ser: f64,
    pub mean_path_len: f64,
    pub truncated: usize,
    /// Per-group perplexity and unique tuples of the test split's codes.
    pub group_perplexity: Vec<f64>,
    pub unique_combinations: usize,
    pub utterances: Vec<UttScore>,
}

impl EvalReport {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.n.max(1) as f64
    }
}

/// Converts one source utterance. Nothing about the source speaker enters.
pub fn convert_signal(q: &Quantizer, model: &Seq2SeqModel, params: &ParamStore<f32>, post: Postprocess, signal: &[f32]) -> Result<AcousticSeq> {
    let idx = post.apply(&q.indices(signal)?)?;
    model.convert(params, &model.tokens(&idx)?)
}

/// Scores converted outputs of test utterances against their oracle renderings.
pub fn score_outputs(
    cfg: &RunConfig,
    corpus: &Corpus,
    templates: &SymbolTemplates,
    codes: &[&IndexSeq],
    outputs: &[(String, AcousticSeq)],
) -> Result<EvalReport> {
    if outputs.is_empty() {
        return Err(contract("nothing to evaluate"));
    }
    let mut utterances = Vec::with_capacity(outputs.len());
    for (id, out) in outputs {
        let src = corpus.get(id).ok_or_else(|| contract(format!("unknown utterance '{id}'")))?;
        let oracle = corpus
            .oracle_for(id)
            .ok_or_else(|| contract(format!("utterance '{id}' has no oracle rendering")))?;
        let sc = conversion_score(out, &oracle.synth.features, &src.synth.features)?;
        utterances.push(UttScore {
            id: id.clone(),
            mcd_conv: sc.mcd_conv,
            mcd_copy: sc.mcd_copy,
            path_len: sc.path_len,
            ser: error_rate(&templates.decode(out)?, &src.synth.symbols)?,
            frames: out.len(),
            oracle_frames: oracle.synth.features.len(),
            truncated: out.truncated,
        });
    }
    let n = utterances.len();
    let mean = |f: &dyn Fn(&UttScore) -> f64| utterances.iter().map(f).sum::<f64>() / n as f64;
    let stats = vocab_stats(codes.iter().copied())?;
    Ok(EvalReport {
        variant: cfg.postprocess.name().to_string(),
        target_size: cfg.target_size,
        config_hash: cfg.hash(),
        n,
        wins: utterances.iter().filter(|u| u.mcd_conv < u.mcd_copy).count(),
        mcd_conv: mean(&|u| u.mcd_conv),
        mcd_copy: mean(&|u| u.mcd_copy),
        ser: mean(&|u| u.ser),
        mean_path_len: mean(&|u| u.path_len as f64),
        truncated: utterances.iter().filter(|u| u.truncated).count(),
        group_perplexity: stats.group_perplexity,
        unique_combinations: stats.unique_combinations,
        utterances,
    })
}

/// Converts and scores the whole test split.
pub fn evaluate(cfg: &RunConfig, corpus: &Corpus, q: &Quantizer, model: &Seq2SeqModel, params: &ParamStore<f32>) -> Result<EvalReport> {
    let templates = symbol_templates(corpus)?;
    let extracted = extract(q, corpus.split(Split::Test))?;
    let mut outputs = Vec::with_capacity(extracted.len());
    for (u, idx) in &extracted {
        let tokens = model.tokens(&cfg.postprocess.apply(idx)?)?;
        outputs.push((u.id.clone(), model.convert(params, &tokens)?));
    }
    let codes: Vec<&IndexSeq> = extracted.iter().map(|(_, idx)| idx).collect();
    score_outputs(cfg, corpus, &templates, &codes, &outputs)
}

/// Data for one postprocessing variant: pretraining, target and validation pairs.
pub struct VariantData {
    pub cfg: RunConfig,
    pub model: Seq2SeqModel,
    pub pretrain: Vec<Pair>,
    pub target: Vec<Pair>,
    pub valid: Vec<Pair>,
}

impl VariantData {
    pub fn new(cfg: &RunConfig, corpus: &Corpus, q: &Quantizer) -> Result<Self> {
        let model = Seq2SeqModel::new(cfg.seq2seq.clone())?;
        Ok(Self {
            pretrain: pairs_for(cfg, &model, q, corpus.split(Split::Pretrain))?,
            target: pairs_for(cfg, &model, q, corpus.split(Split::Target))?,
            valid: pairs_for(cfg, &model, q, corpus.split(Split::TargetValid))?,
            cfg: cfg.clone(),
            model,
        })
    }

    /// The first `n` target pairs.
    pub fn target_set(&self, n: usize) -> &[Pair] {
        &self.target[..n.min(self.target.len())]
    }

    pub fn pretrained(&self) -> Result<(ParamStore<f32>, Seq2SeqTraining)> {
        let (_, mut params) = init_seq2seq(&self.cfg)?;
        let log = pretrain_phase(&self.cfg, &self.model, &mut params, &self.pretrain, &self.valid)?;
        Ok((params, log))
    }

    /// Finetunes from `init`, or from a fresh initialization when `None`.
    pub fn finetuned(&self, n: usize, init: Option<&ParamStore<f32>>) -> Result<(ParamStore<f32>, Seq2SeqTraining)> {
        let mut params = match init {
            Some(p) => p.clone(),
            None => init_seq2seq(&self.cfg)?.1,
        };
        let log = finetune_phase(&self.cfg, &self.model, &mut params, self.target_set(n), &self.valid)?;
        Ok((params, log))
    }
}
