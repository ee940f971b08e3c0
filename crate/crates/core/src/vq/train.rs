use super::model::{GumbelNoise, Negatives, QuantMode, VqModel};
use crate::codec::{vocab_stats, IndexSeq};
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, Graph, ParamStore, Rng};

const CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuantizerTraining {
    /// Loss per step, averaged over the batch and normalized per prediction position.
    pub losses: Vec<f64>,
    /// `(step, per-group perplexity)` on the held-out probe set.
    pub perplexity_log: Vec<(usize, Vec<f64>)>,
}

/// Trains encoder, quantizer, aggregator and prediction matrices from scratch.
///
/// Each step draws `batch` random crops from `signals`. `probe` signals are
/// quantized every `log_every` steps to track codeword usage.
pub fn pretrain_quantizer(
    model: &VqModel,
    signals: &[&[f32]],
    probe: &[&[f32]],
    seed: u64,
    log_every: usize,
) -> Result<(ParamStore<f32>, QuantizerTraining)> {
    let mut params = model.init_params(&mut Rng::derive(seed, "vq/init"));
    let mut log = QuantizerTraining::default();
    train_quantizer_in_place(model, &mut params, &mut log, signals, probe, seed, log_every)?;
    Ok((params, log))
}

/// The loop of [`pretrain_quantizer`] over caller-owned parameters and log.
/// A non-finite loss stops training before that step touches `params`.
pub fn train_quantizer_in_place(
    model: &VqModel,
    params: &mut ParamStore<f32>,
    log: &mut QuantizerTraining,
    signals: &[&[f32]],
    probe: &[&[f32]],
    seed: u64,
    log_every: usize,
) -> Result<()> {
    let cfg = &model.cfg;
    if signals.is_empty() {
        return Err(Error::Contract("quantizer pretraining needs at least one utterance".into()));
    }
    let mut rng = Rng::derive(seed, "vq/train");
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let min_len = cfg.encoder.receptive_field() + cfg.encoder.total_stride() * cfg.contrastive.steps;
    for step in 0..cfg.steps {
        let tau = cfg.contrastive.tau_at(step, cfg.steps);
        let mut step_loss = 0.0;
        for _ in 0..cfg.batch {
            let sig = signals[rng.below(signals.len())];
            if sig.len() < min_len {
                return Err(Error::Contract(format!("utterance of {} samples is too short to train on", sig.len())));
            }
            let crop = if sig.len() > cfg.crop {
                let off = rng.below(sig.len() - cfg.crop + 1);
                &sig[off..off + cfg.crop]
            } else {
                sig
            };
            let frames = cfg.encoder.frames(crop.len());
            let noise = GumbelNoise::sample(frames, cfg.quantizer.groups, cfg.quantizer.codewords, &mut rng);
            let negs = Negatives::sample(frames, cfg.contrastive.steps, cfg.contrastive.negatives, &mut rng);
            let positions: usize = (1..=cfg.contrastive.steps).map(|k| frames - k).sum();
            let mut g = Graph::new();
            let (loss, _) = model.loss(&mut g, params, crop, QuantMode::Train { tau, noise: &noise }, &negs)?;
            let norm = positions as f64 * cfg.batch as f64;
            let scaled = g.scale(loss, 1.0 / norm)?;
            let value = g.value(scaled).item() as f64;
            if !value.is_finite() {
                return Err(diverged(step, &log.losses, params));
            }
            step_loss += value;
            g.backward(scaled, params)?;
        }
        params.clip_grad_norm(CLIP_NORM);
        params.adam_step(&adam)?;
        log.losses.push(step_loss);
        if log_every > 0 && !probe.is_empty() && ((step + 1) % log_every == 0 || step + 1 == cfg.steps) {
            let seqs = probe
                .iter()
                .map(|s| model.extract_indices(params, s))
                .collect::<Result<Vec<IndexSeq>>>()?;
            log.perplexity_log.push((step + 1, vocab_stats(&seqs)?.group_perplexity));
        }
    }
    if params.iter().any(|(_, p)| !p.value.is_finite()) {
        return Err(diverged(cfg.steps, &log.losses, params));
    }
    Ok(())
}

fn diverged(step: usize, losses: &[f64], params: &ParamStore<f32>) -> Error {
    let recent: Vec<String> = losses.iter().rev().take(5).map(|l| format!("{l:.4}")).collect();
    let bad: Vec<&str> = params
        .iter()
        .filter(|(_, p)| !p.value.is_finite())
        .map(|(n, _)| n)
        .collect();
    Error::Numeric(format!(
        "quantizer training diverged at step {step}; recent losses [{}]; non-finite params {bad:?}",
        recent.join(", ")
    ))
}
