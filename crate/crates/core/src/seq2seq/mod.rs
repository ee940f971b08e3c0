//! Token-to-frame Transformer converter.

mod config;
mod infer;
mod model;
mod train;

pub use config::{FrontEnd, Seq2SeqConfig};
pub use infer::Decoder;
pub use model::{position_value, positional_encoding, DecoderOutput, EncoderStates, LossParts, Seq2SeqModel, Tokens};
pub use train::{train_seq2seq, validation_l1, Pair, Seq2SeqTraining, TrainConfig};

use crate::codec::Postprocess;
use crate::error::{Error, Result};
use crate::tensor::{Checkpoint, ParamStore};

pub const CHECKPOINT_KIND: &str = "seq2seq";

/// Packs converter weights with the config, the postprocessing they were
/// trained on and the run's config hash.
pub fn to_checkpoint(model: &Seq2SeqModel, params: &ParamStore<f32>, post: Postprocess, config_hash: &str) -> Checkpoint {
    Checkpoint::new(params.clone())
        .with_meta("kind", CHECKPOINT_KIND)
        .with_meta("config", serde_json::to_string(&model.cfg).expect("config serializes"))
        .with_meta("combine", post.combine)
        .with_meta("separate", post.separate)
        .with_meta("config_hash", config_hash)
}

pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Seq2SeqModel, Postprocess, ParamStore<f32>)> {
    if ckpt.meta("kind") != Some(CHECKPOINT_KIND) {
        return Err(Error::Format("checkpoint is not a seq2seq checkpoint".into()));
    }
    let cfg: Seq2SeqConfig = serde_json::from_str(ckpt.meta("config").unwrap_or_default())
        .map_err(|e| Error::Format(format!("seq2seq checkpoint config: {e}")))?;
    let flag = |k: &str| match ckpt.meta(k) {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        _ => Err(Error::Format(format!("seq2seq checkpoint lacks the '{k}' flag"))),
    };
    let post = Postprocess {
        combine: flag("combine")?,
        separate: flag("separate")?,
    };
    let model = Seq2SeqModel::new(cfg)?;
    if post.separate != (model.cfg.front_end == FrontEnd::Separate) {
        return Err(Error::Format("seq2seq checkpoint flags disagree with its front end".into()));
    }
    let expected = model.init_params(&mut crate::tensor::Rng::new(0));
    for (name, p) in expected.iter() {
        match ckpt.params.get(name) {
            Some(t) if t.shape() == p.value.shape() => {}
            _ => return Err(Error::Format(format!("seq2seq checkpoint lacks '{name}' or has the wrong shape"))),
        }
    }
    Ok((model, post, ckpt.params.clone()))
}
