//! Self-supervised discrete representation learner.

mod config;
mod model;
mod train;

pub use config::{AggregatorConfig, ContrastiveConfig, ConvLayer, EncoderConfig, QuantizerConfig, VqConfig};
pub use model::{argmax, GumbelNoise, Negatives, QuantMode, QuantizerOutput, VqModel};
pub use train::{pretrain_quantizer, train_quantizer_in_place, QuantizerTraining};

use crate::error::{Error, Result};
use crate::tensor::{Checkpoint, ParamStore};

pub const CHECKPOINT_KIND: &str = "quantizer";

/// Packs trained quantizer weights with their config.
pub fn to_checkpoint(model: &VqModel, params: &ParamStore<f32>, config_hash: &str) -> Checkpoint {
    Checkpoint::new(params.clone())
        .with_meta("kind", CHECKPOINT_KIND)
        .with_meta("config", serde_json::to_string(&model.cfg).expect("config serializes"))
        .with_meta("config_hash", config_hash)
}

pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(VqModel, ParamStore<f32>)> {
    if ckpt.meta("kind") != Some(CHECKPOINT_KIND) {
        return Err(Error::Format("checkpoint is not a quantizer checkpoint".into()));
    }
    let cfg: VqConfig = serde_json::from_str(ckpt.meta("config").unwrap_or_default())
        .map_err(|e| Error::Format(format!("quantizer checkpoint config: {e}")))?;
    let model = VqModel::new(cfg)?;
    let mut rng = crate::tensor::Rng::new(0);
    let expected = model.init_params(&mut rng);
    for (name, p) in expected.iter() {
        match ckpt.params.get(name) {
            Some(t) if t.shape() == p.value.shape() => {}
            _ => return Err(Error::Format(format!("quantizer checkpoint lacks '{name}' or has the wrong shape"))),
        }
    }
    Ok((model, ckpt.params.clone()))
}
