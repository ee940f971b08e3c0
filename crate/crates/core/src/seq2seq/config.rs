use serde::{Deserialize, Serialize};

use crate::codec::{joint_vocab_size, separated_vocab_size};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEnd {
    /// `G` per-group tables of `V` rows, concatenated.
    Separate,
    /// One table of `V^G` rows indexed by the joint id.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seq2SeqConfig {
    pub groups: usize,
    pub codewords: usize,
    pub front_end: FrontEnd,
    /// Per-group embedding width in separate mode.
    pub emb_dim: usize,
    /// Linear map from the concatenated embedding to `model_dim`. Without it
    /// `groups · emb_dim` must equal `model_dim`.
    pub project: bool,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub feat_dim: usize,
    pub prenet_dim: usize,
    pub prenet_dropout: f64,
    pub stop_pos_weight: f64,
    pub stop_threshold: f64,
    /// Decoding stops after `max_len_factor ×` input tokens.
    pub max_len_factor: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self {
            groups: 2,
            codewords: 8,
            front_end: FrontEnd::Separate,
            emb_dim: 8,
            project: true,
            model_dim: 32,
            heads: 2,
            ffn_dim: 64,
            enc_layers: 2,
            dec_layers: 2,
            feat_dim: 16,
            prenet_dim: 32,
            prenet_dropout: 0.5,
            stop_pos_weight: 5.0,
            stop_threshold: 0.5,
            max_len_factor: 10,
        }
    }
}

impl Seq2SeqConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.groups == 0 || self.codewords < 2 {
            return bad(format!("need G >= 1 and V >= 2, got G={} V={}", self.groups, self.codewords));
        }
        if self.model_dim == 0 || self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return bad(format!("model dim {} is not divisible by {} heads", self.model_dim, self.heads));
        }
        if [self.emb_dim, self.ffn_dim, self.feat_dim, self.prenet_dim].contains(&0) {
            return bad("embedding, ffn, feature and prenet widths must be positive".into());
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return bad("need at least one encoder and one decoder layer".into());
        }
        if !(0.0..1.0).contains(&self.prenet_dropout) {
            return bad(format!("prenet dropout {} outside [0, 1)", self.prenet_dropout));
        }
        if self.stop_pos_weight <= 0.0 || !(0.0..=1.0).contains(&self.stop_threshold) {
            return bad("stop weight must be positive and threshold within [0, 1]".into());
        }
        if self.max_len_factor == 0 {
            return bad("max_len_factor must be positive".into());
        }
        if self.front_end == FrontEnd::Separate && !self.project && self.groups * self.emb_dim != self.model_dim {
            return bad(format!(
                "without projection G·emb = {} must equal model dim {}",
                self.groups * self.emb_dim,
                self.model_dim
            ));
        }
        joint_vocab_size(self.groups, self.codewords)?;
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// Rows of the input embedding table(s).
    pub fn vocab_rows(&self) -> usize {
        match self.front_end {
            FrontEnd::Separate => separated_vocab_size(self.groups, self.codewords),
            FrontEnd::Joint => joint_vocab_size(self.groups, self.codewords).expect("validated"),
        }
    }

    /// Width of the embedding table(s).
    pub fn table_dim(&self) -> usize {
        match self.front_end {
            FrontEnd::Separate => self.emb_dim,
            FrontEnd::Joint => self.model_dim,
        }
    }

    pub fn has_projection(&self) -> bool {
        self.front_end == FrontEnd::Separate && self.project
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = Seq2SeqConfig::default();
        c.validate().unwrap();
        assert_eq!(c.head_dim(), 16);
        assert_eq!(c.groups * c.emb_dim, 16);
        assert_eq!(c.vocab_rows(), 16);
        let j = Seq2SeqConfig {
            front_end: FrontEnd::Joint,
            ..c
        };
        assert_eq!(j.vocab_rows(), 64);
    }

    #[test]
    fn rejects_bad_shapes() {
        let c = Seq2SeqConfig::default();
        for bad in [
            Seq2SeqConfig { heads: 3, ..c.clone() },
            Seq2SeqConfig { project: false, ..c.clone() },
            Seq2SeqConfig { prenet_dropout: 1.0, ..c.clone() },
            Seq2SeqConfig { codewords: 1, ..c.clone() },
            Seq2SeqConfig { max_len_factor: 0, ..c.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
        let direct = Seq2SeqConfig {
            project: false,
            emb_dim: 16,
            ..c
        };
        direct.validate().unwrap();
    }
}
