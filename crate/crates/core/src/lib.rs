//! Any-to-one voice conversion over discrete self-supervised tokens, at desk scale.

pub mod acoustic;
pub mod codec;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod seq2seq;
pub mod synth;
pub mod tensor;
pub mod vq;

pub use error::{Error, Result};
