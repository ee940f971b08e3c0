//! Objective scores: cepstral distortion with alignment, error rates,
//! template symbol decoding and quantizer health.

mod error_rate;
mod mcd;
mod symbols;

pub use error_rate::{error_rate, levenshtein, normalized_edit_distance};
pub use mcd::{
    cepstra, conversion_score, dct2, dtw, frame_distortion, idct2, mcd, mcd_aligned, Alignment, ConversionScore, MCD_SCALE,
};
pub use symbols::{SymbolTemplates, MIN_RUN, SWITCH_PENALTY};

use std::collections::HashMap;
use std::hash::Hash;

use crate::codec::{vocab_stats, IndexSeq, VocabStats};
use crate::error::Result;

/// Per-group perplexity and unique joint combinations over a corpus.
pub fn quantizer_stats<'a>(corpus: impl IntoIterator<Item = &'a IndexSeq>) -> Result<VocabStats> {
    vocab_stats(corpus)
}

/// Cluster purity: each cluster votes for its majority label, and the purity is
/// the fraction of items that match their cluster's vote.
pub fn purity<C: Eq + Hash, L: Eq + Hash>(pairs: impl IntoIterator<Item = (C, L)>) -> f64 {
    let mut table: HashMap<C, HashMap<L, usize>> = HashMap::new();
    let mut n = 0usize;
    for (c, l) in pairs {
        *table.entry(c).or_default().entry(l).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let hits: usize = table.values().map(|h| h.values().copied().max().unwrap_or(0)).sum();
    hits as f64 / n as f64
}
