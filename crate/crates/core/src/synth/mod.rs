//! Synthetic multi-speaker "speech" with known latent symbol strings.
//!
//! Each symbol is a pair of partials whose frequencies depend on the symbol
//! (scaled slightly by the speaker); the speaker adds its own partial weights,
//! a breath noise floor, loudness and speaking rate. Because the symbol
//! string of every utterance is known, the ideal conversion of any source
//! utterance to the target voice can simply be rendered.

pub mod corpus;
mod features;

use crate::acoustic::AcousticSeq;
use crate::error::{contract, Result};
use crate::tensor::Rng;

pub use corpus::{Corpus, CorpusSpec, Split, Utterance};
pub use features::{extract_features, frame_count, ENERGY_FLOOR, FEAT_DIM, FFT_SIZE, HOP, WINDOW};

pub const ALPHABET: usize = 12;
pub const NOISE_STD: f64 = 0.01;
pub const MIN_DURATION: usize = 3;
pub const MAX_DURATION: usize = 8;

/// Lower partial per symbol row, cycles/sample.
const FORMANT1: [f64; 4] = [0.04, 0.09, 0.14, 0.19];
/// Upper partial per symbol column, cycles/sample.
const FORMANT2: [f64; 3] = [0.30, 0.37, 0.44];
/// Nominal durations in frames, before speaker rate and jitter.
const BASE_DURATION: [usize; ALPHABET] = [3, 5, 7, 4, 6, 8, 5, 3, 6, 4, 8, 7];

pub fn symbol_frequencies(symbol: u8) -> (f64, f64) {
    let s = symbol as usize;
    (FORMANT1[s / FORMANT2.len()], FORMANT2[s % FORMANT2.len()])
}

/// Symbols print as `a`..`l`.
pub fn symbols_to_string(symbols: &[u8]) -> String {
    symbols.iter().map(|&s| (b'a' + s) as char).collect()
}

pub fn parse_symbols(s: &str) -> Result<Vec<u8>> {
    s.bytes()
        .map(|b| {
            let v = b.wrapping_sub(b'a');
            if (v as usize) < ALPHABET {
                Ok(v)
            } else {
                Err(contract(format!("invalid symbol '{}'", b as char)))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpeakerProfile {
    pub id: u32,
    /// Std of the speaker's white breath noise.
    pub breath: f64,
    pub amplitude: f64,
    pub duration_scale: f64,
    /// Multiplies both symbol partial frequencies.
    pub pitch_scale: f64,
    /// Weights of (lower partial, upper partial).
    pub timbre: [f64; 2],
}

impl SpeakerProfile {
    pub fn random(id: u32, rng: &mut Rng) -> Self {
        Self {
            id,
            breath: rng.uniform_range(0.02, 0.08),
            amplitude: rng.uniform_range(0.6, 1.4),
            duration_scale: rng.uniform_range(0.8, 1.25),
            pitch_scale: rng.uniform_range(0.95, 1.05),
            timbre: [rng.uniform_range(0.5, 1.5), rng.uniform_range(0.3, 1.2)],
        }
    }

    /// Number of fields in which two profiles differ.
    pub fn differing_fields(&self, other: &Self) -> usize {
        let mut n = 0;
        n += (self.breath != other.breath) as usize;
        n += (self.amplitude != other.amplitude) as usize;
        n += (self.duration_scale != other.duration_scale) as usize;
        n += (self.pitch_scale != other.pitch_scale) as usize;
        n += (self.timbre != other.timbre) as usize;
        n
    }

    fn duration(&self, symbol: u8, rng: &mut Rng) -> usize {
        let nominal = (BASE_DURATION[symbol as usize] as f64 * self.duration_scale).round() as usize;
        let d = nominal.clamp(MIN_DURATION, MAX_DURATION);
        // jitter of ±1 frame
        (d + rng.below(3)).saturating_sub(1).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthUtterance {
    pub speaker: u32,
    pub symbols: Vec<u8>,
    /// Frames per symbol.
    pub durations: Vec<usize>,
    pub signal: Vec<f32>,
    pub features: AcousticSeq,
}

impl SynthUtterance {
    /// Symbol index of every feature frame.
    pub fn frame_labels(&self) -> Vec<u8> {
        self.symbols
            .iter()
            .zip(&self.durations)
            .flat_map(|(&s, &d)| std::iter::repeat_n(s, d))
            .collect()
    }

    pub fn frame_total(&self) -> usize {
        self.durations.iter().sum()
    }
}

/// Renders `symbols` in the voice of `speaker`.
///
/// A symbol lasting `d` frames owns `d·HOP` samples; the signal carries an
/// extra `WINDOW - HOP` samples so feature frame `t` is centred on frame `t`
/// of the symbol timeline. Partials keep continuous phase across symbols.
pub fn render(speaker: &SpeakerProfile, symbols: &[u8], rng: &mut Rng) -> Result<SynthUtterance> {
    if symbols.is_empty() {
        return Err(contract("cannot render an empty symbol string"));
    }
    if let Some(bad) = symbols.iter().find(|&&s| s as usize >= ALPHABET) {
        return Err(contract(format!("invalid symbol id {bad}")));
    }
    let durations: Vec<usize> = symbols.iter().map(|&s| speaker.duration(s, rng)).collect();
    let frames: usize = durations.iter().sum();
    let len = frames * HOP + (WINDOW - HOP);

    let mut frame_symbol = Vec::with_capacity(frames);
    for (&s, &d) in symbols.iter().zip(&durations) {
        frame_symbol.extend(std::iter::repeat_n(s, d));
    }

    let tau = 2.0 * std::f64::consts::PI;
    let pad = (WINDOW - HOP) / 2;
    let mut phase = [rng.uniform() * tau, rng.uniform() * tau];
    let mut signal = Vec::with_capacity(len);
    for n in 0..len {
        let f = (n.saturating_sub(pad) / HOP).min(frames - 1);
        let (f1, f2) = symbol_frequencies(frame_symbol[f]);
        let freqs = [f1 * speaker.pitch_scale, f2 * speaker.pitch_scale];
        let mut x = speaker.breath * rng.normal();
        for k in 0..2 {
            x += speaker.timbre[k] * phase[k].sin();
            phase[k] = (phase[k] + tau * freqs[k]) % tau;
        }
        signal.push((speaker.amplitude * x + NOISE_STD * rng.normal()) as f32);
    }
    let features = extract_features(&signal)?;
    debug_assert_eq!(features.len(), frames);
    Ok(SynthUtterance {
        speaker: speaker.id,
        symbols: symbols.to_vec(),
        durations,
        signal,
        features,
    })
}
