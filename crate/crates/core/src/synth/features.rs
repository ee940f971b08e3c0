//! Log triangular-filterbank features over short-time magnitude spectra.

use crate::acoustic::AcousticSeq;
use crate::dsp;
use crate::error::{contract, Result};

pub const WINDOW: usize = 30;
pub const HOP: usize = 10;
pub const FEAT_DIM: usize = 16;
pub const FFT_SIZE: usize = 64;
pub const ENERGY_FLOOR: f64 = 1e-8;

/// Frames produced for a signal of `len` samples.
pub fn frame_count(len: usize) -> usize {
    dsp::frame_count(len, WINDOW, HOP)
}

/// `FEAT_DIM` triangles with linearly spaced edges over bins `0..=FFT_SIZE/2`.
fn filterbank() -> Vec<Vec<f64>> {
    let bins = FFT_SIZE / 2 + 1;
    let top = (bins - 1) as f64;
    let edges: Vec<f64> = (0..FEAT_DIM + 2).map(|i| top * i as f64 / (FEAT_DIM + 1) as f64).collect();
    (0..FEAT_DIM)
        .map(|m| {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let k = k as f64;
                    if k <= lo || k >= hi {
                        0.0
                    } else if k <= c {
                        (k - lo) / (c - lo)
                    } else {
                        (hi - k) / (hi - c)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn extract_features(signal: &[f32]) -> Result<AcousticSeq> {
    if frame_count(signal.len()) == 0 {
        return Err(contract(format!(
            "signal of {} samples is shorter than one {WINDOW}-sample window",
            signal.len()
        )));
    }
    let fb = filterbank();
    let mut out = Vec::with_capacity(frame_count(signal.len()) * FEAT_DIM);
    for power in dsp::power_frames(signal, WINDOW, HOP, FFT_SIZE) {
        for tri in &fb {
            let e: f64 = tri.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.push(e.max(ENERGY_FLOOR).ln() as f32);
        }
    }
    AcousticSeq::new(FEAT_DIM, out)
}
