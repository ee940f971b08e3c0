use crate::acoustic::AcousticSeq;
use crate::error::{contract, Result};

/// `10 / ln 10`, the dB factor of the cepstral distortion.
pub const MCD_SCALE: f64 = 10.0 / std::f64::consts::LN_10;

/// Orthonormal DCT-II of one frame.
pub fn dct2(x: &[f32]) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v as f64 * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf).cos())
                .sum();
            let norm = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            s * norm
        })
        .collect()
}

/// Inverse of [`dct2`].
pub fn idct2(c: &[f64]) -> Vec<f32> {
    let n = c.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let norm = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    v * norm * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf).cos()
                })
                .sum::<f64>() as f32
        })
        .collect()
}

pub fn cepstra(a: &AcousticSeq) -> Vec<Vec<f64>> {
    a.frames().map(dct2).collect()
}

/// Distortion of one cepstral frame pair, 0th coefficient excluded.
pub fn frame_distortion(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).skip(1).map(|(x, y)| (x - y) * (x - y)).sum();
    MCD_SCALE * (2.0 * sq).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// Sum of frame distortions along the path.
    pub cost: f64,
    /// `(i, j)` pairs from `(0, 0)` to `(n-1, m-1)`.
    pub path: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn mean(&self) -> f64 {
        self.cost / self.path.len() as f64
    }
}

/// Dynamic time warping over a precomputed local cost matrix with steps
/// (1,0), (0,1), (1,1). Minimizes total cost; equal costs prefer the shorter
/// path, then the diagonal, then (1,0).
pub fn dtw(cost: &[Vec<f64>]) -> Result<Alignment> {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 || cost.iter().any(|r| r.len() != m) {
        return Err(contract("dtw needs a nonempty rectangular cost matrix"));
    }
    // (total, length) per cell, compared lexicographically
    let mut acc = vec![vec![(f64::INFINITY, usize::MAX); m]; n];
    let mut back = vec![vec![0u8; m]; n];
    for i in 0..n {
        for j in 0..m {
            if i == 0 && j == 0 {
                acc[0][0] = (cost[0][0], 1);
                continue;
            }
            let mut best = (f64::INFINITY, usize::MAX);
            let mut dir = 0u8;
            // candidate order fixes tie-breaks: diagonal, then up, then left
            let cands = [
                (i > 0 && j > 0, 1u8, (i.wrapping_sub(1), j.wrapping_sub(1))),
                (i > 0, 2u8, (i.wrapping_sub(1), j)),
                (j > 0, 3u8, (i, j.wrapping_sub(1))),
            ];
            for (ok, d, (pi, pj)) in cands {
                if !ok {
                    continue;
                }
                let prev = acc[pi][pj];
                let cand = (prev.0 + cost[i][j], prev.1 + 1);
                if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                    dir = d;
                }
            }
            acc[i][j] = best;
            back[i][j] = dir;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        match back[i][j] {
            1 => {
                i -= 1;
                j -= 1;
            }
            2 => i -= 1,
            _ => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(Alignment {
        cost: acc[n - 1][m - 1].0,
        path,
    })
}

fn check_dims(a: &AcousticSeq, b: &AcousticSeq) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(contract(format!("feature dims differ: {} vs {}", a.dim(), b.dim())));
    }
    if a.is_empty() || b.is_empty() {
        return Err(contract("mcd of an empty sequence"));
    }
    Ok(())
}

/// Mel-cepstral-distortion analogue in dB. Returns the mean frame distortion
/// and the number of aligned pairs.
pub fn mcd_aligned(a: &AcousticSeq, b: &AcousticSeq, align: bool) -> Result<(f64, usize)> {
    check_dims(a, b)?;
    let (ca, cb) = (cepstra(a), cepstra(b));
    if !align {
        if a.len() != b.len() {
            return Err(contract(format!("unaligned mcd needs equal lengths, got {} and {}", a.len(), b.len())));
        }
        let total: f64 = ca.iter().zip(&cb).map(|(x, y)| frame_distortion(x, y)).sum();
        return Ok((total / a.len() as f64, a.len()));
    }
    let local: Vec<Vec<f64>> = ca.iter().map(|x| cb.iter().map(|y| frame_distortion(x, y)).collect()).collect();
    let al = dtw(&local)?;
    Ok((al.mean(), al.path.len()))
}

pub fn mcd(a: &AcousticSeq, b: &AcousticSeq, align: bool) -> Result<f64> {
    mcd_aligned(a, b, align).map(|r| r.0)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConversionScore {
    pub mcd_conv: f64,
    pub mcd_copy: f64,
    pub path_len: usize,
}

impl ConversionScore {
    pub fn success(&self) -> bool {
        self.mcd_conv < self.mcd_copy
    }
}

/// Scores a converted utterance against the oracle target rendering, with
/// copying the source features as the baseline.
pub fn conversion_score(converted: &AcousticSeq, oracle: &AcousticSeq, source: &AcousticSeq) -> Result<ConversionScore> {
    let (mcd_conv, path_len) = mcd_aligned(converted, oracle, true)?;
    let (mcd_copy, _) = mcd_aligned(source, oracle, true)?;
    Ok(ConversionScore {
        mcd_conv,
        mcd_copy,
        path_len,
    })
}
