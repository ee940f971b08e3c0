use crate::acoustic::AcousticSeq;
use crate::error::{contract, Result};

/// Shortest run the decoder will emit.
pub const MIN_RUN: usize = 2;

/// Cost of a symbol change, as a fraction of the closest template pair's
/// squared distance.
pub const SWITCH_PENALTY: f64 = 1.0;

/// Per-symbol mean feature frames of one speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolTemplates {
    pub dim: usize,
    /// `None` for symbols never seen in training.
    pub means: Vec<Option<Vec<f64>>>,
}

impl SymbolTemplates {
    /// Averages frames by label. `data` pairs features with per-frame labels.
    pub fn fit<'a>(alphabet: usize, data: impl IntoIterator<Item = (&'a AcousticSeq, &'a [u8])>) -> Result<Self> {
        let mut dim = None;
        let mut sums: Vec<Vec<f64>> = Vec::new();
        let mut counts = vec![0usize; alphabet];
        for (feats, labels) in data {
            if feats.len() != labels.len() {
                return Err(contract(format!("{} frames but {} labels", feats.len(), labels.len())));
            }
            let d = *dim.get_or_insert(feats.dim());
            if d != feats.dim() {
                return Err(contract("template features differ in dimension"));
            }
            if sums.is_empty() {
                sums = vec![vec![0.0; d]; alphabet];
            }
            for (frame, &l) in feats.frames().zip(labels) {
                let l = l as usize;
                if l >= alphabet {
                    return Err(contract(format!("label {l} outside alphabet of {alphabet}")));
                }
                counts[l] += 1;
                for (s, &v) in sums[l].iter_mut().zip(frame) {
                    *s += v as f64;
                }
            }
        }
        let dim = dim.ok_or_else(|| contract("templates need at least one utterance"))?;
        let means = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
            .collect();
        Ok(Self { dim, means })
    }

    fn check_dim(&self, feats: &AcousticSeq) -> Result<()> {
        if feats.dim() != self.dim {
            return Err(contract(format!("features of dim {} vs templates of dim {}", feats.dim(), self.dim)));
        }
        Ok(())
    }

    /// Squared distance of every frame to every fitted template, frame-major;
    /// unfitted symbols get infinity.
    fn distances(&self, feats: &AcousticSeq) -> Vec<Vec<f64>> {
        feats
            .frames()
            .map(|f| {
                self.means
                    .iter()
                    .map(|m| match m {
                        Some(m) => m.iter().zip(f).map(|(a, &b)| (a - b as f64).powi(2)).sum(),
                        None => f64::INFINITY,
                    })
                    .collect()
            })
            .collect()
    }

    /// Smallest squared distance between two fitted templates.
    fn min_separation(&self) -> f64 {
        let fitted: Vec<&Vec<f64>> = self.means.iter().flatten().collect();
        let mut best = f64::INFINITY;
        for (i, a) in fitted.iter().enumerate() {
            for b in &fitted[i + 1..] {
                best = best.min(a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum());
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// Nearest template (Euclidean) per frame.
    pub fn classify(&self, feats: &AcousticSeq) -> Result<Vec<u8>> {
        self.check_dim(feats)?;
        Ok(self
            .distances(feats)
            .iter()
            .map(|row| {
                let mut best = (f64::INFINITY, 0u8);
                for (s, &d) in row.iter().enumerate() {
                    if d < best.0 {
                        best = (d, s as u8);
                    }
                }
                best.1
            })
            .collect())
    }

    /// Best segmentation into runs of at least [`MIN_RUN`] frames, scored by
    /// total squared distance plus [`SWITCH_PENALTY`] × the smallest template
    /// separation per change of symbol. Adjacent equal symbols merge.
    pub fn decode(&self, feats: &AcousticSeq) -> Result<Vec<u8>> {
        self.decode_with(feats, SWITCH_PENALTY)
    }

    /// [`decode`](Self::decode) with a different switch penalty fraction.
    pub fn decode_with(&self, feats: &AcousticSeq, switch_penalty: f64) -> Result<Vec<u8>> {
        self.check_dim(feats)?;
        let dist = self.distances(feats);
        let n = dist.len();
        let k = self.means.len();
        if n == 0 || k == 0 {
            return Ok(Vec::new());
        }
        let penalty = switch_penalty * self.min_separation();
        // state (s, c): in symbol s for min(c + 1, MIN_RUN) frames
        let states = k * MIN_RUN;
        let mut cost = vec![f64::INFINITY; states];
        let mut back = vec![vec![usize::MAX; states]; n];
        for s in 0..k {
            cost[s * MIN_RUN] = dist[0][s];
        }
        for t in 1..n {
            let mut next = vec![f64::INFINITY; states];
            // cheapest state that may end a run, and the runner-up symbol
            let mut ends: Vec<(f64, usize)> = (0..k).map(|s| (cost[s * MIN_RUN + MIN_RUN - 1], s * MIN_RUN + MIN_RUN - 1)).collect();
            ends.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for s in 0..k {
                let d = dist[t][s];
                for c in 0..MIN_RUN {
                    let from = s * MIN_RUN + c;
                    let to = s * MIN_RUN + (c + 1).min(MIN_RUN - 1);
                    let v = cost[from] + d;
                    if v < next[to] {
                        next[to] = v;
                        back[t][to] = from;
                    }
                }
                if let Some(&(c, from)) = ends.iter().find(|&&(_, from)| from / MIN_RUN != s) {
                    let v = c + penalty + d;
                    if v < next[s * MIN_RUN] {
                        next[s * MIN_RUN] = v;
                        back[t][s * MIN_RUN] = from;
                    }
                }
            }
            cost = next;
        }
        let end = (0..k)
            .map(|s| s * MIN_RUN + MIN_RUN - 1)
            .chain((0..states).filter(|_| n < MIN_RUN))
            .min_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)))
            .expect("at least one state");
        let mut path = vec![0u8; n];
        let mut state = end;
        for t in (0..n).rev() {
            path[t] = (state / MIN_RUN) as u8;
            if t > 0 {
                state = back[t][state];
            }
        }
        let mut out: Vec<u8> = Vec::new();
        for s in path {
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }
}
