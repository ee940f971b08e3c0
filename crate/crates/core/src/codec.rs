//! Postprocessing of grouped quantizer indices.
//!
//! A frame is a G-tuple of codeword ids in `[0, V)`. *Combine* merges runs of
//! jointly identical adjacent tuples (remembering the run lengths so the
//! operation can be undone); *separate* maps each component to its own block
//! of a flat `G·V`-row embedding table instead of one `V^G`-row joint table.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{contract, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSeq {
    groups: usize,
    codewords: usize,
    /// Flattened tuples, `groups` entries per frame.
    data: Vec<u32>,
    combined: bool,
    run_lengths: Option<Vec<u32>>,
}

impl IndexSeq {
    /// Frame-level (uncombined) sequence from flattened tuples.
    pub fn new(groups: usize, codewords: usize, data: Vec<u32>) -> Result<Self> {
        if groups == 0 || codewords == 0 {
            return Err(contract("G and V must be positive"));
        }
        if !data.len().is_multiple_of(groups) {
            return Err(contract(format!("{} indices do not form {groups}-tuples", data.len())));
        }
        if let Some(bad) = data.iter().find(|&&i| i as usize >= codewords) {
            return Err(contract(format!("index {bad} out of range for V={codewords}")));
        }
        Ok(Self {
            groups,
            codewords,
            data,
            combined: false,
            run_lengths: None,
        })
    }

    pub fn from_tuples(groups: usize, codewords: usize, tuples: &[Vec<u32>]) -> Result<Self> {
        if tuples.iter().any(|t| t.len() != groups) {
            return Err(contract(format!("every tuple must have {groups} components")));
        }
        Self::new(groups, codewords, tuples.concat())
    }

    /// A combined sequence read from an external source; run lengths are optional.
    pub fn new_combined(groups: usize, codewords: usize, data: Vec<u32>, run_lengths: Option<Vec<u32>>) -> Result<Self> {
        let mut s = Self::new(groups, codewords, data)?;
        if s.frames_have_adjacent_repeat() {
            return Err(contract("combined sequence contains adjacent repeated tuples"));
        }
        if let Some(rl) = &run_lengths {
            if rl.len() != s.len() || rl.contains(&0) {
                return Err(contract("run lengths must be positive, one per tuple"));
            }
        }
        s.combined = true;
        s.run_lengths = run_lengths;
        Ok(s)
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn codewords(&self) -> usize {
        self.codewords
    }

    pub fn is_combined(&self) -> bool {
        self.combined
    }

    pub fn run_lengths(&self) -> Option<&[u32]> {
        self.run_lengths.as_deref()
    }

    /// Number of tuples.
    pub fn len(&self) -> usize {
        self.data.len() / self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Frame count before combining.
    pub fn original_len(&self) -> usize {
        match &self.run_lengths {
            Some(rl) => rl.iter().map(|&r| r as usize).sum(),
            None => self.len(),
        }
    }

    pub fn tuple(&self, i: usize) -> &[u32] {
        &self.data[i * self.groups..(i + 1) * self.groups]
    }

    pub fn tuples(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks(self.groups)
    }

    /// Indices of group `g` across all tuples.
    pub fn group_column(&self, g: usize) -> Vec<u32> {
        self.tuples().map(|t| t[g]).collect()
    }

    pub fn flat(&self) -> &[u32] {
        &self.data
    }

    fn frames_have_adjacent_repeat(&self) -> bool {
        self.data.chunks(self.groups).zip(self.data.chunks(self.groups).skip(1)).any(|(a, b)| a == b)
    }

    /// Merges adjacent tuples that are equal in every group.
    pub fn combine(&self) -> Result<IndexSeq> {
        if self.combined {
            return Err(contract("sequence is already combined"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        let mut runs: Vec<u32> = Vec::new();
        let mut prev: Option<&[u32]> = None;
        for t in self.tuples() {
            if prev == Some(t) {
                *runs.last_mut().expect("a run is open") += 1;
            } else {
                data.extend_from_slice(t);
                runs.push(1);
                prev = Some(t);
            }
        }
        Ok(IndexSeq {
            groups: self.groups,
            codewords: self.codewords,
            data,
            combined: true,
            run_lengths: Some(runs),
        })
    }

    /// Inverse of [`IndexSeq::combine`].
    pub fn expand(&self) -> Result<IndexSeq> {
        let runs = self
            .run_lengths
            .as_ref()
            .ok_or_else(|| contract("expand needs run lengths"))?;
        let mut data = Vec::with_capacity(self.original_len() * self.groups);
        for (t, &r) in self.tuples().zip(runs) {
            for _ in 0..r {
                data.extend_from_slice(t);
            }
        }
        IndexSeq::new(self.groups, self.codewords, data)
    }

    /// Frame-level view: expands combined sequences, clones otherwise.
    pub fn frame_level(&self) -> Result<IndexSeq> {
        if self.combined {
            self.expand()
        } else {
            Ok(self.clone())
        }
    }

    /// Joint ids of all tuples (no-postprocessing front end).
    pub fn joint_ids(&self) -> Result<Vec<usize>> {
        self.tuples().map(|t| joint_id(t, self.codewords)).collect()
    }

    /// Per-group table ids of all tuples, tuple-major.
    pub fn separated_ids(&self) -> Result<Vec<Vec<usize>>> {
        self.tuples().map(|t| separate(t, self.codewords)).collect()
    }
}

/// Maps component `g` of a tuple to row `g·V + i_g` of a `G·V`-row table.
pub fn separate(tuple: &[u32], codewords: usize) -> Result<Vec<usize>> {
    tuple
        .iter()
        .enumerate()
        .map(|(g, &i)| {
            if (i as usize) < codewords {
                Ok(g * codewords + i as usize)
            } else {
                Err(contract(format!("component {i} out of range for V={codewords}")))
            }
        })
        .collect()
}

/// Inverse of [`separate`].
pub fn unseparate(ids: &[usize], codewords: usize) -> Result<Vec<u32>> {
    ids.iter()
        .enumerate()
        .map(|(g, &id)| {
            if id / codewords == g {
                Ok((id % codewords) as u32)
            } else {
                Err(contract(format!("table id {id} does not belong to group {g}")))
            }
        })
        .collect()
}

/// `Σ_g i_g · V^(G-1-g)`.
pub fn joint_id(tuple: &[u32], codewords: usize) -> Result<usize> {
    tuple.iter().try_fold(0usize, |acc, &i| {
        if (i as usize) < codewords {
            Ok(acc * codewords + i as usize)
        } else {
            Err(contract(format!("component {i} out of range for V={codewords}")))
        }
    })
}

/// Inverse of [`joint_id`].
pub fn tuple_from_joint(id: usize, groups: usize, codewords: usize) -> Result<Vec<u32>> {
    let vocab = joint_vocab_size(groups, codewords)?;
    if id >= vocab {
        return Err(contract(format!("joint id {id} >= V^G = {vocab}")));
    }
    let mut t = vec![0u32; groups];
    let mut rest = id;
    for slot in t.iter_mut().rev() {
        *slot = (rest % codewords) as u32;
        rest /= codewords;
    }
    Ok(t)
}

/// Rows of a joint table, `V^G`.
pub fn joint_vocab_size(groups: usize, codewords: usize) -> Result<usize> {
    u32::try_from(groups)
        .ok()
        .and_then(|g| codewords.checked_pow(g))
        .ok_or_else(|| contract(format!("V^G overflows for V={codewords}, G={groups}")))
}

/// Rows of the factorized tables, `V·G`.
pub fn separated_vocab_size(groups: usize, codewords: usize) -> usize {
    groups * codewords
}

/// `exp(H)` of a usage histogram; 1 for a single used entry, `n` for uniform over `n`.
pub fn perplexity(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.exp()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VocabStats {
    pub unique_combinations: usize,
    pub group_histograms: Vec<Vec<u64>>,
    pub group_perplexity: Vec<f64>,
    /// Mean over utterances of `1 - combined_len / original_len`.
    pub reduction_ratio: f64,
    pub frames: usize,
    pub utterances: usize,
}

pub fn vocab_stats<'a>(corpus: impl IntoIterator<Item = &'a IndexSeq>) -> Result<VocabStats> {
    let mut shape: Option<(usize, usize)> = None;
    let mut hist: Vec<Vec<u64>> = Vec::new();
    let mut combos: HashSet<Vec<u32>> = HashSet::new();
    let mut ratio_sum = 0.0;
    let (mut frames, mut utts) = (0usize, 0usize);
    for seq in corpus {
        match shape {
            None => {
                shape = Some((seq.groups, seq.codewords));
                hist = vec![vec![0; seq.codewords]; seq.groups];
            }
            Some(s) if s != (seq.groups, seq.codewords) => {
                return Err(contract(format!(
                    "mixed corpus: G={},V={} vs G={},V={}",
                    s.0, s.1, seq.groups, seq.codewords
                )));
            }
            _ => {}
        }
        let full = seq.frame_level()?;
        if full.is_empty() {
            continue;
        }
        let combined = if seq.combined { seq.clone() } else { seq.combine()? };
        ratio_sum += 1.0 - combined.len() as f64 / full.len() as f64;
        for t in full.tuples() {
            for (g, &i) in t.iter().enumerate() {
                hist[g][i as usize] += 1;
            }
        }
        for t in combined.tuples() {
            combos.insert(t.to_vec());
        }
        frames += full.len();
        utts += 1;
    }
    if utts == 0 {
        return Err(contract("vocab_stats needs a nonempty corpus"));
    }
    Ok(VocabStats {
        unique_combinations: combos.len(),
        group_perplexity: hist.iter().map(|h| perplexity(h)).collect(),
        group_histograms: hist,
        reduction_ratio: ratio_sum / utts as f64,
        frames,
        utterances: utts,
    })
}

/// Serializes utterances in the index dump text format.
///
/// ```text
/// #utt <id> G=<G> V=<V>[ combined=1]
/// <i_0> ... <i_{G-1}>[:<run_length>]
/// ```
pub fn write_index_dump<'a>(utts: impl IntoIterator<Item = (&'a str, &'a IndexSeq)>) -> String {
    let mut out = String::new();
    for (id, seq) in utts {
        let _ = write!(out, "#utt {id} G={} V={}", seq.groups, seq.codewords);
        if seq.combined {
            out.push_str(" combined=1");
        }
        out.push('\n');
        for (k, t) in seq.tuples().enumerate() {
            let line = t.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            out.push_str(&line);
            if let Some(rl) = &seq.run_lengths {
                let _ = write!(out, ":{}", rl[k]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_index_dump(text: &str) -> Result<Vec<(String, IndexSeq)>> {
    struct Block {
        id: String,
        groups: usize,
        codewords: usize,
        combined: bool,
        data: Vec<u32>,
        runs: Vec<Option<u32>>,
    }
    fn finish(b: Block) -> Result<(String, IndexSeq)> {
        let seq = if b.combined {
            let runs = if b.runs.iter().all(Option::is_some) {
                Some(b.runs.into_iter().flatten().collect())
            } else if b.runs.iter().all(Option::is_none) {
                None
            } else {
                return Err(Error::Format(format!("utterance {}: run lengths on some lines only", b.id)));
            };
            IndexSeq::new_combined(b.groups, b.codewords, b.data, runs)?
        } else {
            if b.runs.iter().any(Option::is_some) {
                return Err(Error::Format(format!("utterance {}: run lengths without combined=1", b.id)));
            }
            IndexSeq::new(b.groups, b.codewords, b.data)?
        };
        Ok((b.id, seq))
    }
    let bad = |ln: usize, msg: &str| Error::Format(format!("index dump line {}: {msg}", ln + 1));
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#utt") {
            if let Some(b) = cur.take() {
                out.push(finish(b)?);
            }
            let mut parts = rest.split_whitespace();
            let id = parts.next().ok_or_else(|| bad(ln, "missing utterance id"))?.to_string();
            let (mut g, mut v, mut combined) = (None, None, false);
            for p in parts {
                match p.split_once('=') {
                    Some(("G", x)) => g = x.parse().ok(),
                    Some(("V", x)) => v = x.parse().ok(),
                    Some(("combined", x)) => combined = x == "1",
                    _ => return Err(bad(ln, &format!("unknown header field '{p}'"))),
                }
            }
            cur = Some(Block {
                id,
                groups: g.ok_or_else(|| bad(ln, "missing G"))?,
                codewords: v.ok_or_else(|| bad(ln, "missing V"))?,
                combined,
                data: Vec::new(),
                runs: Vec::new(),
            });
            continue;
        }
        let b = cur.as_mut().ok_or_else(|| bad(ln, "frame before #utt header"))?;
        let (idx, run) = match line.split_once(':') {
            Some((i, r)) => (i, Some(r.trim().parse::<u32>().map_err(|_| bad(ln, "bad run length"))?)),
            None => (line, None),
        };
        let before = b.data.len();
        for tok in idx.split_whitespace() {
            b.data.push(tok.parse().map_err(|_| bad(ln, &format!("bad index '{tok}'")))?);
        }
        if b.data.len() - before != b.groups {
            return Err(bad(ln, &format!("expected {} indices", b.groups)));
        }
        b.runs.push(run);
    }
    if let Some(b) = cur.take() {
        out.push(finish(b)?);
    }
    Ok(out)
}

/// Which postprocessing steps feed the seq2seq model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Postprocess {
    pub combine: bool,
    /// Factorized per-group embedding tables instead of one joint table.
    pub separate: bool,
}

impl Postprocess {
    pub const NONE: Postprocess = Postprocess {
        combine: false,
        separate: false,
    };
    pub const SEPARATE: Postprocess = Postprocess {
        combine: false,
        separate: true,
    };
    pub const BOTH: Postprocess = Postprocess {
        combine: true,
        separate: true,
    };

    /// Short label used in reports and directory names.
    pub fn name(self) -> &'static str {
        match (self.combine, self.separate) {
            (false, false) => "none",
            (false, true) => "separate",
            (true, false) => "combine",
            (true, true) => "combine+separate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Self::NONE, Self::SEPARATE, Self::BOTH, Postprocess { combine: true, separate: false }]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown postprocess variant '{s}'")))
    }

    /// Applies combine to a frame-level sequence when enabled.
    pub fn apply(self, seq: &IndexSeq) -> Result<IndexSeq> {
        let frames = seq.frame_level()?;
        if self.combine {
            frames.combine()
        } else {
            Ok(frames)
        }
    }
}
