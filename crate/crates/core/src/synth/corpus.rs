//! Corpus layout with disjoint speaker roles, plus its on-disk manifest.
//!
//! Manifest lines are `utt_id\tspeaker\tsplit\tsymbols\tsignal_path\tfeat_path`
//! with paths relative to the manifest. Per-symbol frame durations go to a
//! sidecar `durations.tsv` (`utt_id\td1,d2,...`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{parse_symbols, render, symbols_to_string, SpeakerProfile, SynthUtterance, ALPHABET};
use crate::acoustic::AcousticSeq;
use crate::error::{contract, Error, Result};
use crate::tensor::Rng;

pub const MANIFEST: &str = "manifest.tsv";
pub const DURATIONS: &str = "durations.tsv";
pub const MIN_SYMBOLS: usize = 5;
pub const MAX_SYMBOLS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    /// Unlabeled multi-speaker data for the quantizer.
    Quantizer,
    /// Large single-speaker set for seq2seq pretraining.
    Pretrain,
    /// Target speaker training pool; the first `n` form the size-`n` set.
    Target,
    /// Held-out target speaker utterances for teacher-forced validation.
    TargetValid,
    /// Unseen source speakers.
    Valid,
    Test,
    /// Target-voice renderings of the `Valid`/`Test` symbol strings.
    ValidOracle,
    TestOracle,
}

impl Split {
    pub const ALL: [Split; 8] = [
        Split::Quantizer,
        Split::Pretrain,
        Split::Target,
        Split::TargetValid,
        Split::Valid,
        Split::Test,
        Split::ValidOracle,
        Split::TestOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Split::Quantizer => "quantizer",
            Split::Pretrain => "pretrain",
            Split::Target => "target",
            Split::TargetValid => "target_valid",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::ValidOracle => "valid_oracle",
            Split::TestOracle => "test_oracle",
        }
    }

    /// Splits whose speakers take part in any training.
    pub fn is_training(self) -> bool {
        matches!(self, Split::Quantizer | Split::Pretrain | Split::Target | Split::TargetValid)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown split '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_quantizer_speakers: u32,
    pub n_utts_each: usize,
    pub pretrain_speaker: u32,
    pub n_pretrain_utts: usize,
    pub target_speaker: u32,
    /// Nested target training set sizes; the pool holds the largest.
    pub target_sizes: Vec<usize>,
    pub n_target_valid: usize,
    pub source_speakers: Vec<u32>,
    pub n_valid: usize,
    pub n_test: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_quantizer_speakers: 4,
            n_utts_each: 60,
            pretrain_speaker: 100,
            n_pretrain_utts: 300,
            target_speaker: 200,
            target_sizes: vec![200, 20],
            n_target_valid: 20,
            source_speakers: vec![300, 301],
            n_valid: 20,
            n_test: 50,
        }
    }
}

impl CorpusSpec {
    pub fn quantizer_speakers(&self) -> Vec<u32> {
        (0..self.n_quantizer_speakers).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let roles = self
            .quantizer_speakers()
            .into_iter()
            .chain([self.pretrain_speaker, self.target_speaker])
            .chain(self.source_speakers.iter().copied());
        for id in roles {
            if !seen.insert(id) {
                return Err(contract(format!("speaker {id} is assigned to more than one role")));
            }
        }
        if self.source_speakers.is_empty() {
            return Err(contract("need at least one source speaker"));
        }
        if self.target_sizes.is_empty() || self.target_sizes.contains(&0) {
            return Err(contract("target sizes must be positive"));
        }
        Ok(())
    }

    pub fn max_target(&self) -> usize {
        self.target_sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn profile(&self, id: u32) -> SpeakerProfile {
        SpeakerProfile::random(id, &mut Rng::derive(self.seed, &format!("speaker/{id}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub split: Split,
    pub synth: SynthUtterance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub utterances: Vec<Utterance>,
}

fn random_symbols(rng: &mut Rng) -> Vec<u8> {
    let n = MIN_SYMBOLS + rng.below(MAX_SYMBOLS - MIN_SYMBOLS + 1);
    let mut out: Vec<u8> = Vec::with_capacity(n);
    while out.len() < n {
        let s = rng.below(ALPHABET) as u8;
        // no immediate repeats, so symbol strings survive run collapsing
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

impl Corpus {
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let profiles: BTreeMap<u32, SpeakerProfile> = spec
            .quantizer_speakers()
            .into_iter()
            .chain([spec.pretrain_speaker, spec.target_speaker])
            .chain(spec.source_speakers.iter().copied())
            .map(|id| (id, spec.profile(id)))
            .collect();
        let ids: Vec<&u32> = profiles.keys().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                if profiles[a].differing_fields(&profiles[b]) < 2 {
                    return Err(contract(format!("speakers {a} and {b} are too similar")));
                }
            }
        }

        let mut utterances = Vec::new();
        let mut make = |id: String, split: Split, spk: u32, symbols: &[u8]| -> Result<()> {
            let mut rng = Rng::derive(spec.seed, &format!("utt/{id}"));
            let synth = render(&profiles[&spk], symbols, &mut rng)?;
            utterances.push(Utterance { id, split, synth });
            Ok(())
        };
        let mut text = Rng::derive(spec.seed, "symbols");

        for spk in spec.quantizer_speakers() {
            for n in 0..spec.n_utts_each {
                make(format!("q{spk}_{n:04}"), Split::Quantizer, spk, &random_symbols(&mut text))?;
            }
        }
        for n in 0..spec.n_pretrain_utts {
            make(format!("p_{n:04}"), Split::Pretrain, spec.pretrain_speaker, &random_symbols(&mut text))?;
        }
        for n in 0..spec.max_target() {
            make(format!("t_{n:04}"), Split::Target, spec.target_speaker, &random_symbols(&mut text))?;
        }
        for n in 0..spec.n_target_valid {
            make(format!("tv_{n:04}"), Split::TargetValid, spec.target_speaker, &random_symbols(&mut text))?;
        }
        for (split, oracle, prefix, count) in [
            (Split::Valid, Split::ValidOracle, "v", spec.n_valid),
            (Split::Test, Split::TestOracle, "e", spec.n_test),
        ] {
            for n in 0..count {
                let spk = spec.source_speakers[n % spec.source_speakers.len()];
                let symbols = random_symbols(&mut text);
                let id = format!("{prefix}{spk}_{n:04}");
                make(id.clone(), split, spk, &symbols)?;
                make(oracle_id(&id), oracle, spec.target_speaker, &symbols)?;
            }
        }
        Ok(Self {
            spec: spec.clone(),
            utterances,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    /// The first `n` target-pool utterances.
    pub fn target_set(&self, n: usize) -> Vec<&Utterance> {
        self.split(Split::Target).take(n).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Target-voice rendering of a valid/test utterance's symbols.
    pub fn oracle_for(&self, id: &str) -> Option<&Utterance> {
        self.get(&oracle_id(id))
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.synth.features.len()).sum()
    }

    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\tsignals/{}.feat\tfeats/{}.feat\n",
                u.id,
                u.synth.speaker,
                u.split,
                symbols_to_string(&u.synth.symbols),
                u.id,
                u.id
            ));
        }
        out
    }

    /// Writes manifest, durations sidecar, signals and features under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for sub in ["signals", "feats"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let write = |p: &Path, s: &str| std::fs::write(p, s).map_err(|e| Error::io(p, e));
        write(&dir.join(MANIFEST), &self.manifest_text())?;
        let durations: String = self
            .utterances
            .iter()
            .map(|u| {
                let d: Vec<String> = u.synth.durations.iter().map(usize::to_string).collect();
                format!("{}\t{}\n", u.id, d.join(","))
            })
            .collect();
        write(&dir.join(DURATIONS), &durations)?;
        write(
            &dir.join("corpus.json"),
            &serde_json::to_string_pretty(&self.spec).expect("spec serializes"),
        )?;
        for u in &self.utterances {
            AcousticSeq::new(1, u.synth.signal.clone())?.save(&dir.join(format!("signals/{}.feat", u.id)))?;
            u.synth.features.save(&dir.join(format!("feats/{}.feat", u.id)))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let spec_path = dir.join("corpus.json");
        let spec: CorpusSpec =
            serde_json::from_str(&read(&spec_path)?).map_err(|e| Error::Format(format!("{}: {e}", spec_path.display())))?;
        let mut durations = BTreeMap::new();
        for line in read(&dir.join(DURATIONS))?.lines().filter(|l| !l.is_empty()) {
            let (id, d) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("bad durations line '{line}'")))?;
            let d = d
                .split(',')
                .map(|x| x.parse::<usize>().map_err(|_| Error::Format(format!("bad duration in '{line}'"))))
                .collect::<Result<Vec<_>>>()?;
            durations.insert(id.to_string(), d);
        }
        let mut utterances = Vec::new();
        for row in parse_manifest(&read(&dir.join(MANIFEST))?)? {
            let signal = AcousticSeq::load(&dir.join(&row.signal_path))?;
            let features = AcousticSeq::load(&dir.join(&row.feat_path))?;
            let durations = durations
                .remove(&row.id)
                .ok_or_else(|| Error::Format(format!("no durations for {}", row.id)))?;
            utterances.push(Utterance {
                id: row.id,
                split: row.split,
                synth: SynthUtterance {
                    speaker: row.speaker,
                    symbols: row.symbols,
                    durations,
                    signal: signal.data().to_vec(),
                    features,
                },
            });
        }
        Ok(Self { spec, utterances })
    }
}

pub fn oracle_id(id: &str) -> String {
    format!("{id}_oracle")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub speaker: u32,
    pub split: Split,
    pub symbols: Vec<u8>,
    pub signal_path: String,
    pub feat_path: String,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(Error::Format(format!("manifest line {}: expected 6 fields", n + 1)));
            }
            Ok(ManifestRow {
                id: f[0].to_string(),
                speaker: f[1]
                    .parse()
                    .map_err(|_| Error::Format(format!("manifest line {}: bad speaker", n + 1)))?,
                split: f[2].parse()?,
                symbols: parse_symbols(f[3])?,
                signal_path: f[4].to_string(),
                feat_path: f[5].to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusSpec {
        CorpusSpec {
            n_utts_each: 3,
            n_pretrain_utts: 4,
            target_sizes: vec![6, 2],
            n_target_valid: 2,
            n_valid: 2,
            n_test: 3,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn roles_are_disjoint() {
        let c = Corpus::generate(&small()).unwrap();
        let sources: BTreeSet<u32> = c.spec.source_speakers.iter().copied().collect();
        for u in &c.utterances {
            if u.split.is_training() {
                assert!(!sources.contains(&u.synth.speaker), "{}", u.id);
            }
        }
        let bad = CorpusSpec {
            target_speaker: 300,
            ..small()
        };
        assert!(matches!(Corpus::generate(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn target_sets_nest() {
        let c = Corpus::generate(&small()).unwrap();
        let big = c.target_set(6);
        let small_set = c.target_set(2);
        assert_eq!(big.len(), 6);
        assert!(small_set.iter().all(|u| big.iter().any(|b| b.id == u.id)));
    }

    #[test]
    fn oracles_share_symbols() {
        let c = Corpus::generate(&small()).unwrap();
        for u in c.split(Split::Test) {
            let o = c.oracle_for(&u.id).unwrap();
            assert_eq!(o.synth.symbols, u.synth.symbols);
            assert_eq!(o.synth.speaker, c.spec.target_speaker);
        }
    }

    #[test]
    fn symbol_strings_in_range() {
        let c = Corpus::generate(&small()).unwrap();
        for u in &c.utterances {
            let n = u.synth.symbols.len();
            assert!((MIN_SYMBOLS..=MAX_SYMBOLS).contains(&n));
            assert!(u.synth.symbols.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = Corpus::generate(&small()).unwrap();
        c.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back, c);
        let rows = parse_manifest(&std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(rows.len(), c.utterances.len());
    }
}
