use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::Postprocess;
use crate::error::{Error, Result};
use crate::seq2seq::{FrontEnd, Seq2SeqConfig, TrainConfig};
use crate::synth::CorpusSpec;
use crate::vq::VqConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub variants: Vec<Postprocess>,
    pub sizes: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            variants: vec![Postprocess::NONE, Postprocess::SEPARATE, Postprocess::BOTH],
            sizes: vec![200, 20],
        }
    }
}

/// Everything one run needs. The output directory and thread count are
/// runtime choices and stay out of the config hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub quantizer: VqConfig,
    /// Probe-set perplexity interval during quantizer training.
    pub quantizer_log_every: usize,
    pub postprocess: Postprocess,
    pub seq2seq: Seq2SeqConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Target-set size used by `train-seq2seq --phase finetune`, `convert` and `eval`.
    pub target_size: usize,
    pub grid: GridConfig,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 1,
            corpus: CorpusSpec::default(),
            quantizer: VqConfig::default(),
            quantizer_log_every: 100,
            postprocess: Postprocess::BOTH,
            seq2seq: Seq2SeqConfig::default(),
            pretrain: TrainConfig {
                steps: 5000,
                eval_every: 500,
                ..TrainConfig::default()
            },
            finetune: TrainConfig::default(),
            target_size: 200,
            grid: GridConfig::default(),
            out: PathBuf::from("run"),
            threads: 1,
        };
        cfg.sync();
        cfg
    }
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(section, key, s))
        .collect()
}

/// Every accepted `(section, key)` pair.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["seed", "target_size", "out", "threads"]),
    (
        "corpus",
        &[
            "quantizer_speakers",
            "utts_per_speaker",
            "pretrain_speaker",
            "pretrain_utts",
            "target_speaker",
            "target_sizes",
            "target_valid",
            "source_speakers",
            "valid",
            "test",
        ],
    ),
    (
        "quantizer",
        &[
            "steps",
            "batch",
            "lr",
            "crop",
            "groups",
            "codewords",
            "prediction_steps",
            "negatives",
            "lambda",
            "tau_start",
            "tau_end",
            "anneal_fraction",
            "log_every",
        ],
    ),
    ("postprocess", &["combine", "separate"]),
    (
        "seq2seq",
        &[
            "emb_dim",
            "project",
            "model_dim",
            "heads",
            "ffn_dim",
            "enc_layers",
            "dec_layers",
            "prenet_dim",
            "prenet_dropout",
            "stop_pos_weight",
            "stop_threshold",
            "max_len_factor",
        ],
    ),
    ("pretrain", &["steps", "batch", "lr", "warmup", "clip", "eval_every"]),
    ("finetune", &["steps", "batch", "lr", "warmup", "clip", "eval_every"]),
    ("grid", &["variants", "sizes"]),
];

impl RunConfig {
    /// Defaults overridden by an INI file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ini(&text)
    }

    pub fn from_ini(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("run");
            for (key, value) in props.iter() {
                cfg.set(section, key, value)?;
            }
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let (s, k) = (section, key);
        match (s, k) {
            ("run", "seed") => self.seed = parse(s, k, v)?,
            ("run", "target_size") => self.target_size = parse(s, k, v)?,
            ("run", "out") => self.out = PathBuf::from(v.trim()),
            ("run", "threads") => self.threads = parse(s, k, v)?,

            ("corpus", "quantizer_speakers") => self.corpus.n_quantizer_speakers = parse(s, k, v)?,
            ("corpus", "utts_per_speaker") => self.corpus.n_utts_each = parse(s, k, v)?,
            ("corpus", "pretrain_speaker") => self.corpus.pretrain_speaker = parse(s, k, v)?,
            ("corpus", "pretrain_utts") => self.corpus.n_pretrain_utts = parse(s, k, v)?,
            ("corpus", "target_speaker") => self.corpus.target_speaker = parse(s, k, v)?,
            ("corpus", "target_sizes") => self.corpus.target_sizes = parse_list(s, k, v)?,
            ("corpus", "target_valid") => self.corpus.n_target_valid = parse(s, k, v)?,
            ("corpus", "source_speakers") => self.corpus.source_speakers = parse_list(s, k, v)?,
            ("corpus", "valid") => self.corpus.n_valid = parse(s, k, v)?,
            ("corpus", "test") => self.corpus.n_test = parse(s, k, v)?,

            ("quantizer", "steps") => self.quantizer.steps = parse(s, k, v)?,
            ("quantizer", "batch") => self.quantizer.batch = parse(s, k, v)?,
            ("quantizer", "lr") => self.quantizer.lr = parse(s, k, v)?,
            ("quantizer", "crop") => self.quantizer.crop = parse(s, k, v)?,
            ("quantizer", "groups") => self.quantizer.quantizer.groups = parse(s, k, v)?,
            ("quantizer", "codewords") => self.quantizer.quantizer.codewords = parse(s, k, v)?,
            ("quantizer", "prediction_steps") => self.quantizer.contrastive.steps = parse(s, k, v)?,
            ("quantizer", "negatives") => self.quantizer.contrastive.negatives = parse(s, k, v)?,
            ("quantizer", "lambda") => self.quantizer.contrastive.lambda = parse(s, k, v)?,
            ("quantizer", "tau_start") => self.quantizer.contrastive.tau_start = parse(s, k, v)?,
            ("quantizer", "tau_end") => self.quantizer.contrastive.tau_end = parse(s, k, v)?,
            ("quantizer", "anneal_fraction") => self.quantizer.contrastive.anneal_fraction = parse(s, k, v)?,
            ("quantizer", "log_every") => self.quantizer_log_every = parse(s, k, v)?,

            ("postprocess", "combine") => self.postprocess.combine = parse(s, k, v)?,
            ("postprocess", "separate") => self.postprocess.separate = parse(s, k, v)?,

            ("seq2seq", "emb_dim") => self.seq2seq.emb_dim = parse(s, k, v)?,
            ("seq2seq", "project") => self.seq2seq.project = parse(s, k, v)?,
            ("seq2seq", "model_dim") => self.seq2seq.model_dim = parse(s, k, v)?,
            ("seq2seq", "heads") => self.seq2seq.heads = parse(s, k, v)?,
            ("seq2seq", "ffn_dim") => self.seq2seq.ffn_dim = parse(s, k, v)?,
            ("seq2seq", "enc_layers") => self.seq2seq.enc_layers = parse(s, k, v)?,
            ("seq2seq", "dec_layers") => self.seq2seq.dec_layers = parse(s, k, v)?,
            ("seq2seq", "prenet_dim") => self.seq2seq.prenet_dim = parse(s, k, v)?,
            ("seq2seq", "prenet_dropout") => self.seq2seq.prenet_dropout = parse(s, k, v)?,
            ("seq2seq", "stop_pos_weight") => self.seq2seq.stop_pos_weight = parse(s, k, v)?,
            ("seq2seq", "stop_threshold") => self.seq2seq.stop_threshold = parse(s, k, v)?,
            ("seq2seq", "max_len_factor") => self.seq2seq.max_len_factor = parse(s, k, v)?,

            ("pretrain" | "finetune", _) => {
                let t = if s == "pretrain" { &mut self.pretrain } else { &mut self.finetune };
                match k {
                    "steps" => t.steps = parse(s, k, v)?,
                    "batch" => t.batch = parse(s, k, v)?,
                    "lr" => t.lr = parse(s, k, v)?,
                    "warmup" => t.warmup = parse(s, k, v)?,
                    "clip" => t.clip = parse(s, k, v)?,
                    "eval_every" => t.eval_every = parse(s, k, v)?,
                    _ => return Err(Error::Config(format!("unknown key '{k}' in [{s}]"))),
                }
            }

            ("grid", "variants") => {
                self.grid.variants = v
                    .split(',')
                    .map(str::trim)
                    .filter(|x| !x.is_empty())
                    .map(Postprocess::parse)
                    .collect::<Result<_>>()?
            }
            ("grid", "sizes") => self.grid.sizes = parse_list(s, k, v)?,
            _ => return Err(Error::Config(format!("unknown key '{k}' in [{s}]"))),
        }
        Ok(())
    }

    /// Propagates values that several components share.
    pub fn sync(&mut self) {
        self.corpus.seed = self.seed;
        self.seq2seq.groups = self.quantizer.quantizer.groups;
        self.seq2seq.codewords = self.quantizer.quantizer.codewords;
        self.seq2seq.front_end = front_end(self.postprocess);
        self.seq2seq.feat_dim = crate::synth::FEAT_DIM;
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.sync();
        c
    }

    pub fn with_postprocess(&self, post: Postprocess) -> Self {
        let mut c = self.clone();
        c.postprocess = post;
        c.sync();
        c
    }

    pub fn with_target_size(&self, n: usize) -> Self {
        let mut c = self.clone();
        c.target_size = n;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus
            .validate()
            .map_err(|e| Error::Config(format!("corpus: {e}")))?;
        self.quantizer.validate()?;
        self.seq2seq.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !self.corpus.target_sizes.contains(&self.target_size) {
            return Err(Error::Config(format!(
                "target size {} is not one of the corpus target sizes {:?}",
                self.target_size, self.corpus.target_sizes
            )));
        }
        if self.grid.variants.is_empty() || self.grid.sizes.is_empty() {
            return Err(Error::Config("grid needs at least one variant and one size".into()));
        }
        if let Some(n) = self.grid.sizes.iter().find(|n| !self.corpus.target_sizes.contains(n)) {
            return Err(Error::Config(format!("grid size {n} is not a corpus target size")));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    pub fn quantizer_path(&self) -> PathBuf {
        self.out.join("quantizer").join("quantizer.ckpt")
    }

    pub fn indices_dir(&self) -> PathBuf {
        self.out.join("indices").join(self.postprocess.name())
    }

    pub fn seq2seq_dir(&self) -> PathBuf {
        self.out.join("seq2seq").join(self.postprocess.name())
    }

    pub fn pretrain_path(&self) -> PathBuf {
        self.seq2seq_dir().join("pretrain.ckpt")
    }

    pub fn finetune_path(&self) -> PathBuf {
        self.seq2seq_dir().join(format!("finetune_{}.ckpt", self.target_size))
    }

    pub fn cell_name(&self) -> String {
        format!("{}_{}", self.postprocess.name(), self.target_size)
    }

    pub fn converted_dir(&self) -> PathBuf {
        self.out.join("converted").join(self.cell_name())
    }

    pub fn eval_path(&self) -> PathBuf {
        self.out.join("eval").join(format!("{}.json", self.cell_name()))
    }

    pub fn grid_dir(&self) -> PathBuf {
        self.out.join("grid")
    }
}

pub fn front_end(post: Postprocess) -> FrontEnd {
    if post.separate {
        FrontEnd::Separate
    } else {
        FrontEnd::Joint
    }
}
