use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiment::{convert_signal, finetune_phase, init_seq2seq, make_pairs, probe_signals, score_outputs, symbol_templates, EvalReport};
use super::grid::{load_report, render_table, report_jsonl, run_grid, CellReport};
use super::store::{self, claim, dump_path, load_quantizer, read_dump, write_json, write_text};
use crate::acoustic::AcousticSeq;
use crate::codec::{vocab_stats, write_index_dump, IndexSeq};
use crate::error::{contract, Error, Result};
use crate::seq2seq::{self, train_seq2seq, Pair, Seq2SeqModel};
use crate::synth::corpus::{parse_manifest, MANIFEST};
use crate::synth::{Corpus, Split};
use crate::tensor::{load_checkpoint, save_checkpoint, Rng};
use crate::vq::{self, train_quantizer_in_place, QuantizerTraining, VqModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl std::str::FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Phase::Pretrain),
            "finetune" => Ok(Phase::Finetune),
            _ => Err(Error::Config(format!("unknown phase '{s}' (pretrain|finetune)"))),
        }
    }
}

/// Where finetuning starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Init {
    /// The variant's pretrain checkpoint.
    Pretrained,
    Checkpoint(PathBuf),
    Scratch,
}

fn write_config(cfg: &RunConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Stamped<'a> {
        config_hash: String,
        config: &'a RunConfig,
    }
    write_json(
        &cfg.out.join("config.json"),
        &Stamped {
            config_hash: cfg.hash(),
            config: cfg,
        },
    )
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let dir = cfg.corpus_dir();
    let corpus = Corpus::load(&dir)?;
    if corpus.spec != cfg.corpus {
        return Err(contract(format!(
            "corpus at {} was generated from a different corpus spec or seed",
            dir.display()
        )));
    }
    Ok(corpus)
}

pub fn gen_corpus(cfg: &RunConfig, force: bool) -> Result<Corpus> {
    let dir = cfg.corpus_dir();
    claim(&dir, force)?;
    let corpus = Corpus::generate(&cfg.corpus)?;
    corpus.save(&dir)?;
    write_config(cfg)?;
    Ok(corpus)
}

fn losses_tsv(log: &QuantizerTraining) -> (String, String) {
    let mut losses = String::from("step\tloss\n");
    for (i, l) in log.losses.iter().enumerate() {
        let _ = writeln!(losses, "{}\t{l:.6}", i + 1);
    }
    let mut ppl = String::from("step\tgroup_perplexity\n");
    for (step, p) in &log.perplexity_log {
        let cols: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(ppl, "{step}\t{}", cols.join("\t"));
    }
    (losses, ppl)
}

/// Trains the quantizer on the corpus' unlabeled split. A diverged run keeps
/// its last parameters as `quantizer.ckpt.failed`.
pub fn pretrain_quantizer(cfg: &RunConfig, force: bool) -> Result<QuantizerTraining> {
    let corpus = load_corpus(cfg)?;
    let path = cfg.quantizer_path();
    claim(&path, force)?;
    let failed = path.with_extension("ckpt.failed");
    claim(&failed, true)?;
    let model = VqModel::new(cfg.quantizer.clone())?;
    let signals: Vec<&[f32]> = corpus.split(Split::Quantizer).map(|u| u.synth.signal.as_slice()).collect();
    let mut params = model.init_params(&mut Rng::derive(cfg.seed, "vq/init"));
    let mut log = QuantizerTraining::default();
    let result = train_quantizer_in_place(
        &model,
        &mut params,
        &mut log,
        &signals,
        &probe_signals(&corpus),
        cfg.seed,
        cfg.quantizer_log_every,
    );
    let dir = path.parent().expect("checkpoint path has a parent");
    let (losses, ppl) = losses_tsv(&log);
    write_text(&dir.join("losses.tsv"), &losses)?;
    write_text(&dir.join("perplexity.tsv"), &ppl)?;
    let ckpt = vq::to_checkpoint(&model, &params, &cfg.hash());
    match result {
        Ok(()) => save_checkpoint(&ckpt, &path)?,
        Err(e) => {
            save_checkpoint(&ckpt, &failed)?;
            return Err(e);
        }
    }
    write_config(cfg)?;
    Ok(log)
}

/// Summary written next to one split's index dumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub variant: String,
    pub split: String,
    pub config_hash: String,
    pub stats: crate::codec::VocabStats,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractOutcome {
    pub written: usize,
    /// `(utterance id, error)` for each utterance that could not be processed.
    pub failures: Vec<(String, String)>,
}

/// Splits the converter trains, validates and is scored on.
pub const EXTRACT_SPLITS: [Split; 5] = [Split::Pretrain, Split::Target, Split::TargetValid, Split::Valid, Split::Test];

fn extract_one(q: &crate::pipeline::Quantizer, corpus_dir: &Path, signal_path: &str, post: crate::codec::Postprocess) -> Result<IndexSeq> {
    let signal = AcousticSeq::load(&corpus_dir.join(signal_path))?;
    if signal.dim() != 1 {
        return Err(Error::Format(format!("{signal_path}: signal files have frame dim 1")));
    }
    post.apply(&q.indices(signal.data())?)
}

/// Writes postprocessed index dumps for `splits`. Unreadable utterances are
/// reported and skipped; the caller decides how to exit.
pub fn extract(cfg: &RunConfig, splits: &[Split], force: bool) -> Result<ExtractOutcome> {
    let q = load_quantizer(&cfg.quantizer_path())?;
    let corpus_dir = cfg.corpus_dir();
    let manifest_path = corpus_dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let rows = parse_manifest(&text)?;
    let mut outcome = ExtractOutcome::default();
    for &split in splits {
        let dir = cfg.indices_dir().join(split.name());
        claim(&dir, force)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut seqs = Vec::new();
        for row in rows.iter().filter(|r| r.split == split) {
            match extract_one(&q, &corpus_dir, &row.signal_path, cfg.postprocess) {
                Ok(seq) => {
                    write_text(&dump_path(&dir, &row.id), &write_index_dump([(row.id.as_str(), &seq)]))?;
                    seqs.push(seq);
                    outcome.written += 1;
                }
                Err(e) => outcome.failures.push((row.id.clone(), e.to_string())),
            }
        }
        if !seqs.is_empty() {
            let stats = ExtractStats {
                variant: cfg.postprocess.name().into(),
                split: split.name().into(),
                config_hash: cfg.hash(),
                stats: vocab_stats(&seqs)?,
            };
            write_json(&dir.join("stats.json"), &stats)?;
        }
    }
    write_config(cfg)?;
    Ok(outcome)
}

fn dumps_for<'a>(cfg: &RunConfig, corpus: &'a Corpus, split: Split, take: Option<usize>) -> Result<Vec<(&'a str, IndexSeq, &'a AcousticSeq)>> {
    let dir = cfg.indices_dir().join(split.name());
    let utts = corpus.split(split).take(take.unwrap_or(usize::MAX));
    utts.map(|u| {
        let seq = read_dump(&dump_path(&dir, &u.id)).map_err(|e| match e {
            Error::Io { path, .. } => Error::Format(format!(
                "missing index dump {} (run extract for {} first)",
                path.display(),
                cfg.postprocess.name()
            )),
            e => e,
        })?;
        if seq.is_combined() != cfg.postprocess.combine {
            return Err(contract(format!(
                "dump for {} has combine={} but the config says combine={}",
                u.id,
                seq.is_combined(),
                cfg.postprocess.combine
            )));
        }
        Ok((u.id.as_str(), seq, &u.synth.features))
    })
    .collect()
}

fn pairs_from_dumps(cfg: &RunConfig, model: &Seq2SeqModel, corpus: &Corpus, split: Split, take: Option<usize>) -> Result<Vec<Pair>> {
    let dumps = dumps_for(cfg, corpus, split, take)?;
    let items: Vec<(&str, &IndexSeq, &AcousticSeq)> = dumps.iter().map(|(id, s, f)| (*id, s, *f)).collect();
    make_pairs(model, cfg.postprocess, &items)
}

/// Loads a converter checkpoint and checks it against the run config.
pub fn load_seq2seq(cfg: &RunConfig, path: &Path) -> Result<(Seq2SeqModel, crate::tensor::ParamStore<f32>)> {
    let (model, post, params) = seq2seq::from_checkpoint(&load_checkpoint(path)?)?;
    if post != cfg.postprocess {
        return Err(Error::Config(format!(
            "{} was trained with postprocessing '{}' but the config asks for '{}'; \
             tokens would not match the embedding tables",
            path.display(),
            post.name(),
            cfg.postprocess.name()
        )));
    }
    if model.cfg != cfg.seq2seq {
        return Err(contract(format!(
            "{} has a different converter config (vocabulary or shape) than this run",
            path.display()
        )));
    }
    Ok((model, params))
}

/// Trains the converter from index dumps. Pretraining always starts from a
/// fresh initialization; finetuning loads every weight from `init`.
pub fn train_seq2seq_cmd(cfg: &RunConfig, phase: Phase, init: &Init, force: bool) -> Result<(PathBuf, seq2seq::Seq2SeqTraining)> {
    let corpus = load_corpus(cfg)?;
    let path = match phase {
        Phase::Pretrain => cfg.pretrain_path(),
        Phase::Finetune => cfg.finetune_path(),
    };
    claim(&path, force)?;
    let (model, fresh) = init_seq2seq(cfg)?;
    let valid = pairs_from_dumps(cfg, &model, &corpus, Split::TargetValid, None)?;
    let (params, log) = match phase {
        Phase::Pretrain => {
            let train = pairs_from_dumps(cfg, &model, &corpus, Split::Pretrain, None)?;
            let mut params = fresh;
            let log = train_seq2seq(&model, &mut params, &train, &valid, &cfg.pretrain, cfg.seed)?;
            (params, log)
        }
        Phase::Finetune => {
            let mut params = match init {
                Init::Scratch => fresh,
                Init::Pretrained => load_seq2seq(cfg, &cfg.pretrain_path())?.1,
                Init::Checkpoint(p) => load_seq2seq(cfg, p)?.1,
            };
            let train = pairs_from_dumps(cfg, &model, &corpus, Split::Target, Some(cfg.target_size))?;
            let log = finetune_phase(cfg, &model, &mut params, &train, &valid)?;
            (params, log)
        }
    };
    store::save_seq2seq(cfg, &path, &model, &params, &log)?;
    write_config(cfg)?;
    Ok((path, log))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvertOutcome {
    pub written: Vec<PathBuf>,
    pub truncated: Vec<String>,
}

/// Converts signal files (frame-dim-1 feature files) to target-voice
/// features. `inputs` empty means the corpus test split.
pub fn convert(cfg: &RunConfig, seq2seq_ckpt: Option<&Path>, inputs: &[PathBuf], force: bool) -> Result<ConvertOutcome> {
    let q = load_quantizer(&cfg.quantizer_path())?;
    let ckpt = seq2seq_ckpt.map_or_else(|| cfg.finetune_path(), Path::to_path_buf);
    let (model, params) = load_seq2seq(cfg, &ckpt)?;
    let inputs: Vec<(String, PathBuf)> = if inputs.is_empty() {
        let corpus_dir = cfg.corpus_dir();
        let manifest_path = corpus_dir.join(MANIFEST);
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        parse_manifest(&text)?
            .into_iter()
            .filter(|r| r.split == Split::Test)
            .map(|r| (r.id, corpus_dir.join(r.signal_path)))
            .collect()
    } else {
        inputs
            .iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::Config(format!("cannot name output for {}", p.display())))?;
                Ok((stem.to_string(), p.clone()))
            })
            .collect::<Result<_>>()?
    };
    let dir = cfg.converted_dir();
    claim(&dir, force)?;
    let mut outcome = ConvertOutcome::default();
    for (id, path) in inputs {
        let signal = AcousticSeq::load(&path)?;
        if signal.dim() != 1 {
            return Err(Error::Format(format!("{}: signal files have frame dim 1", path.display())));
        }
        let out = convert_signal(&q, &model, &params, cfg.postprocess, signal.data())?;
        let dest = dir.join(format!("{id}.feat"));
        store::create_parent(&dest)?;
        out.save(&dest)?;
        if out.truncated {
            outcome.truncated.push(id);
        }
        outcome.written.push(dest);
    }
    let listing: String = outcome.truncated.iter().map(|id| format!("{id}\n")).collect();
    write_text(&dir.join("truncated.txt"), &listing)?;
    write_config(cfg)?;
    Ok(outcome)
}

/// Scores the converted test split of the configured cell.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let corpus = load_corpus(cfg)?;
    let q = load_quantizer(&cfg.quantizer_path())?;
    let dir = cfg.converted_dir();
    let truncated_path = dir.join("truncated.txt");
    let truncated_text = std::fs::read_to_string(&truncated_path).map_err(|e| Error::io(&truncated_path, e))?;
    let truncated: Vec<&str> = truncated_text.lines().collect();
    let mut outputs = Vec::new();
    let mut codes = Vec::new();
    for u in corpus.split(Split::Test) {
        let mut out = AcousticSeq::load(&dir.join(format!("{}.feat", u.id)))?;
        out.truncated = truncated.contains(&u.id.as_str());
        outputs.push((u.id.clone(), out));
        codes.push(q.indices(&u.synth.signal)?);
    }
    let codes: Vec<&IndexSeq> = codes.iter().collect();
    let report = score_outputs(cfg, &corpus, &symbol_templates(&corpus)?, &codes, &outputs)?;
    write_json(&cfg.eval_path(), &report)?;
    Ok(report)
}

/// Trains and scores the whole grid against the existing corpus and
/// quantizer, then writes `report.jsonl` and `table.txt`.
pub fn run_grid_cmd(cfg: &RunConfig, force: bool) -> Result<Vec<CellReport>> {
    let corpus = load_corpus(cfg)?;
    let q = load_quantizer(&cfg.quantizer_path())?;
    let dir = cfg.grid_dir();
    claim(&dir, force)?;
    for v in &cfg.grid.variants {
        let vc = cfg.with_postprocess(*v);
        claim(&vc.seq2seq_dir(), force)?;
        for &n in &cfg.grid.sizes {
            let cell = vc.with_target_size(n);
            claim(&cell.eval_path(), force)?;
        }
    }
    let cells = run_grid(cfg, &corpus, &q, true);
    write_text(&dir.join("report.jsonl"), &report_jsonl(&cells))?;
    write_text(&dir.join("table.txt"), &render_table(&cells))?;
    write_config(cfg)?;
    Ok(cells)
}

/// Re-renders the table of an existing grid report.
pub fn render_grid(cfg: &RunConfig) -> Result<String> {
    let cells = load_report(&cfg.grid_dir().join("report.jsonl"))?;
    Ok(render_table(&cells))
}

/// Quantizer checkpoint and its config, for callers that train in memory.
pub fn save_quantizer(cfg: &RunConfig, q: &crate::pipeline::Quantizer) -> Result<()> {
    let path = cfg.quantizer_path();
    store::create_parent(&path)?;
    save_checkpoint(&vq::to_checkpoint(&q.model, &q.params, &cfg.hash()), &path)
}
