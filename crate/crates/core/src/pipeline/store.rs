//! On-disk layout under the run's output directory.
//!
//! ```text
//! config.json                          effective config with its hash
//! corpus/                              manifest, durations, signals, features
//! quantizer/quantizer.ckpt             (+ losses.tsv, perplexity.tsv)
//! indices/<variant>/<split>/<id>.idx   one dump per utterance, stats.json
//! seq2seq/<variant>/pretrain.ckpt      (+ .log.json)
//! seq2seq/<variant>/finetune_<n>.ckpt  (+ .log.json)
//! converted/<variant>_<n>/<id>.feat    (+ truncated.txt)
//! eval/<variant>_<n>.json
//! grid/report.jsonl, grid/table.txt
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::experiment::Quantizer;
use crate::codec::{parse_index_dump, IndexSeq};
use crate::error::{Error, Result};
use crate::seq2seq::{self, Seq2SeqModel, Seq2SeqTraining};
use crate::tensor::{load_checkpoint, save_checkpoint, ParamStore};
use crate::vq;

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Fails unless `path` is absent or `force` is set; with `force` it is removed.
pub fn claim(path: &Path, force: bool) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    if !force {
        return Err(Error::Config(format!("{} already exists (use --force to overwrite)", path.display())));
    }
    let removed = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else {
        std::fs::remove_file(path)
    };
    removed.map_err(|e| Error::io(path, e))
}

pub fn log_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("log.json")
}

pub fn save_seq2seq(cfg: &RunConfig, path: &Path, model: &Seq2SeqModel, params: &ParamStore<f32>, log: &Seq2SeqTraining) -> Result<()> {
    create_parent(path)?;
    save_checkpoint(&seq2seq::to_checkpoint(model, params, cfg.postprocess, &cfg.hash()), path)?;
    write_json(&log_path(path), log)
}

pub fn load_quantizer(path: &Path) -> Result<Quantizer> {
    let (model, params) = vq::from_checkpoint(&load_checkpoint(path)?)?;
    Ok(Quantizer { model, params })
}

pub fn dump_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.idx"))
}

pub fn read_dump(path: &Path) -> Result<IndexSeq> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut utts = parse_index_dump(&text)?;
    if utts.len() != 1 {
        return Err(Error::Format(format!("{}: expected one utterance, found {}", path.display(), utts.len())));
    }
    Ok(utts.remove(0).1)
}
