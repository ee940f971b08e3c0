//! Experiment orchestration: corpus, quantizer, index extraction, converter
//! training, conversion, scoring and the ablation grid.

pub mod commands;
mod config;
mod experiment;
mod grid;
pub mod store;

pub use config::{front_end, GridConfig, RunConfig, SCHEMA};
pub use experiment::{
    convert_signal, evaluate, extract, finetune_phase, init_seq2seq, make_pairs, pairs_for, pretrain_phase, probe_signals,
    score_outputs, symbol_templates, train_quantizer, EvalReport, Quantizer, UttScore, VariantData,
};
pub use grid::{average_cells, load_report, ordering_checks, render_table, report_jsonl, run_grid, CellMetrics, CellReport, OrderingCheck};
