use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vqvc::codec::Postprocess;
use vqvc::pipeline::commands::{self, Init, Phase, EXTRACT_SPLITS};
use vqvc::pipeline::{render_table, RunConfig};
use vqvc::synth::Split;
use vqvc::{Error, Result};

/// Any-to-one voice conversion over discrete self-supervised tokens.
#[derive(Parser, Debug)]
#[command(name = "vqvc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// INI run config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `[run] out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Postprocessing variant: none, separate, combine or combine+separate.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Target-set size for finetune, convert and eval.
    #[arg(long, global = true)]
    target_size: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic corpus.
    GenCorpus,
    /// Train the quantizer on the unlabeled multi-speaker split.
    PretrainQuantizer,
    /// Write postprocessed index dumps.
    Extract {
        /// Splits to extract (repeatable); defaults to all converter splits.
        #[arg(long = "split")]
        splits: Vec<String>,
    },
    /// Pretrain or finetune the converter from index dumps.
    TrainSeq2seq {
        #[arg(long)]
        phase: String,
        /// Finetune from this checkpoint instead of the variant's pretrain checkpoint.
        #[arg(long, conflicts_with = "scratch")]
        init: Option<PathBuf>,
        /// Finetune from a fresh initialization.
        #[arg(long)]
        scratch: bool,
    },
    /// Convert signal files, or the test split when none are given.
    Convert {
        /// Converter checkpoint; defaults to the configured cell's finetune checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        inputs: Vec<PathBuf>,
    },
    /// Score the converted test split against oracle renderings.
    Eval,
    /// Train and score every (variant, size) cell.
    RunGrid {
        /// Re-render the table from an existing report without training.
        #[arg(long)]
        render_only: bool,
    },
}

fn config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    if let Some(v) = &g.variant {
        cfg.postprocess = Postprocess::parse(v)?;
    }
    if let Some(n) = g.target_size {
        cfg.target_size = n;
    }
    cfg.sync();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.global)?;
    let force = cli.global.force;
    match cli.cmd {
        Command::GenCorpus => {
            let c = commands::gen_corpus(&cfg, force)?;
            println!(
                "wrote {} utterances ({} frames) to {}",
                c.utterances.len(),
                c.total_frames(),
                cfg.corpus_dir().display()
            );
        }
        Command::PretrainQuantizer => {
            let log = commands::pretrain_quantizer(&cfg, force)?;
            let last = log.losses.last().copied().unwrap_or(f64::NAN);
            println!("final loss {last:.4}; checkpoint {}", cfg.quantizer_path().display());
            if let Some((step, ppl)) = log.perplexity_log.last() {
                println!("group perplexity at step {step}: {ppl:.3?}");
            }
        }
        Command::Extract { splits } => {
            let splits: Vec<Split> = if splits.is_empty() {
                EXTRACT_SPLITS.to_vec()
            } else {
                splits.iter().map(|s| s.parse()).collect::<Result<_>>()?
            };
            let out = commands::extract(&cfg, &splits, force)?;
            println!("wrote {} dumps to {}", out.written, cfg.indices_dir().display());
            if !out.failures.is_empty() {
                for (id, e) in &out.failures {
                    eprintln!("{id}: {e}");
                }
                return Err(Error::Format(format!("{} utterances failed", out.failures.len())));
            }
        }
        Command::TrainSeq2seq { phase, init, scratch } => {
            let phase: Phase = phase.parse()?;
            let init = match (init, scratch) {
                (Some(p), _) => Init::Checkpoint(p),
                (None, true) => Init::Scratch,
                (None, false) => Init::Pretrained,
            };
            let (path, log) = commands::train_seq2seq_cmd(&cfg, phase, &init, force)?;
            if let Some((step, l1)) = log.valid_l1.last() {
                println!("validation L1 {l1:.4} at step {step}");
            }
            println!("checkpoint {}", path.display());
        }
        Command::Convert { checkpoint, inputs } => {
            let out = commands::convert(&cfg, checkpoint.as_deref(), &inputs, force)?;
            println!("converted {} utterances into {}", out.written.len(), cfg.converted_dir().display());
            for id in &out.truncated {
                println!("truncated at max length: {id}");
            }
        }
        Command::Eval => {
            let r = commands::eval(&cfg)?;
            println!(
                "{} n={}: mcd_conv {:.3} mcd_copy {:.3} ser {:.3} wins {}/{} truncated {}",
                r.variant, r.target_size, r.mcd_conv, r.mcd_copy, r.ser, r.wins, r.n, r.truncated
            );
        }
        Command::RunGrid { render_only } => {
            if render_only {
                print!("{}", commands::render_grid(&cfg)?);
            } else {
                let cells = commands::run_grid_cmd(&cfg, force)?;
                print!("{}", render_table(&cells));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
