use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiment::{evaluate, Quantizer, VariantData};
use super::store;
use crate::codec::Postprocess;
use crate::error::{Error, Result};
use crate::synth::Corpus;

/// Scores of one trained cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub n: usize,
    pub wins: usize,
    pub mcd_conv: f64,
    pub mcd_copy: f64,
    pub ser: f64,
    pub truncated: usize,
    /// Last teacher-forced validation L1 of finetuning.
    pub valid_l1: f64,
}

/// One line of the grid report. Exactly one of `metrics` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub variant: String,
    pub target_size: usize,
    pub config_hash: String,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

impl CellReport {
    fn failed(cfg: &RunConfig, e: &Error) -> Self {
        Self {
            variant: cfg.postprocess.name().into(),
            target_size: cfg.target_size,
            config_hash: cfg.hash(),
            metrics: None,
            error: Some(e.to_string()),
        }
    }
}

fn run_variant(cfg: &RunConfig, corpus: &Corpus, q: &Quantizer, persist: bool) -> Vec<CellReport> {
    let cells = || cfg.grid.sizes.iter().map(|&n| cfg.with_target_size(n));
    let pre = VariantData::new(cfg, corpus, q).and_then(|data| {
        let (params, log) = data.pretrained()?;
        if persist {
            store::save_seq2seq(cfg, &cfg.pretrain_path(), &data.model, &params, &log)?;
        }
        Ok((data, params))
    });
    let (data, pretrained) = match pre {
        Ok(x) => x,
        Err(e) => return cells().map(|c| CellReport::failed(&c, &e)).collect(),
    };
    cells()
        .map(|cell| {
            let run = || -> Result<CellReport> {
                let (params, log) = data.finetuned(cell.target_size, Some(&pretrained))?;
                let report = evaluate(&cell, corpus, q, &data.model, &params)?;
                if persist {
                    store::save_seq2seq(&cell, &cell.finetune_path(), &data.model, &params, &log)?;
                    store::write_json(&cell.eval_path(), &report)?;
                }
                Ok(CellReport {
                    variant: cell.postprocess.name().into(),
                    target_size: cell.target_size,
                    config_hash: cell.hash(),
                    metrics: Some(CellMetrics {
                        n: report.n,
                        wins: report.wins,
                        mcd_conv: report.mcd_conv,
                        mcd_copy: report.mcd_copy,
                        ser: report.ser,
                        truncated: report.truncated,
                        valid_l1: log.valid_l1.last().map_or(f64::NAN, |v| v.1),
                    }),
                    error: None,
                })
            };
            run().unwrap_or_else(|e| CellReport::failed(&cell, &e))
        })
        .collect()
}

/// Trains and scores every (variant, size) cell from one quantizer. Each
/// variant pretrains once and finetunes per size. Variants run on up to
/// `cfg.threads` workers; the report order and content do not depend on it.
pub fn run_grid(cfg: &RunConfig, corpus: &Corpus, q: &Quantizer, persist: bool) -> Vec<CellReport> {
    let variants: Vec<RunConfig> = cfg.grid.variants.iter().map(|&v| cfg.with_postprocess(v)).collect();
    let results: Mutex<BTreeMap<usize, Vec<CellReport>>> = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.threads.clamp(1, variants.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(v) = variants.get(i) else { break };
                let cells = run_variant(v, corpus, q, persist);
                results.lock().expect("grid worker panicked").insert(i, cells);
            });
        }
    });
    results.into_inner().expect("grid worker panicked").into_values().flatten().collect()
}

/// Per-cell means over several grids of the same shape. A cell that failed in
/// any grid is failed in the mean.
pub fn average_cells(grids: &[Vec<CellReport>]) -> Vec<CellReport> {
    let Some(first) = grids.first() else { return Vec::new() };
    first
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let all: Vec<&CellReport> = grids.iter().filter_map(|g| g.get(i)).collect();
            let metrics: Option<Vec<&CellMetrics>> = all.iter().map(|c| c.metrics.as_ref()).collect();
            let mut out = CellReport {
                config_hash: String::new(),
                ..c.clone()
            };
            match metrics {
                Some(ms) if ms.len() == grids.len() => {
                    let k = ms.len() as f64;
                    let mean = |f: fn(&CellMetrics) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / k;
                    out.metrics = Some(CellMetrics {
                        n: ms.iter().map(|m| m.n).sum(),
                        wins: ms.iter().map(|m| m.wins).sum(),
                        mcd_conv: mean(|m| m.mcd_conv),
                        mcd_copy: mean(|m| m.mcd_copy),
                        ser: mean(|m| m.ser),
                        truncated: ms.iter().map(|m| m.truncated).sum(),
                        valid_l1: mean(|m| m.valid_l1),
                    });
                    out.error = None;
                }
                _ => {
                    out.metrics = None;
                    out.error = Some("failed in at least one run".into());
                }
            }
            out
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn metrics(cells: &[CellReport], post: Postprocess, n: usize) -> Option<&CellMetrics> {
    cells
        .iter()
        .find(|c| c.variant == post.name() && c.target_size == n)
        .and_then(|c| c.metrics.as_ref())
}

fn between(x: f64, a: f64, b: f64) -> bool {
    a.min(b) <= x && x <= a.max(b)
}

/// Qualitative orderings expected of the grid: on the smallest target set
/// combine+separate beats none on distortion and symbol errors with
/// separate-only between them, it degrades less than none when data shrinks,
/// and on the largest set it beats copying on at least 80% of utterances.
pub fn ordering_checks(cells: &[CellReport]) -> Vec<OrderingCheck> {
    let sizes: Vec<usize> = cells.iter().map(|c| c.target_size).collect();
    let (Some(&small), Some(&large)) = (sizes.iter().min(), sizes.iter().max()) else {
        return Vec::new();
    };
    let (none, sep, both) = (Postprocess::NONE, Postprocess::SEPARATE, Postprocess::BOTH);
    let mut out = Vec::new();
    let mut check = |name: String, result: Option<(bool, String)>| {
        let (pass, detail) = result.unwrap_or((false, "cell missing or failed".into()));
        out.push(OrderingCheck { name, pass, detail });
    };
    check(
        format!("{} beats {} on mcd_conv and ser at {small}", both.name(), none.name()),
        metrics(cells, both, small).zip(metrics(cells, none, small)).map(|(b, n)| {
            (
                b.mcd_conv < n.mcd_conv && b.ser < n.ser,
                format!("mcd {:.3} vs {:.3}, ser {:.3} vs {:.3}", b.mcd_conv, n.mcd_conv, b.ser, n.ser),
            )
        }),
    );
    check(
        format!("{} lies between the others at {small}", sep.name()),
        metrics(cells, sep, small)
            .zip(metrics(cells, both, small).zip(metrics(cells, none, small)))
            .map(|(s, (b, n))| {
                (
                    between(s.mcd_conv, b.mcd_conv, n.mcd_conv) && between(s.ser, b.ser, n.ser),
                    format!("mcd {:.3}, ser {:.3}", s.mcd_conv, s.ser),
                )
            }),
    );
    if small != large {
        check(
            format!("{} degrades less than {} from {large} to {small}", both.name(), none.name()),
            metrics(cells, both, small)
                .zip(metrics(cells, both, large))
                .zip(metrics(cells, none, small).zip(metrics(cells, none, large)))
                .map(|((bs, bl), (ns, nl))| {
                    let (db, dn) = (bs.mcd_conv - bl.mcd_conv, ns.mcd_conv - nl.mcd_conv);
                    (db < dn, format!("mcd increase {db:.3} vs {dn:.3}"))
                }),
        );
    }
    check(
        format!("{} at {large} beats copying on >= 80% of utterances", both.name()),
        metrics(cells, both, large).map(|m| {
            (
                m.wins as f64 >= 0.8 * m.n as f64,
                format!("{}/{} wins", m.wins, m.n),
            )
        }),
    );
    out
}

pub fn render_table(cells: &[CellReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>6} {:>9} {:>9} {:>7} {:>7} {:>9}  status",
        "variant", "size", "mcd_conv", "mcd_copy", "ser", "wins", "valid_l1"
    );
    for c in cells {
        match (&c.metrics, &c.error) {
            (Some(m), _) => {
                let _ = writeln!(
                    out,
                    "{:<18} {:>6} {:>9.3} {:>9.3} {:>7.3} {:>7} {:>9.4}  ok",
                    c.variant,
                    c.target_size,
                    m.mcd_conv,
                    m.mcd_copy,
                    m.ser,
                    format!("{}/{}", m.wins, m.n),
                    m.valid_l1
                );
            }
            (None, e) => {
                let _ = writeln!(
                    out,
                    "{:<18} {:>6} {:>9} {:>9} {:>7} {:>7} {:>9}  failed: {}",
                    c.variant,
                    c.target_size,
                    "-",
                    "-",
                    "-",
                    "-",
                    "-",
                    e.as_deref().unwrap_or("unknown")
                );
            }
        }
    }
    out.push('\n');
    for chk in ordering_checks(cells) {
        let _ = writeln!(out, "[{}] {} ({})", if chk.pass { "PASS" } else { "FAIL" }, chk.name, chk.detail);
    }
    out
}

pub fn report_jsonl(cells: &[CellReport]) -> String {
    cells
        .iter()
        .map(|c| serde_json::to_string(c).expect("report serializes") + "\n")
        .collect()
}

pub fn load_report(path: &Path) -> Result<Vec<CellReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(variant: Postprocess, n: usize, mcd: f64, ser: f64, wins: usize) -> CellReport {
        CellReport {
            variant: variant.name().into(),
            target_size: n,
            config_hash: "h".into(),
            metrics: Some(CellMetrics {
                n: 50,
                wins,
                mcd_conv: mcd,
                mcd_copy: 28.0,
                ser,
                truncated: 0,
                valid_l1: 0.5,
            }),
            error: None,
        }
    }

    fn well_ordered() -> Vec<CellReport> {
        vec![
            cell(Postprocess::NONE, 200, 17.0, 0.2, 45),
            cell(Postprocess::NONE, 20, 30.0, 0.8, 10),
            cell(Postprocess::SEPARATE, 200, 16.0, 0.15, 46),
            cell(Postprocess::SEPARATE, 20, 25.0, 0.5, 20),
            cell(Postprocess::BOTH, 200, 15.0, 0.1, 48),
            cell(Postprocess::BOTH, 20, 18.0, 0.2, 40),
        ]
    }

    #[test]
    fn well_ordered_grid_passes_all_checks() {
        let checks = ordering_checks(&well_ordered());
        assert_eq!(checks.len(), 4);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn reversed_grid_fails() {
        let mut g = well_ordered();
        g[1] = cell(Postprocess::NONE, 20, 10.0, 0.1, 50);
        let checks = ordering_checks(&g);
        assert!(!checks[0].pass && !checks[1].pass && !checks[2].pass);
        assert!(checks[3].pass);
    }

    #[test]
    fn failed_cells_fail_their_checks_and_render() {
        let mut g = well_ordered();
        g[4].metrics = None;
        g[4].error = Some("boom".into());
        let checks = ordering_checks(&g);
        assert!(!checks[2].pass && !checks[3].pass);
        assert!(render_table(&g).contains("failed: boom"));
    }

    #[test]
    fn averaging() {
        let a = well_ordered();
        let mut b = well_ordered();
        b[0].metrics.as_mut().unwrap().mcd_conv = 19.0;
        let m = average_cells(&[a.clone(), b]);
        assert_eq!(m.len(), 6);
        assert!((m[0].metrics.as_ref().unwrap().mcd_conv - 18.0).abs() < 1e-12);
        assert_eq!(m[0].metrics.as_ref().unwrap().n, 100);
        let mut c = a.clone();
        c[5].metrics = None;
        assert!(average_cells(&[a, c])[5].metrics.is_none());
    }

    #[test]
    fn report_round_trip() {
        let g = well_ordered();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        std::fs::write(&p, report_jsonl(&g)).unwrap();
        let back = load_report(&p).unwrap();
        assert_eq!(back, g);
        assert_eq!(render_table(&back), render_table(&g));
    }
}
