//! Result files and the summary tables derived from them.

use std::fmt::Write as _;
use std::path::Path;

use ispso_core::{AlgorithmConfig, Aggregate, RunResult, Variant};
use serde::{Deserialize, Serialize};

use crate::config::ReportFormat;

/// Two mean accuracies this close count as a tie when flagging the best row.
pub const BEST_TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub n_selected: usize,
    /// Selected features, 1-based.
    pub mask: Vec<usize>,
    pub distinct_evaluations: usize,
    /// Global-best accuracy after initialization and after each iteration.
    pub history: Vec<f64>,
}

impl RunRecord {
    pub fn from_run(run: &RunResult) -> Self {
        Self {
            seed: run.seed,
            accuracy: run.best_fitness.cv_accuracy,
            precision: run.prf.precision,
            recall: run.prf.recall,
            f_measure: run.prf.f_measure,
            n_selected: run.best_mask.count_ones(),
            mask: run.best_mask.indices().iter().map(|i| i + 1).collect(),
            distinct_evaluations: run.distinct_evaluations,
            history: run.history.iter().map(|f| f.cv_accuracy).collect(),
        }
    }
}

/// One machine-readable file per (dataset, variant). Nothing here depends
/// on the clock, so reruns produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResults {
    pub dataset: String,
    pub variant: Variant,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub feature_budget: usize,
    /// Accuracies come from the same fold plan the search optimized on.
    pub protocol: String,
    pub config: AlgorithmConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

impl PairResults {
    /// Run with the highest accuracy, fewer features breaking ties, then
    /// the lower seed.
    pub fn best_run(&self) -> Option<&RunRecord> {
        self.runs.iter().reduce(|best, r| {
            let better = r.accuracy > best.accuracy + BEST_TIE
                || ((r.accuracy - best.accuracy).abs() <= BEST_TIE && r.n_selected < best.n_selected);
            if better {
                r
            } else {
                best
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Done {
        mean_accuracy: f64,
        sd_accuracy: f64,
        mean_subset_size: f64,
        mean_f_measure: f64,
        best_mask: Vec<usize>,
        mean_wall_time: f64,
    },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub variant: Variant,
    pub status: RowStatus,
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Marks every completed row whose mean accuracy ties the best of its
    /// dataset.
    pub fn flag_best(&mut self) {
        let datasets: Vec<String> = self.rows.iter().map(|r| r.dataset.clone()).collect();
        for name in datasets {
            let top = self
                .rows
                .iter()
                .filter(|r| r.dataset == name)
                .filter_map(|r| match r.status {
                    RowStatus::Done { mean_accuracy, .. } => Some(mean_accuracy),
                    RowStatus::Failed(_) => None,
                })
                .fold(f64::NEG_INFINITY, f64::max);
            for r in self.rows.iter_mut().filter(|r| r.dataset == name) {
                r.best = matches!(r.status, RowStatus::Done { mean_accuracy, .. }
                    if mean_accuracy >= top - BEST_TIE);
            }
        }
    }

    pub fn failures(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r.status, RowStatus::Failed(_)))
            .count()
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn mask_list(mask: &[usize]) -> String {
    mask.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Cells shared by every format: dataset, variant, accuracy, SD, subset
/// size, F-measure, best-run mask, wall time.
fn cells(row: &ReportRow) -> Vec<String> {
    let mut out = vec![row.dataset.clone(), row.variant.to_string()];
    match &row.status {
        RowStatus::Done {
            mean_accuracy,
            sd_accuracy,
            mean_subset_size,
            mean_f_measure,
            best_mask,
            mean_wall_time,
        } => out.extend([
            pct(*mean_accuracy),
            pct(*sd_accuracy),
            format!("{mean_subset_size:.2}"),
            pct(*mean_f_measure),
            mask_list(best_mask),
            format!("{mean_wall_time:.3}"),
        ]),
        RowStatus::Failed(msg) => {
            out.extend(std::iter::repeat_n("-".to_string(), 5));
            out.push(format!("failed: {msg}"));
        }
    }
    out
}

const HEADER: [&str; 8] = [
    "dataset",
    "variant",
    "accuracy_pct",
    "sd_pct",
    "subset_size",
    "f_measure_pct",
    "best_mask",
    "wall_time_s",
];

pub fn render(table: &ReportTable, format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Delimited => {
            let mut w = csv::Writer::from_writer(vec![]);
            let mut header: Vec<&str> = HEADER.to_vec();
            header.push("best");
            w.write_record(&header).expect("in-memory write");
            for row in &table.rows {
                let mut c = cells(row);
                c.push(row.best.to_string());
                w.write_record(&c).expect("in-memory write");
            }
            s = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 cells");
        }
        ReportFormat::Markdown => {
            let _ = writeln!(s, "| {} |", HEADER.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(HEADER.len()));
            for row in &table.rows {
                let mut c = cells(row);
                if row.best {
                    c[2] = format!("**{}**", c[2]);
                }
                let _ = writeln!(s, "| {} |", c.join(" | "));
            }
        }
        ReportFormat::Text => {
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let mut c = cells(r);
                    c.insert(0, if r.best { "*".into() } else { String::new() });
                    c
                })
                .collect();
            let mut header: Vec<String> = vec![String::new()];
            header.extend(HEADER.iter().map(|h| h.to_string()));
            let widths: Vec<usize> = (0..header.len())
                .map(|i| {
                    rows.iter()
                        .map(|r| r[i].len())
                        .chain([header[i].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            for line in std::iter::once(&header).chain(&rows) {
                let padded: Vec<String> = line
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect();
                let _ = writeln!(s, "{}", padded.join("  ").trim_end());
            }
            let _ = writeln!(s, "\n(* marks the best mean accuracy per dataset)");
        }
    }
    s
}

pub fn emit_table(table: &ReportTable, format: ReportFormat, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render(table, format))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

pub fn read_results(path: &Path) -> Result<PairResults, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Human-readable view of one results file.
pub fn describe(r: &PairResults) -> String {
    let mut s = String::new();
    let a = &r.aggregate;
    let _ = writeln!(s, "{} / {}", r.dataset, r.variant);
    let _ = writeln!(
        s,
        "  {} samples, {} features, {} classes, budget K = {}",
        r.n_samples, r.n_features, r.n_classes, r.feature_budget
    );
    let _ = writeln!(
        s,
        "  accuracy {} ± {} over {} runs, mean subset {:.2}, mean F {}",
        pct(a.mean_accuracy),
        pct(a.sd_accuracy),
        a.n_runs,
        a.mean_subset_size,
        pct(a.mean_f_measure)
    );
    let _ = writeln!(s, "  {:>6}  {:>8}  {:>8}  {:>4}  mask", "seed", "acc%", "F%", "n");
    for run in &r.runs {
        let _ = writeln!(
            s,
            "  {:>6}  {:>8}  {:>8}  {:>4}  {}",
            run.seed,
            pct(run.accuracy),
            pct(run.f_measure),
            run.n_selected,
            mask_list(&run.mask)
        );
    }
    s
}
