//! Runs every (dataset, variant) pair of an experiment config and writes the artifacts.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ispso_core::seeding::feature_budget;
use ispso_core::{load_dataset, run_batch, BatchResult, Dataset, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetEntry, ExperimentSpec};
use crate::report::{
    emit_table, write_json, PairResults, ReportRow, ReportTable, RowStatus, RunRecord,
};

const PROTOCOL: &str = "stratified k-fold CV with the fold plan used during the search";

pub fn results_file_name(dataset: &str, variant: Variant) -> String {
    format!("{dataset}__{variant}.json")
}

pub fn run_file_name(dataset: &str, variant: Variant, seed: u64) -> String {
    format!("{dataset}__{variant}__seed{seed}.json")
}

#[derive(Serialize)]
struct PairTiming {
    dataset: String,
    variant: Variant,
    run_wall_times: Vec<f64>,
    mean_wall_time: f64,
}

#[derive(Serialize)]
struct Metadata {
    finished_unix: u64,
    jobs: usize,
    pairs: Vec<PairTiming>,
}

pub struct Outcome {
    pub table: ReportTable,
    pub written: Vec<PathBuf>,
}

fn run_pair(
    spec: &ExperimentSpec,
    entry: &DatasetEntry,
    data: &Dataset,
    variant: Variant,
) -> Result<(PairResults, BatchResult), String> {
    let cfg = spec.config_for(entry, variant);
    let batch = run_batch(data, &cfg, spec.n_runs, spec.base_seed).map_err(|e| e.to_string())?;
    let r = cfg.seeding.effective_r(data.n_samples());
    let k = feature_budget(data.n_features(), data.n_samples(), cfg.seeding.v, r)
        .map_err(|e| e.to_string())?;
    let results = PairResults {
        dataset: entry.name.clone(),
        variant,
        n_samples: data.n_samples(),
        n_features: data.n_features(),
        n_classes: data.n_classes(),
        feature_budget: k,
        protocol: format!("{}-fold {PROTOCOL}", cfg.cv_folds),
        config: cfg,
        runs: batch.runs.iter().map(RunRecord::from_run).collect(),
        aggregate: batch.aggregate.clone(),
    };
    Ok((results, batch))
}

fn write_pair(out: &Path, results: &PairResults) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let p = out.join(results_file_name(&results.dataset, results.variant));
    write_json(results, &p)?;
    written.push(p);
    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir)?;
    for run in &results.runs {
        let p = runs_dir.join(run_file_name(&results.dataset, results.variant, run.seed));
        write_json(run, &p)?;
        written.push(p);
    }
    Ok(written)
}

/// Executes all pairs, up to `spec.jobs` at a time. A failing pair becomes a
/// failed row; the others still run.
pub fn execute(spec: &ExperimentSpec) -> std::io::Result<Outcome> {
    std::fs::create_dir_all(&spec.output)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(std::io::Error::other)?;

    let pairs: Vec<(usize, Variant)> = (0..spec.datasets.len())
        .flat_map(|i| spec.variants.iter().map(move |&v| (i, v)))
        .collect();
    let loaded: Vec<Result<Dataset, String>> = spec
        .datasets
        .iter()
        .map(|d| {
            load_dataset(&d.path, &d.label)
                .map(|mut data| {
                    data.name = d.name.clone();
                    data
                })
                .map_err(|e| e.to_string())
        })
        .collect();

    let outcomes: Vec<Result<(PairResults, BatchResult), String>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(i, v)| {
                let data = loaded[i].as_ref().map_err(|e| e.clone())?;
                run_pair(spec, &spec.datasets[i], data, v)
            })
            .collect()
    });

    let mut table = ReportTable::default();
    let mut written = Vec::new();
    let mut timings = Vec::new();
    for (&(i, variant), outcome) in pairs.iter().zip(outcomes) {
        let dataset = spec.datasets[i].name.clone();
        let status = match outcome {
            Ok((results, batch)) => {
                written.extend(write_pair(&spec.output, &results)?);
                let times: Vec<f64> = batch.runs.iter().map(|r| r.wall_time).collect();
                timings.push(PairTiming {
                    dataset: dataset.clone(),
                    variant,
                    mean_wall_time: batch.aggregate.mean_wall_time,
                    run_wall_times: times,
                });
                let a = &results.aggregate;
                RowStatus::Done {
                    mean_accuracy: a.mean_accuracy,
                    sd_accuracy: a.sd_accuracy,
                    mean_subset_size: a.mean_subset_size,
                    mean_f_measure: a.mean_f_measure,
                    best_mask: results.best_run().map(|r| r.mask.clone()).unwrap_or_default(),
                    mean_wall_time: batch.aggregate.mean_wall_time,
                }
            }
            Err(msg) => RowStatus::Failed(msg),
        };
        table.rows.push(ReportRow {
            dataset,
            variant,
            status,
            best: false,
        });
    }
    table.flag_best();

    for &format in &spec.formats {
        let p = spec.output.join(format.file_name());
        emit_table(&table, format, &p)?;
        written.push(p);
    }
    let meta = Metadata {
        finished_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        jobs: spec.jobs,
        pairs: timings,
    };
    let p = spec.output.join("timing.json");
    write_json(&meta, &p)?;
    written.push(p);

    Ok(Outcome { table, written })
}
