//! Experiment config files: TOML in, validated `ExperimentSpec` out.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ispso_core::bpso::PsoParams;
use ispso_core::chaos::{ChaosMap, VelocityInit};
use ispso_core::mutation::{MutationMode, MutationParams};
use ispso_core::orchestrator::ChaosSettings;
use ispso_core::seeding::SeedingParams;
use ispso_core::{AlgorithmConfig, KnnParams, LabelColumn, Normalization, Variant};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Delimited,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Text => "summary.txt",
            ReportFormat::Delimited => "summary.csv",
            ReportFormat::Markdown => "summary.md",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    experiment: RawExperiment,
    /// Optional TOML file whose `[[dataset]]` entries are appended.
    manifest: Option<PathBuf>,
    #[serde(default)]
    dataset: Vec<RawDataset>,
    #[serde(default)]
    pso: RawPso,
    #[serde(default)]
    chaos: RawChaos,
    #[serde(default)]
    seeding: RawSeeding,
    #[serde(default)]
    mutation: RawMutation,
    #[serde(default)]
    knn: RawKnn,
    #[serde(default)]
    cv: RawCv,
    #[serde(default)]
    fitness: RawFitness,
    #[serde(default)]
    budget: RawBudget,
    #[serde(default)]
    data: RawData,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    dataset: Vec<RawDataset>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    runs: Option<usize>,
    output: Option<PathBuf>,
    variants: Option<Vec<Variant>>,
    formats: Option<Vec<ReportFormat>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    /// Base seed; run i of a batch uses `seed + i`.
    seed: Option<u64>,
    /// Pairs executed at once.
    jobs: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    name: String,
    path: PathBuf,
    label: Option<LabelColumn>,
    r: Option<f64>,
    v: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPso {
    particles: Option<usize>,
    iterations: Option<usize>,
    c1: Option<f64>,
    c2: Option<f64>,
    vmax: Option<f64>,
    inertia: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChaos {
    map: Option<ChaosMap>,
    alpha: Option<f64>,
    seed: Option<f64>,
    burn_in: Option<usize>,
    velocity_init: Option<VelocityInit>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeeding {
    r: Option<f64>,
    v: Option<f64>,
    temperature: Option<f64>,
    record_every: Option<usize>,
    top_fraction: Option<f64>,
    seed_fraction: Option<f64>,
    invert_sign: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMutation {
    trigger_prob: Option<f64>,
    per_bit_prob: Option<f64>,
    mode: Option<MutationMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKnn {
    k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCv {
    folds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFitness {
    tie_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    enforce_final: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    normalization: Option<Normalization>,
    lower: Option<f64>,
    upper: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    pub label: LabelColumn,
    /// Per-dataset `seeding.r` / `seeding.v` overrides.
    pub r: Option<f64>,
    pub v: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetEntry>,
    pub variants: Vec<Variant>,
    /// Shared settings; the variant and seed fields are set per pair.
    pub algorithm: AlgorithmConfig,
    pub n_runs: usize,
    pub base_seed: u64,
    pub output: PathBuf,
    pub jobs: usize,
    pub formats: Vec<ReportFormat>,
}

impl ExperimentSpec {
    /// Config for one (dataset, variant) pair with overrides applied.
    pub fn config_for(&self, dataset: &DatasetEntry, variant: Variant) -> AlgorithmConfig {
        let mut cfg = self.algorithm.clone();
        cfg.variant = variant;
        cfg.seed = self.base_seed;
        if dataset.r.is_some() {
            cfg.seeding.r = dataset.r;
        }
        if let Some(v) = dataset.v {
            cfg.seeding.v = v;
        }
        cfg
    }
}

/// Command-line and environment overrides, applied after the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_SEED: u64 = 1;

pub fn parse_spec(path: &Path, overrides: &Overrides) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_spec_str(&text, base, overrides)
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_spec_str(
    text: &str,
    base: &Path,
    overrides: &Overrides,
) -> Result<ExperimentSpec, ConfigError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;

    let mut raw_datasets = raw.dataset;
    if let Some(m) = &raw.manifest {
        let m = base.join(m);
        let text = std::fs::read_to_string(&m).map_err(|source| ConfigError::Read {
            path: m.clone(),
            source,
        })?;
        let manifest: RawManifest = toml::from_str(&text)
            .map_err(|e| ConfigError::Syntax(format!("{}: {e}", m.display())))?;
        let mbase = m.parent().unwrap_or(base).to_path_buf();
        raw_datasets.extend(manifest.dataset.into_iter().map(|mut d| {
            d.path = mbase.join(&d.path);
            d
        }));
    }
    if raw_datasets.is_empty() {
        return Err(invalid("dataset", "at least one [[dataset]] entry is required"));
    }

    let mut seen = HashSet::new();
    let mut datasets = Vec::with_capacity(raw_datasets.len());
    for d in raw_datasets {
        let key = format!("dataset.{}", d.name);
        if d.name.is_empty() {
            return Err(invalid("dataset.name", "must not be empty"));
        }
        if !seen.insert(d.name.clone()) {
            return Err(invalid("dataset.name", format!("duplicate dataset name {:?}", d.name)));
        }
        let path = base.join(&d.path);
        if !path.is_file() {
            return Err(invalid(
                format!("{key}.path"),
                format!("{} does not exist", path.display()),
            ));
        }
        if let Some(r) = d.r {
            if !(1.0..=50.0).contains(&r) {
                return Err(invalid(format!("{key}.r"), format!("{r} is outside [1, 50]")));
            }
        }
        if let Some(v) = d.v {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{key}.v"), format!("{v} is outside [0, 1]")));
            }
        }
        datasets.push(DatasetEntry {
            name: d.name,
            path,
            label: d.label.unwrap_or_default(),
            r: d.r,
            v: d.v,
        });
    }

    let pso_default = PsoParams::default();
    let pso = PsoParams {
        c1: raw.pso.c1.unwrap_or(pso_default.c1),
        c2: raw.pso.c2.unwrap_or(pso_default.c2),
        vmax: raw.pso.vmax.unwrap_or(pso_default.vmax),
        inertia: raw.pso.inertia.unwrap_or(pso_default.inertia),
        n_particles: raw.pso.particles.unwrap_or(pso_default.n_particles),
        max_iterations: raw.pso.iterations.unwrap_or(pso_default.max_iterations),
    };
    let chaos_default = ChaosSettings::default();
    let chaos = ChaosSettings {
        map: raw.chaos.map.unwrap_or(chaos_default.map),
        alpha: raw.chaos.alpha.unwrap_or(chaos_default.alpha),
        seed: raw.chaos.seed.or(chaos_default.seed),
        burn_in: raw.chaos.burn_in.unwrap_or(chaos_default.burn_in),
        velocity_init: raw.chaos.velocity_init.unwrap_or(chaos_default.velocity_init),
    };
    let sd = SeedingParams::default();
    let seeding = SeedingParams {
        r: raw.seeding.r.or(sd.r),
        v: raw.seeding.v.unwrap_or(sd.v),
        temperature: raw.seeding.temperature.or(sd.temperature),
        record_every: raw.seeding.record_every.unwrap_or(sd.record_every),
        top_fraction: raw.seeding.top_fraction.unwrap_or(sd.top_fraction),
        seed_fraction: raw.seeding.seed_fraction.unwrap_or(sd.seed_fraction),
        invert_sign: raw.seeding.invert_sign.unwrap_or(sd.invert_sign),
    };
    let md = MutationParams::default();
    let mutation = MutationParams {
        trigger_prob: raw.mutation.trigger_prob.unwrap_or(md.trigger_prob),
        per_bit_prob: raw.mutation.per_bit_prob.or(md.per_bit_prob),
        mode: raw.mutation.mode.unwrap_or(md.mode),
    };
    let kd = KnnParams::default();
    let knn = KnnParams {
        k: raw.knn.k.unwrap_or(kd.k),
        tie_eps: raw.fitness.tie_eps.unwrap_or(kd.tie_eps),
    };
    let ad = AlgorithmConfig::default();
    let algorithm = AlgorithmConfig {
        variant: Variant::IspsoGlobal,
        pso,
        chaos,
        seeding,
        mutation,
        knn,
        cv_folds: raw.cv.folds.unwrap_or(ad.cv_folds),
        normalization: raw.data.normalization.unwrap_or(ad.normalization),
        bounds: (
            raw.data.lower.unwrap_or(ad.bounds.0),
            raw.data.upper.unwrap_or(ad.bounds.1),
        ),
        enforce_final_budget: raw.budget.enforce_final.unwrap_or(ad.enforce_final_budget),
        seed: ad.seed,
    };
    algorithm.validate().map_err(|e| match e {
        ispso_core::Error::InvalidParameter { name, reason } => invalid(name, reason),
        other => invalid("config", other.to_string()),
    })?;

    let variants = raw
        .experiment
        .variants
        .unwrap_or_else(|| vec![Variant::IspsoGlobal, Variant::PlainBpso]);
    if variants.is_empty() {
        return Err(invalid("experiment.variants", "must list at least one variant"));
    }
    let mut vs = HashSet::new();
    if let Some(v) = variants.iter().find(|v| !vs.insert(**v)) {
        return Err(invalid("experiment.variants", format!("{v} listed twice")));
    }

    let n_runs = overrides
        .runs
        .or(raw.experiment.runs)
        .unwrap_or(DEFAULT_RUNS);
    if n_runs == 0 {
        return Err(invalid("experiment.runs", "must be at least 1"));
    }
    let jobs = overrides.jobs.or(raw.run.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(invalid("run.jobs", "must be at least 1"));
    }
    let formats = raw
        .experiment
        .formats
        .unwrap_or_else(|| vec![ReportFormat::Text, ReportFormat::Markdown]);
    let output = match &overrides.output {
        Some(o) => o.clone(),
        None => base.join(raw.experiment.output.unwrap_or_else(|| PathBuf::from("results"))),
    };

    Ok(ExperimentSpec {
        datasets,
        variants,
        algorithm,
        n_runs,
        base_seed: overrides.seed.or(raw.run.seed).unwrap_or(DEFAULT_SEED),
        output,
        jobs,
        formats,
    })
}
