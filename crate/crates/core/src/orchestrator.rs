//! The full search loop and batch driver.
//!
//! One run: compute the feature budget, initialize the swarm (chaotic orbit
//! or uniform bits), then per iteration record votes and seed particles when
//! due, move the remaining particles, optionally inject a Gbest mutant, and
//! evaluate. The plain variant skips voting, seeding and mutation and starts
//! from uniform random bits, so both share every other component.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bpso::{update_bests, update_position, update_velocity, PsoParams, SwarmState};
use crate::chaos::{init_population, random_population, ChaosConfig, ChaosMap, VelocityInit};
use crate::data::{normalize, stratified_kfold, Dataset, FeatureMask, DEFAULT_BOUNDS};
use crate::error::{invalid, Result};
use crate::fitness::{FitnessEvaluator, FitnessValue, KnnParams, Scaling};
use crate::metrics::{confusion, precision_recall_f, Prf};
use crate::mutation::{mutate_gbest, replace_gworst, MutationParams};
use crate::seeding::{
    apply_seeding, enforce_budget, feature_budget, CorrelationProfile, SeedingParams, StorageList,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    IspsoGlobal,
    PlainBpso,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::IspsoGlobal => "ispso_global",
            Variant::PlainBpso => "plain_bpso",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the scaling extrema come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Full,
    PerFold,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosSettings {
    pub map: ChaosMap,
    pub alpha: f64,
    /// Orbit seed in (0, 1); `None` derives one from the run seed.
    pub seed: Option<f64>,
    pub burn_in: usize,
    pub velocity_init: VelocityInit,
}

impl Default for ChaosSettings {
    fn default() -> Self {
        let base = ChaosConfig::default();
        Self {
            map: base.map,
            alpha: base.alpha,
            seed: None,
            burn_in: base.burn_in,
            velocity_init: VelocityInit::Zero,
        }
    }
}

impl ChaosSettings {
    fn config(&self, seed_x0: f64) -> ChaosConfig {
        ChaosConfig {
            map: self.map,
            alpha: self.alpha,
            seed_x0,
            burn_in: self.burn_in,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    pub pso: PsoParams,
    pub chaos: ChaosSettings,
    pub seeding: SeedingParams,
    pub mutation: MutationParams,
    pub knn: KnnParams,
    pub cv_folds: usize,
    pub normalization: Normalization,
    pub bounds: (f64, f64),
    /// Prune the reported best subset down to the feature budget.
    pub enforce_final_budget: bool,
    pub seed: u64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            variant: Variant::IspsoGlobal,
            pso: PsoParams::default(),
            chaos: ChaosSettings::default(),
            seeding: SeedingParams::default(),
            mutation: MutationParams::default(),
            knn: KnnParams::default(),
            cv_folds: 10,
            normalization: Normalization::Full,
            bounds: DEFAULT_BOUNDS,
            enforce_final_budget: false,
            seed: 42,
        }
    }
}

impl AlgorithmConfig {
    pub fn plain(&self) -> Self {
        Self {
            variant: Variant::PlainBpso,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pso.validate()?;
        self.seeding.validate()?;
        self.mutation.validate()?;
        self.knn.validate()?;
        if let Some(x0) = self.chaos.seed {
            self.chaos.config(x0).validate()?;
        } else {
            self.chaos.config(0.3).validate()?;
        }
        if self.cv_folds < 2 {
            return Err(invalid("cv.folds", "need at least 2 folds"));
        }
        if !(self.bounds.1 > self.bounds.0) {
            return Err(invalid("data.bounds", "upper must exceed lower"));
        }
        Ok(())
    }

    /// Checks the parts that depend on the dataset shape.
    pub fn validate_for(&self, d: &Dataset) -> Result<()> {
        self.validate()?;
        let r = self.seeding.effective_r(d.n_samples());
        feature_budget(d.n_features(), d.n_samples(), self.seeding.v, r)?;
        if self.cv_folds > d.n_samples() {
            return Err(invalid(
                "cv.folds",
                format!("{} folds exceed {} samples", self.cv_folds, d.n_samples()),
            ));
        }
        if self.knn.k >= d.n_samples() {
            return Err(invalid("knn.k", "must be smaller than the sample count"));
        }
        Ok(())
    }

    pub fn scaling(&self) -> Scaling {
        let (lower, upper) = self.bounds;
        match self.normalization {
            Normalization::Full => Scaling::Full { lower, upper },
            Normalization::PerFold => Scaling::PerFold { lower, upper },
            Normalization::None => Scaling::None,
        }
    }

    /// Fold plan, scaled data and classifier shared by every particle of a
    /// run with this seed.
    pub fn evaluator(&self, d: &Dataset) -> Result<FitnessEvaluator> {
        let plan = stratified_kfold(d, self.cv_folds, self.seed)?;
        FitnessEvaluator::new(d, plan, self.knn, self.scaling())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub variant: Variant,
    pub best_mask: FeatureMask,
    pub best_fitness: FitnessValue,
    /// Global-best fitness after initialization and after every iteration.
    pub history: Vec<FitnessValue>,
    pub feature_budget: usize,
    pub prf: Prf,
    pub distinct_evaluations: usize,
    #[serde(skip)]
    pub wall_time: f64,
}

/// Hooks for observing a run from tests and tools.
pub trait RunObserver {
    fn on_iteration(&mut self, _iteration: usize, _swarm: &SwarmState) {}
    fn on_seeding(&mut self, _iteration: usize, _replaced: &[usize], _swarm: &SwarmState, _k: usize) {}
    fn on_storage(&mut self, _iteration: usize, _list: &StorageList) {}
    fn on_mutation(&mut self, _gbest: &FeatureMask, _mutant: &FeatureMask) {}
}

struct NoObserver;
impl RunObserver for NoObserver {}

fn derive_chaos_seed(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x: f64 = rng.gen_range(0.01..0.99);
        if ![0.25, 0.5, 0.75].contains(&x) {
            return x;
        }
    }
}

pub fn run_once(d: &Dataset, cfg: &AlgorithmConfig) -> Result<RunResult> {
    run_observed(d, cfg, &mut NoObserver)
}

pub fn run_observed(
    d: &Dataset,
    cfg: &AlgorithmConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunResult> {
    cfg.validate_for(d)?;
    let started = Instant::now();
    let n = cfg.pso.n_particles;
    let n_features = d.n_features();
    let ispso = cfg.variant == Variant::IspsoGlobal;
    let tie_eps = cfg.knn.tie_eps;

    let r = cfg.seeding.effective_r(d.n_samples());
    let k = feature_budget(n_features, d.n_samples(), cfg.seeding.v, r)?;

    let evaluator = cfg.evaluator(d)?;
    let profile = match cfg.normalization {
        Normalization::Full => CorrelationProfile::from_dataset(evaluator.dataset()),
        _ => CorrelationProfile::from_dataset(&normalize(d, cfg.bounds.0, cfg.bounds.1)?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let population = if ispso {
        let x0 = match cfg.chaos.seed {
            Some(x0) => x0,
            None => derive_chaos_seed(&mut rng),
        };
        init_population(
            n,
            n_features,
            &cfg.chaos.config(x0),
            cfg.chaos.velocity_init,
            cfg.pso.vmax,
            &mut rng,
        )?
    } else {
        random_population(n, n_features, &mut rng)
    };

    let fitnesses = evaluator.evaluate_all(&population.positions)?;
    let mut swarm = SwarmState::new(population.positions, population.velocities, fitnesses, tie_eps)?;
    let mut history = vec![swarm.gbest_fitness];
    observer.on_iteration(0, &swarm);

    let mut storage = StorageList::new(n_features, cfg.seeding.top_fraction, cfg.seeding.record_every);

    for t in 1..=cfg.pso.max_iterations {
        swarm.iteration = t;
        let mut fresh = vec![false; n];

        if ispso && storage.is_due(t) {
            let current = swarm.current_fitnesses();
            storage.record_votes(&swarm, &current, t, tie_eps)?;
            observer.on_storage(t, &storage);
            let replaced = apply_seeding(
                &mut swarm,
                &storage,
                &cfg.seeding,
                k,
                &profile,
                tie_eps,
                &mut rng,
            )?;
            if !replaced.is_empty() {
                let seeded: Vec<FeatureMask> =
                    replaced.iter().map(|&i| swarm.particles[i].position.clone()).collect();
                let seeded_fit = evaluator.evaluate_all(&seeded)?;
                let mut all = swarm.current_fitnesses();
                for (&i, f) in replaced.iter().zip(seeded_fit) {
                    all[i] = f;
                    fresh[i] = true;
                }
                update_bests(&mut swarm, &all, tie_eps)?;
                observer.on_seeding(t, &replaced, &swarm, k);
            }
        }

        let gbest = swarm.gbest_position.clone();
        for (i, p) in swarm.particles.iter_mut().enumerate() {
            if fresh[i] {
                continue;
            }
            let v = update_velocity(p, &gbest, &cfg.pso, &mut rng)?;
            p.position = update_position(&v, &mut rng);
            p.velocity = v;
        }

        if ispso {
            let fire = rng.gen::<f64>() < cfg.mutation.trigger_prob;
            if fire {
                let mutant = mutate_gbest(&swarm.gbest_position, &cfg.mutation, &mut rng);
                observer.on_mutation(&swarm.gbest_position, &mutant);
                if !mutant.none() {
                    let f = evaluator.evaluate(&mutant)?;
                    replace_gworst(&mut swarm, mutant, f, tie_eps);
                }
            }
        }

        let fitnesses = evaluator.evaluate_all(&swarm.positions())?;
        update_bests(&mut swarm, &fitnesses, tie_eps)?;
        history.push(swarm.gbest_fitness);
        observer.on_iteration(t, &swarm);
    }

    let (best_mask, best_fitness) = if cfg.enforce_final_budget && swarm.gbest_position.count_ones() > k {
        let pruned = enforce_budget(&swarm.gbest_position, &profile, &storage.votes, k)?;
        let f = evaluator.evaluate(&pruned)?;
        (pruned, f)
    } else {
        (swarm.gbest_position.clone(), swarm.gbest_fitness)
    };

    let predicted = evaluator.predictions(&best_mask)?;
    let prf = precision_recall_f(&confusion(&d.labels, &predicted, d.n_classes())?);

    Ok(RunResult {
        seed: cfg.seed,
        variant: cfg.variant,
        best_mask,
        best_fitness,
        history,
        feature_budget: k,
        prf,
        distinct_evaluations: evaluator.distinct_evaluations(),
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_runs: usize,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub mean_subset_size: f64,
    pub mean_f_measure: f64,
    #[serde(skip)]
    pub mean_wall_time: f64,
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_runs(runs: &[RunResult]) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.best_fitness.cv_accuracy).collect();
        let (mean_accuracy, sd_accuracy) = mean_sd(&acc);
        let n = runs.len().max(1) as f64;
        Self {
            n_runs: runs.len(),
            mean_accuracy,
            sd_accuracy,
            mean_subset_size: runs.iter().map(|r| r.best_mask.count_ones() as f64).sum::<f64>() / n,
            mean_f_measure: runs.iter().map(|r| r.prf.f_measure).sum::<f64>() / n,
            mean_wall_time: runs.iter().map(|r| r.wall_time).sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

/// `n_runs` independent runs with seeds `base_seed + i`, executed
/// concurrently; results come back in seed order.
pub fn run_batch(d: &Dataset, cfg: &AlgorithmConfig, n_runs: usize, base_seed: u64) -> Result<BatchResult> {
    use rayon::prelude::*;
    if n_runs == 0 {
        return Err(invalid("runs", "need at least one run"));
    }
    cfg.validate_for(d)?;
    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = AlgorithmConfig {
                seed: base_seed + i,
                ..cfg.clone()
            };
            run_once(d, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate::from_runs(&runs);
    Ok(BatchResult { runs, aggregate })
}
