//! End-to-end checks on the bundled Iris file and on synthetic data.

use std::cmp::Ordering;

use ispso_core::bpso::SwarmState;
use ispso_core::orchestrator::{run_observed, RunObserver};
use ispso_core::seeding::{boltzmann_probs, seed_particle, StorageList};
use ispso_core::{
    compare_solutions, evaluate_fitness, load_dataset, run_batch, run_once, stratified_kfold,
    AlgorithmConfig, Dataset, FeatureMask, KnnParams, LabelColumn, Variant,
};
use ispso_core::bpso::PsoParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn iris() -> Dataset {
    let p = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/iris.csv");
    load_dataset(p, &LabelColumn::default()).unwrap()
}

/// Leave-nothing-out brute force: for every fold, scan all training rows
/// for the nearest one.
fn oracle_cv_accuracy(d: &Dataset, folds: usize, seed: u64) -> f64 {
    let plan = stratified_kfold(d, folds, seed).unwrap();
    let x = ispso_core::normalize(d, -1.0, 1.0).unwrap().samples;
    let mut correct = 0;
    for f in 0..folds {
        let train = plan.train_rows(f);
        for q in plan.test_rows(f) {
            let mut best = (f64::INFINITY, usize::MAX);
            for &t in &train {
                let dist: f64 = x.row(q).iter().zip(x.row(t).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                if dist < best.0 || (dist == best.0 && t < best.1) {
                    best = (dist, t);
                }
            }
            correct += usize::from(d.labels[best.1] == d.labels[q]);
        }
    }
    correct as f64 / d.n_samples() as f64
}

#[test]
fn iris_shape() {
    let d = iris();
    assert_eq!((d.n_features(), d.n_samples(), d.n_classes()), (4, 150, 3));
    let plan = stratified_kfold(&d, 10, 42).unwrap();
    assert!(plan.fold_sizes().iter().all(|&s| s == 15));
}

#[test]
fn iris_all_features_accuracy() {
    let d = iris();
    let cfg = AlgorithmConfig::default();
    let ev = cfg.evaluator(&d).unwrap();
    let acc = ev.evaluate(&d.full_mask()).unwrap().cv_accuracy;
    assert!((0.90..=1.0).contains(&acc), "{acc}");
    assert!((acc - oracle_cv_accuracy(&d, 10, cfg.seed)).abs() < 1e-12);
}

#[test]
fn null_model_accuracy_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.gen(), rng.gen()]).collect();
    let y: Vec<usize> = (0..1000).map(|i| i % 2).collect();
    let d = Dataset::from_rows("null", &x, &y).unwrap();
    let plan = stratified_kfold(&d, 10, 1).unwrap();
    let acc = evaluate_fitness(&d, &FeatureMask::ones(2), &plan, &KnnParams::default())
        .unwrap()
        .cv_accuracy;
    assert!((0.40..=0.60).contains(&acc), "{acc}");
}

#[test]
fn seeding_draws_follow_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let trials = 10_000;
    let p = boltzmann_probs(&[100.0, 0.0, 0.0], 1.0, false).unwrap();
    let hits = (0..trials)
        .filter(|_| seed_particle(&p, 1, &mut rng).unwrap().get(0))
        .count();
    assert!(hits as f64 / trials as f64 >= 0.999);

    let m = 4;
    let p = boltzmann_probs(&[3.0; 4], 1.0, false).unwrap();
    let mut counts = vec![0usize; m];
    for _ in 0..trials {
        counts[seed_particle(&p, 1, &mut rng).unwrap().indices()[0]] += 1;
    }
    let q = 1.0 / m as f64;
    let sigma = (q * (1.0 - q) / trials as f64).sqrt();
    for c in counts {
        assert!((c as f64 / trials as f64 - q).abs() <= 3.0 * sigma, "{c}");
    }
    assert_eq!(seed_particle(&p, 4, &mut rng).unwrap(), FeatureMask::ones(4));
}

#[derive(Default)]
struct Recorder {
    histories: Vec<ispso_core::FitnessValue>,
    seeded_sizes: Vec<(usize, usize)>,
    storage_checks: usize,
    mutations: usize,
}

impl RunObserver for Recorder {
    fn on_iteration(&mut self, _t: usize, swarm: &SwarmState) {
        self.histories.push(swarm.gbest_fitness);
        for p in &swarm.particles {
            assert!(p.velocity.iter().all(|v| v.abs() <= 4.0));
            assert!(!p.position.none());
        }
    }

    fn on_seeding(&mut self, _t: usize, replaced: &[usize], swarm: &SwarmState, k: usize) {
        for &i in replaced {
            self.seeded_sizes.push((swarm.particles[i].position.count_ones(), k));
        }
    }

    fn on_storage(&mut self, _t: usize, list: &StorageList) {
        assert_eq!(list.votes.len(), 4);
        self.storage_checks += 1;
    }

    fn on_mutation(&mut self, gbest: &FeatureMask, mutant: &FeatureMask) {
        assert!(mutant.hamming(gbest) >= 1);
        self.mutations += 1;
    }
}

#[test]
fn iris_run_is_monotone_and_seeds_k_bits() {
    let d = iris();
    let cfg = AlgorithmConfig::default();
    let mut rec = Recorder::default();
    let res = run_observed(&d, &cfg, &mut rec).unwrap();
    assert_eq!(rec.histories, res.history);
    assert_eq!(res.history.len(), cfg.pso.max_iterations + 1);
    for w in res.history.windows(2) {
        assert_ne!(compare_solutions(&w[1], &w[0], 1e-9), Ordering::Less);
    }
    assert_eq!(res.best_fitness, *res.history.last().unwrap());
    assert_eq!(rec.storage_checks, cfg.pso.max_iterations / cfg.seeding.record_every);
    assert!(!rec.seeded_sizes.is_empty());
    assert!(rec.seeded_sizes.iter().all(|&(n, k)| n == k));
    assert!(rec.mutations > 0);

    let baseline = cfg.evaluator(&d).unwrap().evaluate(&d.full_mask()).unwrap().cv_accuracy;
    assert!(res.best_fitness.cv_accuracy >= baseline - 0.02);
}

#[test]
fn plain_variant_skips_seeding_and_mutation() {
    let d = iris();
    let cfg = AlgorithmConfig::default().plain();
    let mut rec = Recorder::default();
    run_observed(&d, &cfg, &mut rec).unwrap();
    assert_eq!(rec.storage_checks, 0);
    assert!(rec.seeded_sizes.is_empty());
    assert_eq!(rec.mutations, 0);
}

#[test]
fn batches_are_deterministic() {
    let d = iris();
    let cfg = AlgorithmConfig {
        pso: PsoParams { n_particles: 10, max_iterations: 15, ..PsoParams::default() },
        ..AlgorithmConfig::default()
    };
    let a = run_batch(&d, &cfg, 3, 100).unwrap();
    let b = run_batch(&d, &cfg, 3, 100).unwrap();
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.history, y.history);
        assert_eq!(x.best_mask, y.best_mask);
    }
    let key = |g: &ispso_core::Aggregate| {
        (g.n_runs, g.mean_accuracy, g.sd_accuracy, g.mean_subset_size, g.mean_f_measure)
    };
    assert_eq!(key(&a.aggregate), key(&b.aggregate));
    let single = run_once(&d, &AlgorithmConfig { seed: 101, ..cfg.clone() }).unwrap();
    assert_eq!(single.best_mask, a.runs[1].best_mask);
    assert_eq!(a.runs[2].variant, Variant::IspsoGlobal);
}
