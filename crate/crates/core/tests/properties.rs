//! Property tests for the numeric building blocks, each checked against a
//! small brute-force oracle written here rather than in the library.

use std::cmp::Ordering;

use ispso_core::bpso::{sigmoid, update_bests, update_velocity_with, ParticleState, PsoParams, SwarmState};
use ispso_core::chaos::{chaotic_sequence, ChaosConfig, ChaosMap};
use ispso_core::fitness::{compare_solutions, knn_predict, FitnessValue, KnnParams};
use ispso_core::metrics::{confusion, precision_recall_f};
use ispso_core::mutation::{mutate_gbest, MutationParams};
use ispso_core::seeding::{
    apply_seeding, boltzmann_probs, feature_budget, pearson, CorrelationProfile, SeedingParams,
    StorageList,
};
use ispso_core::{normalize, project, stratified_kfold, Dataset, FeatureMask};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset_strategy(max_rows: usize, max_features: usize) -> impl Strategy<Value = Dataset> {
    (4..=max_rows, 1..=max_features, 2usize..=3, any::<u64>()).prop_map(|(rows, f, c, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // small integer grid so exact distance ties actually occur
        let x: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..f).map(|_| rng.gen_range(0..4) as f64).collect())
            .collect();
        let y: Vec<usize> = (0..rows).map(|i| if i < c { i } else { rng.gen_range(0..c) }).collect();
        Dataset::from_rows("rand", &x, &y).unwrap()
    })
}

/// Sort every training row by (distance, index), take k, majority vote,
/// break vote ties by the earliest tied class in that order.
fn oracle_knn(train: &Dataset, query: &[f64], k: usize) -> usize {
    let mut rows: Vec<(f64, usize)> = (0..train.n_samples())
        .map(|i| {
            let d2: f64 = train
                .samples
                .row(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2.sqrt(), i)
        })
        .collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let nearest = &rows[..k];
    let mut counts = vec![0usize; train.n_classes()];
    for &(_, i) in nearest {
        counts[train.labels[i]] += 1;
    }
    let top = *counts.iter().max().unwrap();
    nearest
        .iter()
        .map(|&(_, i)| train.labels[i])
        .find(|&c| counts[c] == top)
        .unwrap()
}

fn fitness_strategy() -> impl Strategy<Value = FitnessValue> {
    (0u32..=20, 1usize..6).prop_map(|(a, n)| FitnessValue::new(a as f64 / 20.0, n))
}

fn swarm_from(masks: Vec<FeatureMask>, fits: Vec<FitnessValue>) -> SwarmState {
    let d = masks[0].len();
    let vel = vec![vec![0.0; d]; masks.len()];
    SwarmState::new(masks, vel, fits, 1e-9).unwrap()
}

fn masks_strategy(n: usize, d: usize) -> impl Strategy<Value = Vec<FeatureMask>> {
    prop::collection::vec(prop::collection::vec(any::<bool>(), d), n).prop_map(|bits| {
        bits.into_iter()
            .map(|mut b| {
                if !b.contains(&true) {
                    b[0] = true;
                }
                FeatureMask::new(b)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_oracle(d in dataset_strategy(30, 8), k in 1usize..4, qseed in any::<u64>()) {
        let k = k.min(d.n_samples());
        let mut rng = ChaCha8Rng::seed_from_u64(qseed);
        let q = Array2::from_shape_fn((6, d.n_features()), |_| rng.gen_range(0..4) as f64);
        let params = KnnParams { k, ..KnnParams::default() };
        let got = knn_predict(&d, q.view(), &params).unwrap();
        for (qi, &g) in got.iter().enumerate() {
            prop_assert_eq!(g, oracle_knn(&d, q.row(qi).as_slice().unwrap(), k));
        }
    }

    #[test]
    fn knn_self_prediction(d in dataset_strategy(30, 8)) {
        // Duplicate rows with different labels resolve to the lower index, so
        // compare with the oracle rather than the raw labels.
        let got = knn_predict(&d, d.samples.view(), &KnnParams::default()).unwrap();
        for (i, &g) in got.iter().enumerate() {
            prop_assert_eq!(g, oracle_knn(&d, d.samples.row(i).as_slice().unwrap(), 1));
        }
    }

    #[test]
    fn normalization_bounds_and_idempotence(d in dataset_strategy(30, 6)) {
        let n = normalize(&d, -1.0, 1.0).unwrap();
        prop_assert!(n.samples.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let twice = normalize(&n, -1.0, 1.0).unwrap();
        for (a, b) in n.samples.iter().zip(twice.samples.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn folds_partition_and_stratify(d in dataset_strategy(60, 2), k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= d.n_samples());
        let plan = stratified_kfold(&d, k, seed).unwrap();
        let mut seen = vec![0usize; d.n_samples()];
        for f in 0..k {
            for r in plan.test_rows(f) {
                seen[r] += 1;
            }
            let train = plan.train_rows(f);
            prop_assert!(plan.test_rows(f).iter().all(|r| !train.contains(r)));
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for c in 0..d.n_classes() {
            let per: Vec<usize> = (0..k)
                .map(|f| plan.test_rows(f).iter().filter(|&&r| d.labels[r] == c).count())
                .collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(plan, stratified_kfold(&d, k, seed).unwrap());
    }

    #[test]
    fn projection_composes(d in dataset_strategy(20, 8), bits in prop::collection::vec(any::<bool>(), 8)) {
        let f = d.n_features();
        let mut m = FeatureMask::new(bits[..f].to_vec());
        if m.none() {
            m.set(0, true);
        }
        let p = project(&d, &m).unwrap();
        prop_assert_eq!(p.n_features(), m.count_ones());
        for (col, j) in m.indices().into_iter().enumerate() {
            prop_assert_eq!(p.samples.column(col), d.samples.column(j));
        }
        let again = project(&p, &FeatureMask::ones(p.n_features())).unwrap();
        prop_assert_eq!(again.samples, p.samples);
    }

    #[test]
    fn velocity_stays_clamped(
        v in prop::collection::vec(-10.0f64..10.0, 6),
        x in prop::collection::vec(any::<bool>(), 6),
        pb in prop::collection::vec(any::<bool>(), 6),
        gb in prop::collection::vec(any::<bool>(), 6),
        r in prop::collection::vec(0.0f64..1.0, 12),
        inertia in 0.0f64..1.5,
    ) {
        let params = PsoParams { inertia, ..PsoParams::default() };
        let p = ParticleState {
            position: FeatureMask::new(x),
            velocity: v,
            fitness: FitnessValue::new(0.5, 1),
            pbest_position: FeatureMask::new(pb),
            pbest_fitness: FitnessValue::new(0.5, 1),
        };
        let out = update_velocity_with(&p, &FeatureMask::new(gb), &params, &r[..6], &r[6..]).unwrap();
        prop_assert!(out.iter().all(|v| v.abs() <= params.vmax));
    }

    #[test]
    fn sigmoid_symmetry(v in -50.0f64..50.0) {
        let s = sigmoid(v);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boltzmann_sums_to_one_and_ignores_shifts(
        votes in prop::collection::vec(0.0f64..200.0, 1..20),
        t in 0.5f64..50.0,
        shift in -100.0f64..100.0,
        invert in any::<bool>(),
    ) {
        let p = boltzmann_probs(&votes, t, invert).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = votes.iter().map(|v| v + shift).collect();
        let q = boltzmann_probs(&shifted, t, invert).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn pearson_symmetric_and_scale_free(
        xs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        let c = pearson(&x, &y).unwrap();
        prop_assert!(c.abs() <= 1.0 + 1e-12);
        prop_assert!((c - pearson(&y, &x).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((c - pearson(&scaled, &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn budget_within_range_and_monotone(
        n in 1usize..100,
        cr in 60usize..1000,
        v in 0.0f64..1.0,
        dv in 0.0f64..1.0,
        r in 1.0f64..50.0,
        dr in 0.0f64..10.0,
    ) {
        let k = feature_budget(n, cr, v, r).unwrap();
        prop_assert!((1..=n).contains(&k));
        let v2 = (v + dv).min(1.0);
        prop_assert!(feature_budget(n, cr, v2, r).unwrap() <= k);
        let r2 = (r + dr).min(50.0);
        prop_assert!(feature_budget(n, cr, v, r2).unwrap() >= k);
    }

    #[test]
    fn compare_is_a_total_order(a in fitness_strategy(), b in fitness_strategy(), c in fitness_strategy()) {
        let cmp = |x: &FitnessValue, y: &FitnessValue| compare_solutions(x, y, 1e-9);
        prop_assert_eq!(cmp(&a, &a), Ordering::Equal);
        prop_assert_eq!(cmp(&a, &b), cmp(&b, &a).reverse());
        if cmp(&a, &b) != Ordering::Less && cmp(&b, &c) != Ordering::Less {
            prop_assert_ne!(cmp(&a, &c), Ordering::Less);
        }
        let by_hand = if a.cv_accuracy != b.cv_accuracy {
            a.cv_accuracy.partial_cmp(&b.cv_accuracy).unwrap()
        } else {
            b.n_selected.cmp(&a.n_selected)
        };
        prop_assert_eq!(cmp(&a, &b), by_hand);
    }

    #[test]
    fn mutant_always_differs(bits in prop::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
        let g = FeatureMask::new(bits);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mutate_gbest(&g, &MutationParams::default(), &mut rng);
        prop_assert!(m.hamming(&g) >= 1);
        if g.len() > 1 {
            prop_assert!(!m.none());
        }
    }

    #[test]
    fn f_measure_between_p_and_r(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let c = confusion(&t, &p, 4).unwrap();
        for k in &c.per_class {
            prop_assert_eq!(k.tp + k.fp + k.fn_ + k.tn, t.len());
        }
        let correct = t.iter().zip(&p).filter(|(a, b)| a == b).count();
        prop_assert_eq!(c.correct(), correct);
        let prf = precision_recall_f(&c);
        let lo = prf.precision.min(prf.recall);
        let hi = prf.precision.max(prf.recall);
        prop_assert!(prf.f_measure >= lo - 1e-12 && prf.f_measure <= hi + 1e-12);
    }

    #[test]
    fn votes_match_recount(
        rounds in prop::collection::vec((masks_strategy(8, 5), prop::collection::vec(fitness_strategy(), 8)), 1..6),
    ) {
        let mut list = StorageList::new(5, 0.25, 5).retaining_snapshots();
        let mut previous = vec![0u64; 5];
        for (t, (masks, fits)) in rounds.into_iter().enumerate() {
            let swarm = swarm_from(masks, fits.clone());
            list.record_votes(&swarm, &fits, 5 * (t + 1), 1e-9).unwrap();
            prop_assert!(list.votes.iter().zip(&previous).all(|(a, b)| a >= b));
            previous = list.votes.clone();
        }
        // brute force: the snapshots hold exactly the voters
        let mut by_hand = vec![0u64; 5];
        for snap in list.snapshots.as_ref().unwrap() {
            prop_assert_eq!(snap.len(), 2);
            for m in snap {
                for j in m.indices() {
                    by_hand[j] += 1;
                }
            }
        }
        prop_assert_eq!(&by_hand, &list.votes);
        prop_assert_eq!(list.recount().unwrap(), list.votes.clone());
    }

    #[test]
    fn seeding_respects_budget_and_gbest(
        masks in masks_strategy(10, 6),
        fits in prop::collection::vec(fitness_strategy(), 10),
        votes in prop::collection::vec(0u64..20, 6),
        k in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut swarm = swarm_from(masks, fits);
        let owner = swarm.gbest_owner;
        let before = swarm.particles[owner].clone();
        let mut list = StorageList::new(6, 0.2, 5);
        list.votes = votes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..12).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
        let y: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let profile = CorrelationProfile::from_dataset(&Dataset::from_rows("p", &x, &y).unwrap());
        let replaced = apply_seeding(&mut swarm, &list, &SeedingParams::default(), k, &profile, 1e-9, &mut rng).unwrap();
        prop_assert_eq!(replaced.len(), 2);
        prop_assert!(!replaced.contains(&owner));
        prop_assert_eq!(&swarm.particles[owner], &before);
        for &i in &replaced {
            prop_assert_eq!(swarm.particles[i].position.count_ones(), k);
            prop_assert!(swarm.particles[i].velocity.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bests_never_worsen(
        masks in masks_strategy(6, 4),
        steps in prop::collection::vec(prop::collection::vec(fitness_strategy(), 6), 1..8),
    ) {
        let mut swarm = swarm_from(masks, steps[0].clone());
        for fits in &steps {
            let g = swarm.gbest_fitness;
            let pb: Vec<FitnessValue> = swarm.particles.iter().map(|p| p.pbest_fitness).collect();
            update_bests(&mut swarm, fits, 1e-9).unwrap();
            prop_assert_ne!(compare_solutions(&swarm.gbest_fitness, &g, 1e-9), Ordering::Less);
            for (p, old) in swarm.particles.iter().zip(&pb) {
                prop_assert_ne!(compare_solutions(&p.pbest_fitness, old, 1e-9), Ordering::Less);
            }
        }
    }
}

#[test]
fn orbits_stay_in_unit_interval() {
    for map in [ChaosMap::Logistic, ChaosMap::Tent] {
        for x0 in [0.1, 0.3, 0.37, 0.61, 0.9] {
            let cfg = ChaosConfig { map, seed_x0: x0, burn_in: 0, ..ChaosConfig::default() };
            let orbit = chaotic_sequence(&cfg, 100_000).unwrap();
            assert!(orbit.iter().all(|x| (0.0..=1.0).contains(x)), "{map:?} x0={x0}");
            let ones = orbit.iter().filter(|&&x| x >= 0.5).count() as f64 / orbit.len() as f64;
            assert!((0.4..=0.6).contains(&ones), "{map:?} x0={x0} share {ones}");
        }
    }
}

#[test]
fn mutation_flip_count_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = FeatureMask::from_indices(10, &[1, 4, 7]).unwrap();
    let trials = 10_000;
    let total: usize = (0..trials)
        .map(|_| mutate_gbest(&g, &MutationParams::default(), &mut rng).hamming(&g))
        .sum();
    let mean = total as f64 / trials as f64;
    assert!((0.9..=1.4).contains(&mean), "{mean}");
}
