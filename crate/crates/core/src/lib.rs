//! Wrapper feature selection with a chaos-initialized binary particle
//! swarm, storage-list seeding and Gbest mutation, scored by k-NN
//! cross-validation.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bpso;
pub mod chaos;
pub mod data;
pub mod error;
pub mod fitness;
pub mod metrics;
pub mod mutation;
pub mod orchestrator;
pub mod seeding;

pub use data::{load_dataset, normalize, project, stratified_kfold, Dataset, FeatureMask, FoldPlan, LabelColumn};
pub use error::{Error, Result};
pub use fitness::{compare_solutions, evaluate_fitness, FitnessEvaluator, FitnessValue, KnnParams, Scaling};
pub use orchestrator::{run_batch, run_once, AlgorithmConfig, Aggregate, BatchResult, Normalization, RunResult, Variant};
