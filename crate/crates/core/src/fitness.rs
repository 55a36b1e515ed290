//! Wrapper fitness: k-nearest-neighbour classification scored by k-fold
//! cross-validation, compared lexicographically (accuracy, then size).

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMask, FoldPlan, MinMax};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_TIE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    pub cv_accuracy: f64,
    pub n_selected: usize,
    /// Classifier fits spent producing this value (one per fold).
    pub eval_cost: usize,
}

impl FitnessValue {
    pub fn new(cv_accuracy: f64, n_selected: usize) -> Self {
        Self {
            cv_accuracy,
            n_selected,
            eval_cost: 0,
        }
    }

    /// Strict improvement under [`compare_solutions`].
    pub fn beats(&self, other: &FitnessValue, tie_eps: f64) -> bool {
        compare_solutions(self, other, tie_eps) == Ordering::Greater
    }
}

/// `Greater` means `a` is the better solution: higher accuracy wins, and
/// accuracies within `tie_eps` fall back to the smaller subset.
pub fn compare_solutions(a: &FitnessValue, b: &FitnessValue, tie_eps: f64) -> Ordering {
    let delta = a.cv_accuracy - b.cv_accuracy;
    if delta.abs() <= tie_eps {
        b.n_selected.cmp(&a.n_selected)
    } else if delta > 0.0 {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

/// Indices ordered best first, equal standing kept in index order. Each
/// value is scored by how many others it beats minus how many beat it, so
/// the order is well defined even when a wide `tie_eps` makes the pairwise
/// comparison intransitive. For a consistent comparison this is a plain
/// sort.
pub fn rank_order(values: &[FitnessValue], tie_eps: f64) -> Vec<usize> {
    let score: Vec<i64> = values
        .iter()
        .map(|a| {
            values
                .iter()
                .map(|b| match compare_solutions(a, b, tie_eps) {
                    Ordering::Greater => 1,
                    Ordering::Less => -1,
                    Ordering::Equal => 0,
                })
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| score[b].cmp(&score[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub tie_eps: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 1,
            tie_eps: DEFAULT_TIE_EPS,
        }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("knn.k", "must be at least 1"));
        }
        if !(self.tie_eps >= 0.0) {
            return Err(invalid("fitness.tie_eps", "must be non-negative"));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64], cols: &[usize]) -> f64 {
    cols.iter()
        .map(|&j| {
            let d = a[j] - b[j];
            d * d
        })
        .sum()
}

/// Label for one query. `train_rows` must be ascending so that equal
/// distances resolve to the lower row index.
#[allow(clippy::too_many_arguments)]
fn vote(
    samples: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    train_rows: &[usize],
    cols: &[usize],
    query: &[f64],
    k: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> usize {
    let row = |r: usize| samples.row(r).to_slice().expect("standard layout");
    if k == 1 {
        let mut best = (f64::INFINITY, usize::MAX);
        for &r in train_rows {
            let d = sq_dist(row(r), query, cols);
            if d < best.0 {
                best = (d, r);
            }
        }
        return labels[best.1];
    }

    scratch.clear();
    scratch.extend(train_rows.iter().map(|&r| (sq_dist(row(r), query, cols), r)));
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, by_dist);
        scratch.truncate(k);
    }
    scratch.sort_unstable_by(by_dist);

    let mut counts = vec![0usize; n_classes];
    for &(_, r) in scratch.iter() {
        counts[labels[r]] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    scratch
        .iter()
        .map(|&(_, r)| labels[r])
        .find(|&c| counts[c] == top)
        .expect("at least one neighbour")
}

/// Majority label among the `k` Euclidean-nearest training rows for each
/// query row. Distance ties go to the lower training index; vote ties go to
/// whichever tied class owns the nearest neighbour.
pub fn knn_predict(
    train: &Dataset,
    queries: ArrayView2<'_, f64>,
    params: &KnnParams,
) -> Result<Vec<usize>> {
    knn_predict_rows(train.samples.view(), &train.labels, queries, params)
}

/// [`knn_predict`] over a bare matrix and label vector.
pub fn knn_predict_rows(
    train_x: ArrayView2<'_, f64>,
    train_y: &[usize],
    queries: ArrayView2<'_, f64>,
    params: &KnnParams,
) -> Result<Vec<usize>> {
    params.validate()?;
    if train_y.len() != train_x.nrows() {
        return Err(Error::LengthMismatch {
            expected: train_x.nrows(),
            actual: train_y.len(),
        });
    }
    if train_x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if queries.ncols() != train_x.ncols() {
        return Err(Error::LengthMismatch {
            expected: train_x.ncols(),
            actual: queries.ncols(),
        });
    }
    if params.k > train_x.nrows() {
        return Err(invalid(
            "knn.k",
            format!("{} exceeds {} training rows", params.k, train_x.nrows()),
        ));
    }
    let samples = train_x.as_standard_layout();
    let n_classes = train_y.iter().max().map_or(0, |m| m + 1);
    let rows: Vec<usize> = (0..train_x.nrows()).collect();
    let cols: Vec<usize> = (0..train_x.ncols()).collect();
    let mut scratch = Vec::new();
    Ok(queries
        .rows()
        .into_iter()
        .map(|q| {
            let q = q.to_vec();
            vote(
                samples.view(),
                train_y,
                n_classes,
                &rows,
                &cols,
                &q,
                params.k,
                &mut scratch,
            )
        })
        .collect())
}

fn check_mask(d: &Dataset, mask: &FeatureMask) -> Result<Vec<usize>> {
    if mask.len() != d.n_features() {
        return Err(Error::LengthMismatch {
            expected: d.n_features(),
            actual: mask.len(),
        });
    }
    let cols = mask.indices();
    if cols.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(cols)
}

fn check_plan(d: &Dataset, plan: &FoldPlan) -> Result<()> {
    if plan.assignment.len() != d.n_samples() {
        return Err(Error::LengthMismatch {
            expected: d.n_samples(),
            actual: plan.assignment.len(),
        });
    }
    Ok(())
}

/// Out-of-fold predictions for every row. `fold_samples(f)` supplies the
/// feature matrix used while fold `f` is held out.
fn cv_predictions<'a>(
    fold_samples: impl Fn(usize) -> ArrayView2<'a, f64>,
    d: &Dataset,
    plan: &FoldPlan,
    cols: &[usize],
    k: usize,
) -> Vec<usize> {
    let mut predicted = vec![0; d.n_samples()];
    let mut scratch = Vec::new();
    for fold in 0..plan.k {
        let samples = fold_samples(fold);
        let train = plan.train_rows(fold);
        let k = k.min(train.len());
        for r in plan.test_rows(fold) {
            let query = samples.row(r).to_slice().expect("standard layout");
            predicted[r] = vote(
                samples,
                &d.labels,
                d.n_classes(),
                &train,
                cols,
                query,
                k,
                &mut scratch,
            );
        }
    }
    predicted
}

fn accuracy_of(predicted: &[usize], truth: &[usize]) -> f64 {
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

/// Fraction of rows classified correctly when each fold is predicted from
/// the remaining folds, using only the masked features.
pub fn cross_validated_accuracy(
    d: &Dataset,
    mask: &FeatureMask,
    plan: &FoldPlan,
    params: &KnnParams,
) -> Result<f64> {
    params.validate()?;
    check_plan(d, plan)?;
    let cols = check_mask(d, mask)?;
    let samples = d.samples.as_standard_layout();
    let predicted = cv_predictions(|_| samples.view(), d, plan, &cols, params.k);
    Ok(accuracy_of(&predicted, &d.labels))
}

pub fn evaluate_fitness(
    d: &Dataset,
    mask: &FeatureMask,
    plan: &FoldPlan,
    params: &KnnParams,
) -> Result<FitnessValue> {
    let acc = cross_validated_accuracy(d, mask, plan, params)?;
    Ok(FitnessValue {
        cv_accuracy: acc,
        n_selected: mask.count_ones(),
        eval_cost: plan.k,
    })
}

/// How feature values are scaled before distances are taken.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Raw values.
    None,
    /// Extrema taken over the whole dataset.
    Full { lower: f64, upper: f64 },
    /// Extrema taken over each training complement only.
    PerFold { lower: f64, upper: f64 },
}

/// Shared, thread-safe fitness oracle for one run: a fixed dataset, fold
/// plan and classifier, with a memo table keyed by mask.
pub struct FitnessEvaluator {
    data: Dataset,
    plan: FoldPlan,
    params: KnnParams,
    per_fold: Option<Vec<Array2<f64>>>,
    cache: Mutex<HashMap<FeatureMask, FitnessValue>>,
    misses: AtomicUsize,
}

impl FitnessEvaluator {
    /// `data` is taken as given for `Scaling::None`; otherwise it is scaled
    /// here according to `scaling`.
    pub fn new(data: &Dataset, plan: FoldPlan, params: KnnParams, scaling: Scaling) -> Result<Self> {
        params.validate()?;
        check_plan(data, &plan)?;
        let mut data = data.clone();
        data.samples = data.samples.as_standard_layout().into_owned();
        let per_fold = match scaling {
            Scaling::None => None,
            Scaling::Full { lower, upper } => {
                data = crate::data::normalize(&data, lower, upper)?;
                None
            }
            Scaling::PerFold { lower, upper } => {
                if !(upper > lower) {
                    return Err(invalid("data.bounds", "upper must exceed lower"));
                }
                Some(
                    (0..plan.k)
                        .map(|f| {
                            let train = plan.train_rows(f);
                            MinMax::fit(data.samples.view(), Some(&train)).transform(
                                data.samples.view(),
                                lower,
                                upper,
                            )
                        })
                        .collect(),
                )
            }
        };
        Ok(Self {
            data,
            plan,
            params,
            per_fold,
            cache: Mutex::new(HashMap::new()),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn plan(&self) -> &FoldPlan {
        &self.plan
    }

    pub fn params(&self) -> &KnnParams {
        &self.params
    }

    pub fn tie_eps(&self) -> f64 {
        self.params.tie_eps
    }

    /// Number of masks actually classified (cache misses).
    pub fn distinct_evaluations(&self) -> usize {
        self.misses.load(AtomicOrdering::Relaxed)
    }

    /// Out-of-fold predicted labels for every row.
    pub fn predictions(&self, mask: &FeatureMask) -> Result<Vec<usize>> {
        let cols = check_mask(&self.data, mask)?;
        Ok(match &self.per_fold {
            Some(views) => {
                cv_predictions(|f| views[f].view(), &self.data, &self.plan, &cols, self.params.k)
            }
            None => cv_predictions(
                |_| self.data.samples.view(),
                &self.data,
                &self.plan,
                &cols,
                self.params.k,
            ),
        })
    }

    pub fn evaluate(&self, mask: &FeatureMask) -> Result<FitnessValue> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(mask) {
            return Ok(*hit);
        }
        let predicted = self.predictions(mask)?;
        let value = FitnessValue {
            cv_accuracy: accuracy_of(&predicted, &self.data.labels),
            n_selected: mask.count_ones(),
            eval_cost: self.plan.k,
        };
        self.misses.fetch_add(1, AtomicOrdering::Relaxed);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(mask.clone(), value);
        Ok(value)
    }

    /// Evaluates masks concurrently; the result order matches the input.
    pub fn evaluate_all(&self, masks: &[FeatureMask]) -> Result<Vec<FitnessValue>> {
        masks.par_iter().map(|m| self.evaluate(m)).collect()
    }
}
