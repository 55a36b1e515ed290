//! Global search seeding.
//!
//! The fittest particles of every recorded iteration vote for the features
//! they carry; the tallies live in a [`StorageList`]. At seeding events the
//! worst particles are replaced by subsets drawn from a Boltzmann
//! distribution over those tallies ("add"), and oversized subsets are
//! trimmed by dropping the most redundant feature, measured by mean
//! absolute Pearson correlation with the rest of the subset ("delete").
//! The subset size comes from a closed-form budget over the dataset shape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bpso::SwarmState;
use crate::data::{Dataset, FeatureMask};
use crate::error::{invalid, Error, Result};
use crate::fitness::FitnessValue;

/// Two correlation means closer than this are treated as tied.
const COR_TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedingParams {
    /// Sample-size offset in `[1, 50]`; `None` picks it from the row count.
    pub r: Option<f64>,
    /// Feature-share knob in `[0, 1]`.
    pub v: f64,
    /// Fixed temperature; `None` uses `max(1, max_vote / 3)` per event.
    pub temperature: Option<f64>,
    pub record_every: usize,
    pub top_fraction: f64,
    pub seed_fraction: f64,
    /// Use `exp(-votes / T)`, favouring rarely voted features.
    pub invert_sign: bool,
}

impl Default for SeedingParams {
    fn default() -> Self {
        Self {
            r: None,
            v: 0.5,
            temperature: None,
            record_every: 5,
            top_fraction: 0.2,
            seed_fraction: 0.25,
            invert_sign: false,
        }
    }
}

impl SeedingParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.r {
            if !(1.0..=50.0).contains(&r) {
                return Err(invalid("seeding.r", format!("{r} is outside [1, 50]")));
            }
        }
        if !(0.0..=1.0).contains(&self.v) {
            return Err(invalid("seeding.v", format!("{} is outside [0, 1]", self.v)));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0) {
                return Err(invalid("seeding.temperature", format!("{t} must be positive")));
            }
        }
        if self.record_every == 0 {
            return Err(invalid("seeding.record_every", "must be at least 1"));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(invalid(
                "seeding.top_fraction",
                format!("{} is outside (0, 1]", self.top_fraction),
            ));
        }
        if !(0.0..=1.0).contains(&self.seed_fraction) {
            return Err(invalid(
                "seeding.seed_fraction",
                format!("{} is outside [0, 1]", self.seed_fraction),
            ));
        }
        Ok(())
    }

    /// Configured `r`, or 50 for datasets above 500 rows and 1 otherwise.
    pub fn effective_r(&self, n_samples: usize) -> f64 {
        self.r.unwrap_or(if n_samples > 500 { 50.0 } else { 1.0 })
    }
}

/// Target subset size `ceil(((N - vN) + CR) / (CR - r))`, clamped to
/// `[1, N]`.
pub fn feature_budget(n_features: usize, n_samples: usize, v: f64, r: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid("seeding.v", format!("{v} is outside [0, 1]")));
    }
    if !(1.0..=50.0).contains(&r) {
        return Err(invalid("seeding.r", format!("{r} is outside [1, 50]")));
    }
    let cr = n_samples as f64;
    if cr - r <= 0.0 {
        return Err(invalid(
            "seeding.r",
            format!("sample count {n_samples} must exceed r = {r}"),
        ));
    }
    let n = n_features as f64;
    let raw = ((n - v * n) + cr) / (cr - r);
    Ok((raw.ceil() as usize).clamp(1, n_features.max(1)))
}

/// Sample Pearson correlation; 0 when either input is constant.
pub fn pearson(xi: &[f64], xj: &[f64]) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::LengthMismatch {
            expected: xi.len(),
            actual: xj.len(),
        });
    }
    if xi.len() < 2 {
        return Err(invalid("pearson", "need at least two observations"));
    }
    let n = xi.len() as f64;
    let mi = xi.iter().sum::<f64>() / n;
    let mj = xj.iter().sum::<f64>() / n;
    let (mut sij, mut sii, mut sjj) = (0.0, 0.0, 0.0);
    for (a, b) in xi.iter().zip(xj) {
        let (da, db) = (a - mi, b - mj);
        sij += da * db;
        sii += da * da;
        sjj += db * db;
    }
    if sii == 0.0 || sjj == 0.0 {
        return Ok(0.0);
    }
    Ok((sij / (sii.sqrt() * sjj.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise feature correlations of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationProfile {
    pub pairwise: Vec<Vec<f64>>,
}

impl CorrelationProfile {
    pub fn from_dataset(d: &Dataset) -> Self {
        let cols: Vec<Vec<f64>> = (0..d.n_features())
            .map(|j| d.samples.column(j).to_vec())
            .collect();
        let n = cols.len();
        let mut pairwise = vec![vec![0.0; n]; n];
        for i in 0..n {
            pairwise[i][i] = 1.0;
            for j in i + 1..n {
                let c = if cols[i].len() < 2 {
                    0.0
                } else {
                    pearson(&cols[i], &cols[j]).expect("columns share a length")
                };
                pairwise[i][j] = c;
                pairwise[j][i] = c;
            }
        }
        Self { pairwise }
    }

    pub fn n_features(&self) -> usize {
        self.pairwise.len()
    }

    /// Mean `|c_ij|` between feature `i` and the other selected features.
    pub fn mean_abs(&self, i: usize, mask: &FeatureMask) -> Result<f64> {
        if mask.len() != self.n_features() {
            return Err(Error::LengthMismatch {
                expected: self.n_features(),
                actual: mask.len(),
            });
        }
        if !mask.get(i) {
            return Err(invalid("mask", format!("feature {} is not selected", i + 1)));
        }
        let others: Vec<usize> = mask.indices().into_iter().filter(|&j| j != i).collect();
        if others.is_empty() {
            return Err(invalid("mask", "need at least two selected features"));
        }
        Ok(others.iter().map(|&j| self.pairwise[i][j].abs()).sum::<f64>() / others.len() as f64)
    }
}

/// Mean absolute correlation of feature `i` with the other masked
/// features, computed directly from the data.
pub fn mean_abs_correlation(i: usize, d: &Dataset, mask: &FeatureMask) -> Result<f64> {
    if mask.len() != d.n_features() {
        return Err(Error::LengthMismatch {
            expected: d.n_features(),
            actual: mask.len(),
        });
    }
    if !mask.get(i) {
        return Err(invalid("mask", format!("feature {} is not selected", i + 1)));
    }
    let others: Vec<usize> = mask.indices().into_iter().filter(|&j| j != i).collect();
    if others.is_empty() {
        return Err(invalid("mask", "need at least two selected features"));
    }
    let xi = d.samples.column(i).to_vec();
    let mut total = 0.0;
    for &j in &others {
        total += pearson(&xi, &d.samples.column(j).to_vec())?.abs();
    }
    Ok(total / others.len() as f64)
}

/// Per-feature vote tallies over the recorded iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageList {
    pub votes: Vec<u64>,
    pub recorded_iterations: Vec<usize>,
    pub top_fraction: f64,
    pub record_every: usize,
    /// Voting masks per recorded iteration, kept only when requested.
    #[serde(skip)]
    pub snapshots: Option<Vec<Vec<FeatureMask>>>,
}

impl StorageList {
    pub fn new(n_features: usize, top_fraction: f64, record_every: usize) -> Self {
        Self {
            votes: vec![0; n_features],
            recorded_iterations: Vec::new(),
            top_fraction,
            record_every: record_every.max(1),
            snapshots: None,
        }
    }

    /// Keeps every voting mask so the tallies can be recounted.
    pub fn retaining_snapshots(mut self) -> Self {
        self.snapshots = Some(Vec::new());
        self
    }

    pub fn is_due(&self, iteration: usize) -> bool {
        iteration.is_multiple_of(self.record_every) && !self.recorded_iterations.contains(&iteration)
    }

    pub fn max_vote(&self) -> u64 {
        self.votes.iter().copied().max().unwrap_or(0)
    }

    pub fn votes_f64(&self) -> Vec<f64> {
        self.votes.iter().map(|&v| v as f64).collect()
    }

    /// Adds one vote per set bit of each of the `ceil(top_fraction * n)`
    /// fittest particles.
    pub fn record_votes(
        &mut self,
        swarm: &SwarmState,
        fitnesses: &[FitnessValue],
        iteration: usize,
        tie_eps: f64,
    ) -> Result<()> {
        if fitnesses.len() != swarm.len() {
            return Err(Error::LengthMismatch {
                expected: swarm.len(),
                actual: fitnesses.len(),
            });
        }
        if self.recorded_iterations.contains(&iteration) {
            return Err(Error::AlreadyRecorded(iteration));
        }
        if !iteration.is_multiple_of(self.record_every) {
            return Err(invalid(
                "iteration",
                format!("{iteration} is not a multiple of {}", self.record_every),
            ));
        }
        let n_top = ((self.top_fraction * swarm.len() as f64).ceil() as usize).clamp(1, swarm.len());
        let order = crate::fitness::rank_order(fitnesses, tie_eps);
        let voters: Vec<FeatureMask> = order[..n_top]
            .iter()
            .map(|&i| swarm.particles[i].position.clone())
            .collect();
        for m in &voters {
            for j in m.indices() {
                self.votes[j] += 1;
            }
        }
        if let Some(s) = self.snapshots.as_mut() {
            s.push(voters);
        }
        self.recorded_iterations.push(iteration);
        Ok(())
    }

    /// Recounts the tallies from retained snapshots.
    pub fn recount(&self) -> Option<Vec<u64>> {
        let snaps = self.snapshots.as_ref()?;
        let mut votes = vec![0; self.votes.len()];
        for m in snaps.iter().flatten() {
            for (j, &b) in m.bits().iter().enumerate() {
                votes[j] += u64::from(b);
            }
        }
        Some(votes)
    }
}

/// Softmax of `votes / T` (or `-votes / T` when `invert_sign`), computed
/// with a max shift.
pub fn boltzmann_probs(votes: &[f64], temperature: f64, invert_sign: bool) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(invalid(
            "seeding.temperature",
            format!("{temperature} must be positive"),
        ));
    }
    if votes.is_empty() {
        return Err(invalid("votes", "empty vote vector"));
    }
    let sign = if invert_sign { -1.0 } else { 1.0 };
    let energy: Vec<f64> = votes.iter().map(|v| sign * v / temperature).collect();
    let top = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energy.iter().map(|e| (e - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Temperature for one seeding event.
pub fn seeding_temperature(params: &SeedingParams, list: &StorageList) -> f64 {
    params
        .temperature
        .unwrap_or_else(|| (list.max_vote() as f64 / 3.0).max(1.0))
}

/// Draws `k` distinct features without replacement, each step proportional
/// to the remaining probabilities.
pub fn seed_particle<R: Rng + ?Sized>(probs: &[f64], k: usize, rng: &mut R) -> Result<FeatureMask> {
    let n = probs.len();
    if k == 0 || k > n {
        return Err(invalid(
            "budget",
            format!("cannot draw {k} of {n} features"),
        ));
    }
    let mut weights = probs.to_vec();
    let mut mask = FeatureMask::zeros(n);
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (j, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                chosen = Some(j);
                if u < w {
                    break;
                }
                u -= w;
            }
            chosen.expect("positive total implies a candidate")
        } else {
            // every remaining weight underflowed: fall back to uniform
            let rest: Vec<usize> = (0..n).filter(|&j| !mask.get(j)).collect();
            rest[rng.gen_range(0..rest.len())]
        };
        mask.set(pick, true);
        weights[pick] = 0.0;
    }
    Ok(mask)
}

/// Drops the most redundant selected feature (highest mean absolute
/// correlation with the others) until `k` remain. Ties go to the feature
/// with fewer votes, then to the lower index.
pub fn prune_particle(
    mask: &FeatureMask,
    profile: &CorrelationProfile,
    votes: &[u64],
    k: usize,
) -> Result<FeatureMask> {
    if mask.len() != profile.n_features() || votes.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: profile.n_features(),
            actual: mask.len(),
        });
    }
    if mask.count_ones() <= k {
        return Err(invalid(
            "budget",
            format!("mask has {} features, not more than {k}", mask.count_ones()),
        ));
    }
    if k == 0 {
        return Err(invalid("budget", "must keep at least one feature"));
    }
    let mut out = mask.clone();
    while out.count_ones() > k {
        let mut drop: Option<(usize, f64)> = None;
        for i in out.indices() {
            let cor = profile.mean_abs(i, &out)?;
            let better = match drop {
                None => true,
                Some((d, dc)) => {
                    if (cor - dc).abs() > COR_TIE {
                        cor > dc
                    } else {
                        votes[i] < votes[d]
                    }
                }
            };
            if better {
                drop = Some((i, cor));
            }
        }
        out.set(drop.expect("mask is non-empty").0, false);
    }
    Ok(out)
}

/// Trims `mask` to at most `k` features, leaving smaller masks alone.
pub fn enforce_budget(
    mask: &FeatureMask,
    profile: &CorrelationProfile,
    votes: &[u64],
    k: usize,
) -> Result<FeatureMask> {
    if mask.count_ones() > k {
        prune_particle(mask, profile, votes, k)
    } else {
        Ok(mask.clone())
    }
}

/// Replaces the positions of the `floor(seed_fraction * n)` worst particles
/// (never the global-best owner) with Boltzmann-seeded subsets of size `k`
/// and zeroes their velocities. Personal bests are kept. Returns the
/// replaced indices.
#[allow(clippy::too_many_arguments)]
pub fn apply_seeding<R: Rng + ?Sized>(
    swarm: &mut SwarmState,
    list: &StorageList,
    params: &SeedingParams,
    k: usize,
    profile: &CorrelationProfile,
    tie_eps: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n_seed = (params.seed_fraction * swarm.len() as f64).floor() as usize;
    if n_seed == 0 {
        return Ok(Vec::new());
    }
    let probs = boltzmann_probs(
        &list.votes_f64(),
        seeding_temperature(params, list),
        params.invert_sign,
    )?;
    let targets: Vec<usize> = swarm
        .ranked(tie_eps)
        .into_iter()
        .rev()
        .filter(|&i| i != swarm.gbest_owner)
        .take(n_seed)
        .collect();
    for &i in &targets {
        let seeded = enforce_budget(&seed_particle(&probs, k, rng)?, profile, &list.votes, k)?;
        let p = &mut swarm.particles[i];
        p.position = seeded;
        p.velocity.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(targets)
}
