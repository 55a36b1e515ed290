//! Gbest mutation: a perturbed copy of the global best replaces the worst
//! particle. The global best itself is never edited here.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bpso::{promote_gbest, SwarmState};
use crate::data::FeatureMask;
use crate::error::{invalid, Result};
use crate::fitness::FitnessValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MutationMode {
    /// Independent per-bit flips with at least one flip guaranteed.
    #[default]
    Flip,
    /// Bitwise complement of the global best.
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationParams {
    pub trigger_prob: f64,
    /// Per-bit flip probability; `None` means `1 / d`.
    pub per_bit_prob: Option<f64>,
    pub mode: MutationMode,
}

impl Default for MutationParams {
    fn default() -> Self {
        Self {
            trigger_prob: 0.5,
            per_bit_prob: None,
            mode: MutationMode::Flip,
        }
    }
}

impl MutationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.trigger_prob) {
            return Err(invalid(
                "mutation.trigger_prob",
                format!("{} is outside [0, 1]", self.trigger_prob),
            ));
        }
        if let Some(p) = self.per_bit_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(
                    "mutation.per_bit_prob",
                    format!("{p} is outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    pub fn bit_prob(&self, d: usize) -> f64 {
        self.per_bit_prob.unwrap_or(1.0 / d.max(1) as f64)
    }
}

/// Flip-mode mutant from caller-supplied per-bit draws. When no draw falls
/// under the flip probability, bit `forced` is flipped instead.
pub fn mutate_with(gbest: &FeatureMask, prob: f64, draws: &[f64], forced: usize) -> FeatureMask {
    let mut out = gbest.clone();
    for (j, &u) in draws.iter().enumerate().take(gbest.len()) {
        if u < prob {
            out.flip(j);
        }
    }
    if out == *gbest {
        out.flip(forced);
    }
    out
}

/// Mutant of `gbest` differing from it in at least one bit. An empty
/// mutant has one bit set back on, chosen so it still differs from
/// `gbest`; with a single feature no such bit exists and the empty mask is
/// returned for the caller to discard.
pub fn mutate_gbest<R: Rng + ?Sized>(
    gbest: &FeatureMask,
    params: &MutationParams,
    rng: &mut R,
) -> FeatureMask {
    let d = gbest.len();
    let mut out = match params.mode {
        MutationMode::Flip => {
            let prob = params.bit_prob(d);
            let draws: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
            let forced = rng.gen_range(0..d);
            mutate_with(gbest, prob, &draws, forced)
        }
        MutationMode::Reverse => gbest.complement(),
    };
    if out.none() {
        let candidates: Vec<usize> = (0..d).filter(|&j| gbest.get(j) == out.get(j)).collect();
        let pool: Vec<usize> = if candidates.is_empty() && d > 1 {
            (0..d).collect()
        } else {
            candidates
        };
        if !pool.is_empty() {
            out.set(pool[rng.gen_range(0..pool.len())], true);
        }
    }
    out
}

/// Puts the evaluated mutant into the worst particle (lowest index on
/// ties) with zero velocity. That particle's personal best and the global
/// best move only on strict improvement. Returns the replaced index.
pub fn replace_gworst(
    swarm: &mut SwarmState,
    mutant: FeatureMask,
    fitness: FitnessValue,
    tie_eps: f64,
) -> usize {
    let worst = worst_index(swarm, tie_eps);
    let p = &mut swarm.particles[worst];
    p.position = mutant;
    p.velocity.iter_mut().for_each(|v| *v = 0.0);
    p.fitness = fitness;
    if fitness.beats(&p.pbest_fitness, tie_eps) {
        p.pbest_fitness = fitness;
        p.pbest_position = p.position.clone();
    }
    promote_gbest(swarm, tie_eps);
    worst
}

fn worst_index(swarm: &SwarmState, tie_eps: f64) -> usize {
    let mut worst = 0;
    for i in 1..swarm.len() {
        if swarm.particles[worst]
            .fitness
            .beats(&swarm.particles[i].fitness, tie_eps)
        {
            worst = i;
        }
    }
    worst
}
