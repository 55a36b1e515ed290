//! Binary particle swarm dynamics: velocity update with clamping, sigmoid
//! transfer, stochastic bit sampling and personal/global best bookkeeping.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMask;
use crate::error::{invalid, Error, Result};
use crate::fitness::{compare_solutions, FitnessValue};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsoParams {
    pub c1: f64,
    pub c2: f64,
    pub vmax: f64,
    /// Weight on the previous velocity. 1.0 leaves the update without an
    /// inertia term.
    pub inertia: f64,
    pub n_particles: usize,
    pub max_iterations: usize,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            c1: 1.5,
            c2: 2.0,
            vmax: 4.0,
            inertia: 1.0,
            n_particles: 30,
            max_iterations: 100,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0) {
            return Err(invalid("pso.c1", "must be positive"));
        }
        if !(self.c2 > 0.0) {
            return Err(invalid("pso.c2", "must be positive"));
        }
        if !(self.vmax > 0.0) {
            return Err(invalid("pso.vmax", "must be positive"));
        }
        if !(self.inertia >= 0.0) {
            return Err(invalid("pso.inertia", "must be non-negative"));
        }
        if self.n_particles < 2 {
            return Err(invalid("pso.particles", "need at least 2 particles"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub position: FeatureMask,
    pub velocity: Vec<f64>,
    /// Fitness of `position` as of its most recent evaluation.
    pub fitness: FitnessValue,
    pub pbest_position: FeatureMask,
    pub pbest_fitness: FitnessValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<ParticleState>,
    pub gbest_position: FeatureMask,
    pub gbest_fitness: FitnessValue,
    /// Particle whose personal best currently is the global best.
    pub gbest_owner: usize,
    pub iteration: usize,
}

impl SwarmState {
    /// Swarm whose personal bests are the evaluated starting positions.
    pub fn new(
        positions: Vec<FeatureMask>,
        velocities: Vec<Vec<f64>>,
        fitnesses: Vec<FitnessValue>,
        tie_eps: f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("swarm", "no particles"));
        }
        for other in [velocities.len(), fitnesses.len()] {
            if other != positions.len() {
                return Err(Error::LengthMismatch {
                    expected: positions.len(),
                    actual: other,
                });
            }
        }
        let particles: Vec<ParticleState> = positions
            .into_iter()
            .zip(velocities)
            .zip(fitnesses)
            .map(|((position, velocity), fitness)| ParticleState {
                pbest_position: position.clone(),
                pbest_fitness: fitness,
                position,
                velocity,
                fitness,
            })
            .collect();
        let owner = best_index(particles.iter().map(|p| &p.pbest_fitness), tie_eps);
        Ok(Self {
            gbest_position: particles[owner].pbest_position.clone(),
            gbest_fitness: particles[owner].pbest_fitness,
            gbest_owner: owner,
            particles,
            iteration: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> Vec<FeatureMask> {
        self.particles.iter().map(|p| p.position.clone()).collect()
    }

    pub fn current_fitnesses(&self) -> Vec<FitnessValue> {
        self.particles.iter().map(|p| p.fitness).collect()
    }

    /// Particle indices ordered from best to worst current fitness; equal
    /// fitness keeps index order.
    pub fn ranked(&self, tie_eps: f64) -> Vec<usize> {
        crate::fitness::rank_order(&self.current_fitnesses(), tie_eps)
    }
}

/// Index of the best value; the earliest wins ties.
fn best_index<'a>(values: impl Iterator<Item = &'a FitnessValue>, tie_eps: f64) -> usize {
    let mut best: Option<(usize, &FitnessValue)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if compare_solutions(v, b, tie_eps) != Ordering::Greater => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Velocity update with caller-supplied uniform draws `r1`, `r2` (one pair
/// per dimension), clamped to `[-vmax, vmax]`.
pub fn update_velocity_with(
    p: &ParticleState,
    gbest: &FeatureMask,
    params: &PsoParams,
    r1: &[f64],
    r2: &[f64],
) -> Result<Vec<f64>> {
    let d = p.velocity.len();
    for len in [p.position.len(), p.pbest_position.len(), gbest.len(), r1.len(), r2.len()] {
        if len != d {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: len,
            });
        }
    }
    let bit = |m: &FeatureMask, j| if m.get(j) { 1.0 } else { 0.0 };
    Ok((0..d)
        .map(|j| {
            let x = bit(&p.position, j);
            let v = params.inertia * p.velocity[j]
                + params.c1 * r1[j] * (bit(&p.pbest_position, j) - x)
                + params.c2 * r2[j] * (bit(gbest, j) - x);
            v.clamp(-params.vmax, params.vmax)
        })
        .collect())
}

/// Draws `r1_j, r2_j` for each dimension in order, then applies
/// [`update_velocity_with`].
pub fn update_velocity<R: Rng + ?Sized>(
    p: &ParticleState,
    gbest: &FeatureMask,
    params: &PsoParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = p.velocity.len();
    let mut r1 = Vec::with_capacity(d);
    let mut r2 = Vec::with_capacity(d);
    for _ in 0..d {
        r1.push(rng.gen::<f64>());
        r2.push(rng.gen::<f64>());
    }
    update_velocity_with(p, gbest, params, &r1, &r2)
}

/// Bit `j` is set iff `draws[j] < sigmoid(velocity[j])`. An empty result
/// gets one bit forced on at a position chosen by `rng`.
pub fn update_position_with<R: Rng + ?Sized>(
    velocity: &[f64],
    draws: &[f64],
    rng: &mut R,
) -> Result<FeatureMask> {
    if draws.len() != velocity.len() {
        return Err(Error::LengthMismatch {
            expected: velocity.len(),
            actual: draws.len(),
        });
    }
    let mut mask = FeatureMask::new(
        velocity
            .iter()
            .zip(draws)
            .map(|(&v, &u)| u < sigmoid(v))
            .collect(),
    );
    if mask.none() && !mask.is_empty() {
        mask.set(rng.gen_range(0..mask.len()), true);
    }
    Ok(mask)
}

pub fn update_position<R: Rng + ?Sized>(velocity: &[f64], rng: &mut R) -> FeatureMask {
    let draws: Vec<f64> = (0..velocity.len()).map(|_| rng.gen()).collect();
    update_position_with(velocity, &draws, rng).expect("draw count matches velocity")
}

/// Records new current fitnesses and promotes strict improvements to
/// personal and global bests; incumbents win ties. Returns whether the
/// global best changed.
pub fn update_bests(
    swarm: &mut SwarmState,
    fitnesses: &[FitnessValue],
    tie_eps: f64,
) -> Result<bool> {
    if fitnesses.len() != swarm.len() {
        return Err(Error::LengthMismatch {
            expected: swarm.len(),
            actual: fitnesses.len(),
        });
    }
    for (p, f) in swarm.particles.iter_mut().zip(fitnesses) {
        p.fitness = *f;
        if f.beats(&p.pbest_fitness, tie_eps) {
            p.pbest_fitness = *f;
            p.pbest_position = p.position.clone();
        }
    }
    Ok(promote_gbest(swarm, tie_eps))
}

/// Moves the global best to the best personal best if it strictly improves.
pub(crate) fn promote_gbest(swarm: &mut SwarmState, tie_eps: f64) -> bool {
    let i = best_index(swarm.particles.iter().map(|p| &p.pbest_fitness), tie_eps);
    let candidate = &swarm.particles[i];
    if candidate.pbest_fitness.beats(&swarm.gbest_fitness, tie_eps) {
        swarm.gbest_fitness = candidate.pbest_fitness;
        swarm.gbest_position = candidate.pbest_position.clone();
        swarm.gbest_owner = i;
        true
    } else {
        false
    }
}
