//! Chaotic orbits and chaos-driven swarm initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMask;
use crate::error::{invalid, Error, Result};

/// Slope of the tent map. Exactly 2 collapses to 0 within ~50 steps in
/// binary floating point, so the orbit uses a slope just below it.
pub const TENT_SLOPE: f64 = 1.999_999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChaosMap {
    #[default]
    Logistic,
    Tent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityInit {
    #[default]
    Zero,
    /// Further orbit values mapped onto `[-vmax, vmax]`.
    Chaotic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosConfig {
    pub map: ChaosMap,
    pub alpha: f64,
    pub seed_x0: f64,
    pub burn_in: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            map: ChaosMap::Logistic,
            alpha: 4.0,
            seed_x0: 0.3,
            burn_in: 100,
        }
    }
}

impl ChaosConfig {
    pub fn validate(&self) -> Result<()> {
        let x0 = self.seed_x0;
        if !(x0 > 0.0 && x0 < 1.0) {
            return Err(invalid("chaos.seed", format!("{x0} is not in (0, 1)")));
        }
        if self.map == ChaosMap::Logistic && [0.25, 0.5, 0.75].contains(&x0) {
            return Err(invalid(
                "chaos.seed",
                format!("{x0} is a degenerate logistic seed"),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 4.0) {
            return Err(invalid(
                "chaos.alpha",
                format!("{} is not in (0, 4]", self.alpha),
            ));
        }
        Ok(())
    }

    fn step(&self, x: f64) -> f64 {
        match self.map {
            ChaosMap::Logistic => self.alpha * x * (1.0 - x),
            ChaosMap::Tent => TENT_SLOPE * x.min(1.0 - x),
        }
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfUnitInterval(x))
    }
}

pub fn logistic_step(x: f64, alpha: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(alpha * x * (1.0 - x))
}

/// Thresholds an orbit value into a bit; 0.5 itself maps to 1.
pub fn tent_binarize(x: f64) -> Result<bool> {
    check_unit(x)?;
    Ok(x >= 0.5)
}

/// `length` orbit values after discarding `burn_in` leading iterates. The
/// seed itself is never emitted.
pub fn chaotic_sequence(cfg: &ChaosConfig, length: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    if length == 0 {
        return Err(invalid("length", "sequence length must be at least 1"));
    }
    let mut x = cfg.seed_x0;
    for _ in 0..cfg.burn_in {
        x = cfg.step(x);
    }
    Ok((0..length)
        .map(|_| {
            x = cfg.step(x);
            x
        })
        .collect())
}

/// Initial binary positions and velocities for a swarm.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub positions: Vec<FeatureMask>,
    pub velocities: Vec<Vec<f64>>,
}

/// Builds `n_particles` masks from one shared orbit: particle `i` takes
/// iterates `i*d .. (i+1)*d`, thresholded bit by bit. Empty masks get one
/// uniformly chosen bit from `rng`. Velocities start at zero unless
/// `velocity` asks for chaotic values, which continue the same orbit.
pub fn init_population<R: Rng + ?Sized>(
    n_particles: usize,
    n_features: usize,
    cfg: &ChaosConfig,
    velocity: VelocityInit,
    vmax: f64,
    rng: &mut R,
) -> Result<Population> {
    if n_particles == 0 || n_features == 0 {
        return Err(invalid(
            "population",
            "need at least one particle and one feature",
        ));
    }
    let extra = match velocity {
        VelocityInit::Zero => 0,
        VelocityInit::Chaotic => n_particles * n_features,
    };
    let orbit = chaotic_sequence(cfg, n_particles * n_features + extra)?;
    let (bit_values, vel_values) = orbit.split_at(n_particles * n_features);

    let mut positions = Vec::with_capacity(n_particles);
    for chunk in bit_values.chunks(n_features) {
        let bits = chunk
            .iter()
            .map(|&x| tent_binarize(x.clamp(0.0, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        let mut mask = FeatureMask::new(bits);
        if mask.none() {
            mask.set(rng.gen_range(0..n_features), true);
        }
        positions.push(mask);
    }
    let velocities = match velocity {
        VelocityInit::Zero => vec![vec![0.0; n_features]; n_particles],
        VelocityInit::Chaotic => vel_values
            .chunks(n_features)
            .map(|c| c.iter().map(|&x| vmax * (2.0 * x - 1.0)).collect())
            .collect(),
    };
    Ok(Population {
        positions,
        velocities,
    })
}

/// Uniform random initialization used by the plain BPSO baseline.
pub fn random_population<R: Rng + ?Sized>(
    n_particles: usize,
    n_features: usize,
    rng: &mut R,
) -> Population {
    let positions = (0..n_particles)
        .map(|_| {
            let mut mask = FeatureMask::new((0..n_features).map(|_| rng.gen_bool(0.5)).collect());
            if mask.none() {
                mask.set(rng.gen_range(0..n_features), true);
            }
            mask
        })
        .collect();
    Population {
        positions,
        velocities: vec![vec![0.0; n_features]; n_particles],
    }
}
