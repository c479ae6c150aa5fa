use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FastSlowSystem, HarmonicBias, Restraints};
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Any coordinate beyond this magnitude is treated as a blow-up.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// `state + dt·drift + sqrt(dt)·scales⊙draw`.
#[inline]
pub fn euler_maruyama_step<const D: usize>(
    state: [f64; D],
    drift: [f64; D],
    noise_scales: [f64; D],
    dt: f64,
    gaussian_draw: [f64; D],
) -> [f64; D] {
    debug_assert!(dt > 0.0);
    let sqrt_dt = dt.sqrt();
    let mut next = state;
    for i in 0..D {
        next[i] = state[i] + dt * drift[i] + sqrt_dt * noise_scales[i] * gaussian_draw[i];
    }
    next
}

/// Recorded path of a benchmark system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<[f64; 2]>,
    pub dt: f64,
    /// Integrator steps between consecutive recorded states.
    pub stride: usize,
    pub seed: u64,
    pub restraints: Restraints,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn slow(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s[0])
    }

    pub fn fast(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s[1])
    }

    /// The umbrella bias on the slow coordinate, if any.
    pub fn bias(&self) -> Option<&HarmonicBias> {
        self.restraints.slow.as_ref()
    }
}

/// Integrates `n_steps` Euler–Maruyama steps; returns `n_steps + 1` states.
pub fn simulate(
    system: &FastSlowSystem,
    initial: [f64; 2],
    dt: f64,
    n_steps: usize,
    seed: u64,
    bias: Option<&HarmonicBias>,
) -> Result<Trajectory> {
    let restraints = Restraints {
        slow: bias.copied(),
        fast: None,
    };
    simulate_restrained(system, initial, dt, n_steps, 1, seed, &restraints)
}

/// General form of [`simulate`]: arbitrary restraints and a recording stride.
/// States `0, stride, 2·stride, …` up to `n_steps` are kept.
pub fn simulate_restrained(
    system: &FastSlowSystem,
    initial: [f64; 2],
    dt: f64,
    n_steps: usize,
    stride: usize,
    seed: u64,
    restraints: &Restraints,
) -> Result<Trajectory> {
    system.validate()?;
    restraints.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    if stride == 0 {
        return Err(invalid("stride must be at least 1"));
    }
    if !initial.iter().all(|v| v.is_finite()) {
        return Err(invalid(format!(
            "initial state must be finite, got {initial:?}"
        )));
    }

    let mut rng = rng::stream(seed, &[]);
    let scales = system.noise_scales();
    let mut states = Vec::with_capacity(n_steps / stride + 1);
    states.push(initial);
    let mut x = initial;
    for step in 1..=n_steps {
        let draw = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        x = euler_maruyama_step(x, system.drift_restrained(x, restraints), scales, dt, draw);
        if !(x[0].abs() <= DIVERGENCE_BOUND && x[1].abs() <= DIVERGENCE_BOUND) {
            return Err(Error::Diverged { step, state: x });
        }
        if step % stride == 0 {
            states.push(x);
        }
    }
    Ok(Trajectory {
        states,
        dt,
        stride,
        seed,
        restraints: *restraints,
    })
}

/// Independent unbiased runs from each initial state. Run `i` uses the seed
/// derived from `(master_seed, i)`, so the ensemble is order independent.
pub fn simulate_ensemble(
    system: &FastSlowSystem,
    initials: &[[f64; 2]],
    dt: f64,
    n_steps: usize,
    stride: usize,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    if initials.is_empty() {
        return Err(invalid("ensemble needs at least one initial state"));
    }
    initials
        .par_iter()
        .enumerate()
        .map(|(i, &init)| {
            let seed = rng::derive_seed(master_seed, &[i as u64]);
            simulate_restrained(
                system,
                init,
                dt,
                n_steps,
                stride,
                seed,
                &Restraints::default(),
            )
            .map_err(|e| Error::Window {
                window: i,
                source: Box::new(e),
            })
        })
        .collect()
}
