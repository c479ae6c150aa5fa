//! Umbrella sampling seeded by generated states, histogram pooling and WHAM.

mod manifest;
mod pipeline;
mod wham;

pub use manifest::{
    InitialSource, WindowManifest, WindowRecord, MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use pipeline::{
    coupled_pipeline, BiasCenter, CoupledResult, FastBiasConfig, Provenance, WindowConfig,
};
pub use wham::{wham, WhamInput, WhamOutput};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{estimate_pdf, pdf_from_counts, EmpiricalPdf, PdfEstimate, UniformGrid};
use crate::error::{invalid, Error, Result};
use crate::sde::{simulate_restrained, FastSlowSystem, HarmonicBias, Restraints, Trajectory};

/// One biased simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UmbrellaWindow {
    pub bias: HarmonicBias,
    /// Optional restraint on the fast coordinate (only needed for WHAM).
    #[serde(default)]
    pub fast_bias: Option<HarmonicBias>,
    pub n_steps: usize,
    pub dt: f64,
    pub initial_state: [f64; 2],
    pub seed: u64,
}

impl UmbrellaWindow {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(invalid("window n_steps must be at least 1"));
        }
        if !self.initial_state.iter().all(|v| v.is_finite()) {
            return Err(invalid(format!(
                "window initial state must be finite, got {:?}",
                self.initial_state
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!(
                "window dt must be positive, got {}",
                self.dt
            )));
        }
        self.restraints().validate()
    }

    pub fn restraints(&self) -> Restraints {
        Restraints {
            slow: Some(self.bias),
            fast: self.fast_bias,
        }
    }
}

/// Runs every window on its own RNG stream; failures carry the window index.
pub fn run_windows(system: &FastSlowSystem, windows: &[UmbrellaWindow]) -> Result<Vec<Trajectory>> {
    if windows.is_empty() {
        return Err(invalid("at least one umbrella window is required"));
    }
    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            w.validate()
                .and_then(|_| {
                    simulate_restrained(
                        system,
                        w.initial_state,
                        w.dt,
                        w.n_steps,
                        1,
                        w.seed,
                        &w.restraints(),
                    )
                })
                .map_err(|e| Error::Window {
                    window: i,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Bins the fast coordinate of every state of every trajectory.
pub fn pool_estimate(trajectories: &[Trajectory], grid: &UniformGrid) -> Result<PdfEstimate> {
    grid.validate()?;
    if trajectories.iter().all(|t| t.is_empty()) {
        return Err(invalid("no samples to pool"));
    }
    let mut counts = vec![0u64; grid.bins];
    let mut out = 0usize;
    for x in trajectories.iter().flat_map(|t| t.fast()) {
        match grid.bin_of(x) {
            Some(j) => counts[j] += 1,
            None => out += 1,
        }
    }
    pdf_from_counts(counts, out, grid)
}

/// Pooled, normalized histogram of the fast coordinate.
pub fn pool_histograms(trajectories: &[Trajectory], grid: &UniformGrid) -> Result<EmpiricalPdf> {
    pool_estimate(trajectories, grid).map(|e| e.pdf)
}

/// Fast-coordinate histogram of one trajectory.
pub fn trajectory_pdf(trajectory: &Trajectory, grid: &UniformGrid) -> Result<PdfEstimate> {
    estimate_pdf(&trajectory.fast().collect::<Vec<_>>(), grid)
}

/// Shared-grid histogram counts and bias energies of fast-restrained windows.
pub fn wham_input(trajectories: &[Trajectory], grid: &UniformGrid, beta: f64) -> Result<WhamInput> {
    let centers: Vec<f64> = {
        let e = grid.edges();
        e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    };
    let mut counts = Vec::with_capacity(trajectories.len());
    let mut bias = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let mut c = vec![0.0; grid.bins];
        for x in t.fast() {
            if let Some(j) = grid.bin_of(x) {
                c[j] += 1.0;
            }
        }
        counts.push(c);
        let b = t.restraints.fast;
        bias.push(
            centers
                .iter()
                .map(|&x| b.map_or(0.0, |b| b.energy(x)))
                .collect(),
        );
    }
    WhamInput::new(grid.edges(), counts, bias, beta)
}
