use serde::{Deserialize, Serialize};

use super::{
    pool_estimate, run_windows, wham, wham_input, InitialSource, UmbrellaWindow, WhamOutput,
    WindowManifest,
};
use crate::analysis::{EmpiricalPdf, PdfEstimate, UniformGrid};
use crate::error::{invalid, Error, Result};
use crate::nn::ScoreNetwork;
use crate::rng;
use crate::sde::{FastSlowSystem, HarmonicBias, Trajectory, BENCHMARK_DT, DEFAULT_KAPPA};
use crate::sgm::generate;

/// How the slow-coordinate restraint center is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasCenter {
    /// The conditioning label is itself a slow-coordinate value.
    #[default]
    Label,
    /// Median slow coordinate of the generated initial states (for labels
    /// that are not slow-coordinate values, e.g. diffusion-map coordinates).
    GeneratedMedian,
    Fixed(f64),
}

/// Per-window restraints on the fast coordinate; enables WHAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastBiasConfig {
    pub kappa: f64,
    /// One center per window.
    pub centers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub n_steps: usize,
    pub dt: f64,
    pub kappa: f64,
    pub bias_center: BiasCenter,
    pub fast_bias: Option<FastBiasConfig>,
    pub grid: UniformGrid,
    /// Reverse-SDE steps used to generate the initial states.
    pub generation_steps: usize,
    pub wham_tolerance: f64,
    pub wham_max_iterations: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            dt: BENCHMARK_DT,
            kappa: DEFAULT_KAPPA,
            bias_center: BiasCenter::Label,
            fast_bias: None,
            grid: UniformGrid::default(),
            generation_steps: 500,
            wham_tolerance: 1e-10,
            wham_max_iterations: 100_000,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(invalid("n_steps must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        HarmonicBias::new(self.kappa, 0.0)?;
        if let BiasCenter::Fixed(c) = self.bias_center {
            HarmonicBias::new(self.kappa, c)?;
        }
        if let Some(fb) = &self.fast_bias {
            for &c in &fb.centers {
                HarmonicBias::new(fb.kappa, c)?;
            }
        }
        self.grid.validate()?;
        if self.generation_steps < 2 {
            return Err(invalid("generation_steps must be at least 2"));
        }
        if !(self.wham_tolerance > 0.0) || self.wham_max_iterations == 0 {
            return Err(invalid(
                "wham_tolerance and wham_max_iterations must be positive",
            ));
        }
        Ok(())
    }

    /// Windows restrained at `center` starting from `initials`, seeded from
    /// `(seed, tag, i)`.
    pub fn windows(
        &self,
        initials: &[[f64; 2]],
        center: f64,
        seed: u64,
        tag: u64,
    ) -> Result<Vec<UmbrellaWindow>> {
        let bias = HarmonicBias::new(self.kappa, center)?;
        if let Some(fb) = &self.fast_bias {
            if fb.centers.len() != initials.len() {
                return Err(invalid(format!(
                    "{} fast-bias centers for {} windows",
                    fb.centers.len(),
                    initials.len()
                )));
            }
        }
        Ok(initials
            .iter()
            .enumerate()
            .map(|(i, &initial_state)| UmbrellaWindow {
                bias,
                fast_bias: self.fast_bias.as_ref().map(|fb| HarmonicBias {
                    kappa: fb.kappa,
                    center: fb.centers[i],
                }),
                n_steps: self.n_steps,
                dt: self.dt,
                initial_state,
                seed: rng::derive_seed(seed, &[tag, i as u64]),
            })
            .collect())
    }
}

/// Everything needed to rerun a coupled estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub generation_seed: u64,
    pub label: f64,
    pub bias_center: f64,
    pub n_windows: usize,
    pub window_config: WindowConfig,
    pub checkpoint_sha256: String,
    pub estimator: String,
    pub in_range_fraction: f64,
    pub manifest: WindowManifest,
}

#[derive(Debug, Clone)]
pub struct CoupledResult {
    pub pdf: EmpiricalPdf,
    pub pooled: PdfEstimate,
    pub wham: Option<WhamOutput>,
    pub trajectories: Vec<Trajectory>,
    pub provenance: Provenance,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Generates `n_windows` initial states at `label`, runs the restrained
/// windows and pools them (or reweights with WHAM when fast-coordinate
/// restraints are configured).
pub fn coupled_pipeline(
    net: &ScoreNetwork,
    system: &FastSlowSystem,
    label: f64,
    n_windows: usize,
    config: &WindowConfig,
    seed: u64,
) -> Result<CoupledResult> {
    if n_windows == 0 {
        return Err(invalid("n_windows must be at least 1"));
    }
    config.validate()?;
    system.validate()?;
    if net.data_dim != 2 || net.label_dim != 1 {
        return Err(Error::Shape(format!(
            "checkpoint maps {}-d labels to {}-d states; the benchmark systems need 1 and 2",
            net.label_dim, net.data_dim
        )));
    }
    let generation_seed = rng::derive_seed(seed, &[0]);
    let samples = generate(
        net,
        &[label],
        n_windows,
        config.generation_steps,
        generation_seed,
    )?;
    let initials: Vec<[f64; 2]> = samples.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
    let center = match config.bias_center {
        BiasCenter::Label => label,
        BiasCenter::GeneratedMedian => median(initials.iter().map(|p| p[0]).collect()),
        BiasCenter::Fixed(c) => c,
    };
    let windows = config.windows(&initials, center, seed, 1)?;
    let trajectories = run_windows(system, &windows)?;
    let pooled = pool_estimate(&trajectories, &config.grid)?;
    let wham_out = match config.fast_bias {
        Some(_) => Some(wham(
            &wham_input(&trajectories, &config.grid, system.beta_eff())?,
            config.wham_tolerance,
            config.wham_max_iterations,
        )?),
        None => None,
    };
    let provenance = Provenance {
        seed,
        generation_seed,
        label,
        bias_center: center,
        n_windows,
        window_config: config.clone(),
        checkpoint_sha256: net.digest()?,
        estimator: if wham_out.is_some() {
            "wham"
        } else {
            "pooled_histogram"
        }
        .into(),
        in_range_fraction: pooled.in_range_fraction(),
        manifest: WindowManifest::new(*system, &windows, InitialSource::Generated),
    };
    let pdf = wham_out
        .as_ref()
        .map_or_else(|| pooled.pdf.clone(), |w| w.pdf.clone());
    Ok(CoupledResult {
        pdf,
        pooled,
        wham: wham_out,
        trajectories,
        provenance,
    })
}
