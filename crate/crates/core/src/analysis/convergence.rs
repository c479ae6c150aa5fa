use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{l1_distance, mean_and_stderr, pdf_from_counts, UniformGrid};
use crate::error::{invalid, Result};
use crate::nn::ScoreNetwork;
use crate::rng;
use crate::sampling::{run_windows, WindowConfig};
use crate::sde::{stationary_pdf_on, FastSlowSystem};
use crate::sgm::generate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    UsOnly,
    CoupledSgmUs,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::UsOnly => "us_only",
            Method::CoupledSgmUs => "coupled_sgm_us",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Steps per window at which the pooled estimate is scored, ascending.
    pub sample_sizes: Vec<usize>,
    pub n_experiments: usize,
    pub n_windows: usize,
    /// Slow-coordinate value the windows are restrained at and the network is conditioned on.
    pub bias_center: f64,
    pub window: WindowConfig,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sample_sizes: vec![100, 200, 500, 1000],
            n_experiments: 100,
            n_windows: 10,
            bias_center: 5.0,
            window: WindowConfig::default(),
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experiments < 2 {
            return Err(invalid("n_experiments must be at least 2"));
        }
        if self.n_windows == 0 {
            return Err(invalid("n_windows must be at least 1"));
        }
        if self.sample_sizes.is_empty()
            || self.sample_sizes[0] == 0
            || self.sample_sizes.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid(
                "sample_sizes must be positive and strictly increasing",
            ));
        }
        if !self.bias_center.is_finite() {
            return Err(invalid("bias_center must be finite"));
        }
        self.window.validate()
    }
}

/// Mean and standard error of the L1 error per sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub method: Method,
    pub sample_sizes: Vec<usize>,
    pub mean_l1: Vec<f64>,
    pub stderr_l1: Vec<f64>,
    pub n_experiments: usize,
    pub n_windows: usize,
}

impl ConvergenceCurve {
    /// `sample_size,pooled_steps,mean_l1,stderr_l1,n_experiments,method_tag`;
    /// `sample_size` counts steps per window.
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("sample_size,pooled_steps,mean_l1,stderr_l1,n_experiments,method_tag\n");
        for i in 0..self.sample_sizes.len() {
            s.push_str(&format!(
                "{},{},{:?},{:?},{},{}\n",
                self.sample_sizes[i],
                self.sample_sizes[i] * self.n_windows,
                self.mean_l1[i],
                self.stderr_l1[i],
                self.n_experiments,
                self.method.tag()
            ));
        }
        s
    }
}

/// Training state whose slow coordinate is closest to `center`.
pub fn nearest_training_state(points: &[[f64; 2]], center: f64) -> Result<[f64; 2]> {
    points
        .iter()
        .copied()
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .min_by(|a, b| (a[0] - center).abs().total_cmp(&(b[0] - center).abs()))
        .ok_or_else(|| invalid("no finite training points"))
}

/// L1 errors of the pooled windows' prefixes of each length in `sizes`.
fn prefix_errors(
    system: &FastSlowSystem,
    initials: &[[f64; 2]],
    config: &StudyConfig,
    seed: u64,
    truth: &super::EmpiricalPdf,
) -> Result<Vec<f64>> {
    let n_max = *config.sample_sizes.last().expect("validated");
    let wc = WindowConfig {
        n_steps: n_max,
        ..config.window.clone()
    };
    let windows = wc.windows(initials, config.bias_center, seed, 0)?;
    let trajectories = run_windows(system, &windows)?;
    let grid: &UniformGrid = &config.window.grid;
    config
        .sample_sizes
        .iter()
        .map(|&n| {
            let mut counts = vec![0u64; grid.bins];
            let mut out = 0usize;
            for t in &trajectories {
                for s in &t.states[..=n] {
                    match grid.bin_of(s[1]) {
                        Some(j) => counts[j] += 1,
                        None => out += 1,
                    }
                }
            }
            l1_distance(&pdf_from_counts(counts, out, grid)?.pdf, truth)
        })
        .collect()
}

fn curve(method: Method, config: &StudyConfig, per_experiment: &[Vec<f64>]) -> ConvergenceCurve {
    let (mean_l1, stderr_l1) = (0..config.sample_sizes.len())
        .map(|k| mean_and_stderr(&per_experiment.iter().map(|e| e[k]).collect::<Vec<_>>()))
        .unzip();
    ConvergenceCurve {
        method,
        sample_sizes: config.sample_sizes.clone(),
        mean_l1,
        stderr_l1,
        n_experiments: config.n_experiments,
        n_windows: config.n_windows,
    }
}

/// Runs `n_experiments` independent US-alone experiments (every window
/// started at the training state nearest the bias center) and, when a network
/// is given, as many coupled experiments (windows started from generated
/// states). Windows run for the largest sample size; each smaller size is
/// scored on the leading part of the same runs.
pub fn convergence_study(
    system: &FastSlowSystem,
    net: Option<&ScoreNetwork>,
    training_points: &[[f64; 2]],
    config: &StudyConfig,
) -> Result<Vec<ConvergenceCurve>> {
    config.validate()?;
    let truth = stationary_pdf_on(system, config.bias_center, &config.window.grid)?;
    let start = nearest_training_state(training_points, config.bias_center)?;
    let us_initials = vec![start; config.n_windows];
    let us: Vec<Vec<f64>> = (0..config.n_experiments)
        .into_par_iter()
        .map(|e| {
            prefix_errors(
                system,
                &us_initials,
                config,
                rng::derive_seed(config.seed, &[0, e as u64]),
                &truth,
            )
        })
        .collect::<Result<_>>()?;
    let mut curves = vec![curve(Method::UsOnly, config, &us)];
    if let Some(net) = net {
        let coupled: Vec<Vec<f64>> = (0..config.n_experiments)
            .into_par_iter()
            .map(|e| {
                let seed = rng::derive_seed(config.seed, &[1, e as u64]);
                let samples = generate(
                    net,
                    &[config.bias_center],
                    config.n_windows,
                    config.window.generation_steps,
                    rng::derive_seed(seed, &[0]),
                )?;
                let initials: Vec<[f64; 2]> =
                    samples.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
                prefix_errors(system, &initials, config, seed, &truth)
            })
            .collect::<Result<_>>()?;
        curves.push(curve(Method::CoupledSgmUs, config, &coupled));
    }
    Ok(curves)
}
