//! The two fast/slow benchmark systems, their harmonic restraints, an
//! Euler–Maruyama integrator and the analytic conditional density of the fast
//! coordinate.
//!
//! Coordinates are `[slow, fast]` throughout (`z1, z2` for the moving well,
//! `x1, x2` for the fixed well).

mod integrate;

pub use integrate::{
    euler_maruyama_step, simulate, simulate_ensemble, simulate_restrained, Trajectory,
    DIVERGENCE_BOUND,
};

use serde::{Deserialize, Serialize};

use crate::analysis::{EmpiricalPdf, UniformGrid};
use crate::error::{invalid, Result};

/// Which benchmark potential drives the fast coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    /// Double well whose relative well depth tilts linearly with the slow variable.
    MovingWell,
    /// Double well independent of the slow variable, barrier height `h`,
    /// depth of the `+1` well set by `k`.
    FixedWell { h: f64, k: f64 },
}

/// How the per-step noise amplitudes of a parameter set are turned into SDE
/// diffusion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// Amplitudes multiply a standard normal draw once per step; the
    /// equivalent SDE coefficient is `a / sqrt(dt)`.
    #[default]
    PerStep,
    /// Amplitudes are Brownian diffusion coefficients (increment `a·sqrt(dt)·N(0,1)`).
    Brownian,
}

/// Drift scale of the slow variable used by both benchmark systems.
pub const BENCHMARK_A1: f64 = 1e-4;
/// Noise amplitude of the slow variable.
pub const BENCHMARK_A2: f64 = 1e-4;
/// Noise amplitude of the fast variable (`ε·a1` with ε = 10³).
pub const BENCHMARK_A3: f64 = 1e-1;
/// Integrator step of every benchmark run.
pub const BENCHMARK_DT: f64 = 1e-2;

/// Drift/diffusion pair of a two-dimensional fast/slow SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastSlowSystem {
    #[serde(flatten)]
    pub kind: SystemKind,
    /// Constant drift of the slow variable.
    pub a1: f64,
    /// Diffusion coefficient of the slow variable.
    pub a2: f64,
    /// Diffusion coefficient of the fast variable.
    pub a3: f64,
}

impl FastSlowSystem {
    pub fn moving_well(a1: f64, a2: f64, a3: f64) -> Result<Self> {
        let s = Self {
            kind: SystemKind::MovingWell,
            a1,
            a2,
            a3,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn fixed_well(a1: f64, a2: f64, a3: f64, h: f64, k: f64) -> Result<Self> {
        let s = Self {
            kind: SystemKind::FixedWell { h, k },
            a1,
            a2,
            a3,
        };
        s.validate()?;
        Ok(s)
    }

    /// Benchmark moving-well system with the published amplitudes.
    pub fn benchmark_moving_well(convention: NoiseConvention, dt: f64) -> Result<Self> {
        let (a2, a3) = convention.coefficients(dt)?;
        Self::moving_well(BENCHMARK_A1, a2, a3)
    }

    /// Benchmark fixed-well system with the published amplitudes.
    pub fn benchmark_fixed_well(
        h: f64,
        k: f64,
        convention: NoiseConvention,
        dt: f64,
    ) -> Result<Self> {
        let (a2, a3) = convention.coefficients(dt)?;
        Self::fixed_well(BENCHMARK_A1, a2, a3, h, k)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("a3", self.a3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if let SystemKind::FixedWell { h, k } = self.kind {
            if !(h.is_finite() && k.is_finite()) {
                return Err(invalid("h and k must be finite"));
            }
        }
        Ok(())
    }

    /// Timescale ratio a3/a1.
    pub fn epsilon(&self) -> f64 {
        self.a3 / self.a1
    }

    pub fn noise_scales(&self) -> [f64; 2] {
        [self.a2, self.a3]
    }

    /// Exponent of the stationary fast-variable density, `2/a3²`.
    pub fn beta_eff(&self) -> f64 {
        2.0 / (self.a3 * self.a3)
    }

    /// Potential `V(x2; x1)` whose negative derivative is the fast drift.
    pub fn fast_potential(&self, slow: f64, x: f64) -> f64 {
        match self.kind {
            SystemKind::MovingWell => x.powi(4) - 2.0 * x * x + (0.2 * slow - 1.0) * x,
            SystemKind::FixedWell { h, k } => {
                let q = h - 2.0 * h * x
                    + (1.0 + h - k) * x * x
                    + (0.75 * k - 2.0) * x.powi(3)
                    + x.powi(4);
                (1.0 + x).powi(2) * q
            }
        }
    }

    /// Fast-variable drift, written out as in the defining equations.
    #[inline]
    pub fn fast_drift(&self, slow: f64, x: f64) -> f64 {
        match self.kind {
            SystemKind::MovingWell => -(-1.0 + 0.2 * slow + 4.0 * x * (-1.0 + x * x)),
            SystemKind::FixedWell { h, k } => {
                let x2 = x * x;
                let x3 = x2 * x;
                let one_px = 1.0 + x;
                -(one_px
                    * one_px
                    * (2.0 * (1.0 + h - k) * x - 2.0 * h + 3.0 * (0.75 * k - 2.0) * x2 + 4.0 * x3)
                    + 2.0
                        * one_px
                        * (h - 2.0 * h * x + (1.0 + h - k) * x2 + (0.75 * k - 2.0) * x3 + x2 * x2))
            }
        }
    }

    #[inline]
    pub(crate) fn drift_restrained(&self, state: [f64; 2], restraints: &Restraints) -> [f64; 2] {
        let mut slow = self.a1;
        if let Some(b) = &restraints.slow {
            slow -= b.kappa * (state[0] - b.center);
        }
        let mut fast = self.fast_drift(state[0], state[1]);
        if let Some(b) = &restraints.fast {
            fast -= b.kappa * (state[1] - b.center);
        }
        [slow, fast]
    }
}

impl NoiseConvention {
    /// SDE diffusion coefficients `(a2, a3)` for the published amplitudes at step `dt`.
    pub fn coefficients(self, dt: f64) -> Result<(f64, f64)> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(match self {
            NoiseConvention::PerStep => (BENCHMARK_A2 / dt.sqrt(), BENCHMARK_A3 / dt.sqrt()),
            NoiseConvention::Brownian => (BENCHMARK_A2, BENCHMARK_A3),
        })
    }
}

/// Harmonic restraint `κ/2·(x − center)²` on one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicBias {
    pub kappa: f64,
    pub center: f64,
}

/// Default force constant: stiff against the O(1e-4) slow drift, with dt·κ ≪ 1.
pub const DEFAULT_KAPPA: f64 = 10.0;

impl HarmonicBias {
    pub fn new(kappa: f64, center: f64) -> Result<Self> {
        let b = Self { kappa, center };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(invalid(format!(
                "kappa must be finite and >= 0, got {}",
                self.kappa
            )));
        }
        if !self.center.is_finite() {
            return Err(invalid("bias center must be finite"));
        }
        Ok(())
    }

    /// Bias energy at `x`.
    pub fn energy(&self, x: f64) -> f64 {
        0.5 * self.kappa * (x - self.center).powi(2)
    }
}

/// Restraints applied to a run: the umbrella bias on the slow coordinate and
/// an optional second restraint on the fast coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Restraints {
    pub slow: Option<HarmonicBias>,
    pub fast: Option<HarmonicBias>,
}

impl Restraints {
    pub fn slow(bias: HarmonicBias) -> Self {
        Self {
            slow: Some(bias),
            fast: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.slow
            .iter()
            .chain(self.fast.iter())
            .try_for_each(HarmonicBias::validate)
    }
}

/// Drift `(slow, fast)` at `state`, with the optional slow-coordinate umbrella bias.
pub fn drift(
    system: &FastSlowSystem,
    state: [f64; 2],
    bias: Option<&HarmonicBias>,
) -> Result<[f64; 2]> {
    if !state.iter().all(|v| v.is_finite()) {
        return Err(invalid(format!("state must be finite, got {state:?}")));
    }
    let restraints = Restraints {
        slow: bias.copied(),
        fast: None,
    };
    restraints.validate()?;
    Ok(system.drift_restrained(state, &restraints))
}

const REFINE: usize = 64;

/// Analytic stationary density of the fast coordinate at fixed slow value,
/// `∝ exp(−2V/a3²)`, averaged over the bins delimited by `edges`.
///
/// Each bin is subdivided into 64 trapezoid panels and the result is normalized
/// by the same quadrature, so the returned densities integrate to one exactly
/// and sharp wells narrower than a bin are still resolved.
pub fn stationary_conditional_pdf(
    system: &FastSlowSystem,
    slow: f64,
    edges: &[f64],
) -> Result<EmpiricalPdf> {
    if edges.len() < 2
        || edges.windows(2).any(|e| !(e[1] > e[0]))
        || edges.iter().any(|e| !e.is_finite())
    {
        return Err(invalid(
            "grid must be finite, strictly increasing, with at least two points",
        ));
    }
    if !slow.is_finite() {
        return Err(invalid("slow value must be finite"));
    }
    if let Some(w) = grid_coverage_warning(system, slow, edges[0], edges[edges.len() - 1]) {
        log::warn!("{w}");
    }
    let beta = system.beta_eff();
    let mut points = Vec::with_capacity((edges.len() - 1) * REFINE + 1);
    for (j, e) in edges.windows(2).enumerate() {
        let start = if j == 0 { 0 } else { 1 };
        for r in start..=REFINE {
            points.push(e[0] + (e[1] - e[0]) * r as f64 / REFINE as f64);
        }
    }
    let energies: Vec<f64> = points
        .iter()
        .map(|&x| beta * system.fast_potential(slow, x))
        .collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-(e - e_min)).exp()).collect();
    let masses: Vec<f64> = (0..edges.len() - 1)
        .map(|j| {
            (0..REFINE)
                .map(|r| {
                    let i = j * REFINE + r;
                    0.5 * (weights[i] + weights[i + 1]) * (points[i + 1] - points[i])
                })
                .sum()
        })
        .collect();
    EmpiricalPdf::from_masses(edges.to_vec(), &masses)
}

/// Convenience wrapper over a uniform grid.
pub fn stationary_pdf_on(
    system: &FastSlowSystem,
    slow: f64,
    grid: &UniformGrid,
) -> Result<EmpiricalPdf> {
    grid.validate()?;
    stationary_conditional_pdf(system, slow, &grid.edges())
}

/// Pointwise stationary density on `grid`, normalized by trapezoidal quadrature.
pub fn stationary_conditional_density(
    system: &FastSlowSystem,
    slow: f64,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if grid.len() < 2 || grid.windows(2).any(|e| !(e[1] > e[0])) {
        return Err(invalid(
            "grid must be strictly increasing with at least two points",
        ));
    }
    let beta = system.beta_eff();
    let energies: Vec<f64> = grid
        .iter()
        .map(|&x| beta * system.fast_potential(slow, x))
        .collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut dens: Vec<f64> = energies.iter().map(|e| (-(e - e_min)).exp()).collect();
    let z: f64 = dens
        .windows(2)
        .zip(grid.windows(2))
        .map(|(d, g)| 0.5 * (d[0] + d[1]) * (g[1] - g[0]))
        .sum();
    dens.iter_mut().for_each(|d| *d /= z);
    Ok(dens)
}

/// Local minima of the fast potential in [-3, 3] carrying non-negligible
/// stationary weight.
pub fn fast_wells(system: &FastSlowSystem, slow: f64) -> Vec<f64> {
    let n = 6000;
    let xs: Vec<f64> = (0..=n).map(|i| -3.0 + 6.0 * i as f64 / n as f64).collect();
    let v: Vec<f64> = xs.iter().map(|&x| system.fast_potential(slow, x)).collect();
    let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let beta = system.beta_eff();
    (1..n)
        .filter(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1] && beta * (v[i] - v_min) < 30.0)
        .map(|i| xs[i])
        .collect()
}

/// Message when a multi-well density has a well outside `[lo, hi]`.
pub fn grid_coverage_warning(
    system: &FastSlowSystem,
    slow: f64,
    lo: f64,
    hi: f64,
) -> Option<String> {
    let wells = fast_wells(system, slow);
    let missing: Vec<f64> = wells
        .iter()
        .cloned()
        .filter(|w| *w < lo || *w > hi)
        .collect();
    (wells.len() > 1 && !missing.is_empty()).then(|| {
        format!("grid [{lo}, {hi}] does not cover the wells at {missing:?} of a multimodal density")
    })
}
