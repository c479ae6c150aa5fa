//! Versioned pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sgmus::analysis::{StudyConfig, UniformGrid};
use sgmus::manifold::DiffusionMapConfig;
use sgmus::sampling::WindowConfig;
use sgmus::sde::{FastSlowSystem, NoiseConvention, SystemKind, BENCHMARK_A1, BENCHMARK_DT};
use sgmus::sgm::{
    NoiseSchedule, TrainConfig, DEFAULT_SIGMA_MAX_FACTOR, DEFAULT_SIGMA_MIN, DEFAULT_T_MIN,
};

use crate::error::{CliError, CliResult};
use crate::overrides::apply_overrides;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    #[default]
    MovingWell,
    FixedWell,
}

/// Benchmark system; omitted coefficients take the published values under
/// the chosen noise convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub kind: SystemName,
    pub h: Option<f64>,
    pub k: Option<f64>,
    pub noise_convention: NoiseConvention,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            kind: SystemName::MovingWell,
            h: None,
            k: None,
            noise_convention: NoiseConvention::PerStep,
            a1: None,
            a2: None,
            a3: None,
        }
    }
}

impl SystemConfig {
    pub fn build(&self, dt: f64) -> CliResult<FastSlowSystem> {
        let kind = match self.kind {
            SystemName::MovingWell => {
                if self.h.is_some() || self.k.is_some() {
                    return Err(CliError::config(
                        "system.h",
                        "h and k must be absent for the moving well",
                    ));
                }
                SystemKind::MovingWell
            }
            SystemName::FixedWell => SystemKind::FixedWell {
                h: self
                    .h
                    .ok_or_else(|| CliError::config("system.h", "required for the fixed well"))?,
                k: self
                    .k
                    .ok_or_else(|| CliError::config("system.k", "required for the fixed well"))?,
            },
        };
        let (a2, a3) = self
            .noise_convention
            .coefficients(dt)
            .map_err(|e| CliError::config("simulate.dt", e))?;
        let sys = FastSlowSystem {
            kind,
            a1: self.a1.unwrap_or(BENCHMARK_A1),
            a2: self.a2.unwrap_or(a2),
            a3: self.a3.unwrap_or(a3),
        };
        sys.validate().map_err(|e| CliError::config("system", e))?;
        Ok(sys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Steps per trajectory.
    pub n_steps: usize,
    pub stride: usize,
    pub dt: f64,
    /// One trajectory per initial state.
    pub initial_states: Vec<[f64; 2]>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_steps: 10_000_000,
            stride: 100,
            dt: BENCHMARK_DT,
            initial_states: vec![[0.0, -1.0]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    KnownSlow,
    DiffusionMaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    pub mode: LabelMode,
    /// Keep every n-th row before labeling.
    pub subsample: Option<usize>,
    pub diffusion_maps: DiffusionMapConfig,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            mode: LabelMode::KnownSlow,
            subsample: None,
            diffusion_maps: DiffusionMapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub sigma_min: f64,
    /// Fixed `σ_max`; otherwise `sigma_max_factor` times the data diameter.
    pub sigma_max: Option<f64>,
    pub sigma_max_factor: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: None,
            sigma_max_factor: DEFAULT_SIGMA_MAX_FACTOR,
            t_min: DEFAULT_T_MIN,
            t_max: 1.0,
        }
    }
}

impl ScheduleConfig {
    /// Schedule for data whose normalized diameter is `diameter`.
    pub fn build(&self, diameter: f64) -> CliResult<NoiseSchedule> {
        let s = NoiseSchedule {
            kind: Default::default(),
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max.unwrap_or(self.sigma_max_factor * diameter),
            t_max: self.t_max,
            t_min: self.t_min,
        };
        s.validate().map_err(|e| CliError::config("schedule", e))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    /// Labels in natural units: slow-coordinate values, or raw Φ1 values
    /// when the dataset was labeled by diffusion maps.
    pub labels: Vec<f64>,
    pub n_samples: usize,
    pub n_steps: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            labels: vec![5.0],
            n_samples: 5000,
            n_steps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoupleConfig {
    pub label: f64,
    pub n_windows: usize,
    pub window: WindowConfig,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self {
            label: 5.0,
            n_windows: 10,
            window: WindowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub grid: UniformGrid,
    /// Convergence study against US alone; skipped when absent.
    pub study: Option<StudyConfig>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            grid: UniformGrid::default(),
            study: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Relative paths resolve against the output root.
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub simulate: SimulateConfig,
    pub label: LabelConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub couple: CoupleConfig,
    pub analyze: AnalyzeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: PathBuf::from("."),
            system: SystemConfig::default(),
            simulate: SimulateConfig::default(),
            label: LabelConfig::default(),
            schedule: ScheduleConfig::default(),
            train: TrainConfig::default(),
            generate: GenerateConfig::default(),
            couple: CoupleConfig::default(),
            analyze: AnalyzeConfig::default(),
        }
    }
}

fn check(ok: bool, field: &str, message: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(field, message))
    }
}

impl PipelineConfig {
    /// Parses JSON text, applies `key=value` overrides and validates.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> CliResult<Self> {
        let parsed: Self =
            serde_json::from_str(text).map_err(|e| CliError::config(json_error_field(&e), e))?;
        let mut value =
            serde_json::to_value(&parsed).map_err(|e| CliError::Validation(e.to_string()))?;
        apply_overrides(&mut value, overrides)?;
        let cfg: Self =
            serde_json::from_value(value).map_err(|e| CliError::config(json_error_field(&e), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingPath {
                path: path.to_path_buf(),
                what: "config file not found".into(),
            },
            _ => CliError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Self::from_json_with_overrides(&text, overrides)
    }

    /// Field-by-field range checks; every failure names its field.
    pub fn validate(&self) -> CliResult<()> {
        check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            &format!("unsupported, expected {SCHEMA_VERSION}"),
        )?;
        let sim = &self.simulate;
        check(
            sim.dt > 0.0 && sim.dt.is_finite(),
            "simulate.dt",
            "must be positive",
        )?;
        self.system.build(sim.dt)?;
        check(sim.n_steps >= 1, "simulate.n_steps", "must be at least 1")?;
        check(sim.stride >= 1, "simulate.stride", "must be at least 1")?;
        check(
            !sim.initial_states.is_empty(),
            "simulate.initial_states",
            "needs at least one state",
        )?;
        check(
            sim.initial_states.iter().flatten().all(|v| v.is_finite()),
            "simulate.initial_states",
            "must be finite",
        )?;
        if let Some(s) = self.label.subsample {
            check(s >= 1, "label.subsample", "must be at least 1")?;
        }
        let dm = &self.label.diffusion_maps;
        check(
            dm.n_eigenpairs >= 2,
            "label.diffusion_maps.n_eigenpairs",
            "must be at least 2",
        )?;
        check(
            dm.alpha.is_finite() && dm.alpha >= 0.0,
            "label.diffusion_maps.alpha",
            "must be non-negative",
        )?;
        if let Some(b) = dm.bandwidth {
            check(
                b > 0.0 && b.is_finite(),
                "label.diffusion_maps.bandwidth",
                "must be positive",
            )?;
        }
        let sc = &self.schedule;
        check(sc.sigma_min > 0.0, "schedule.sigma_min", "must be positive")?;
        check(
            sc.sigma_max_factor > 0.0,
            "schedule.sigma_max_factor",
            "must be positive",
        )?;
        if let Some(m) = sc.sigma_max {
            check(
                m > sc.sigma_min,
                "schedule.sigma_max",
                "must exceed sigma_min",
            )?;
        }
        check(
            0.0 < sc.t_min && sc.t_min < sc.t_max,
            "schedule.t_min",
            "need 0 < t_min < t_max",
        )?;
        let tr = &self.train;
        check(tr.batch_size >= 1, "train.batch_size", "must be at least 1")?;
        check(
            tr.n_iterations >= 1,
            "train.n_iterations",
            "must be at least 1",
        )?;
        check(
            tr.learning_rate > 0.0 && tr.learning_rate.is_finite(),
            "train.learning_rate",
            "must be positive",
        )?;
        check(
            (0.0..=tr.learning_rate).contains(&tr.final_learning_rate),
            "train.final_learning_rate",
            "must lie in [0, learning_rate]",
        )?;
        tr.network
            .validate()
            .map_err(|e| CliError::config("train.network", e))?;
        tr.adam
            .validate()
            .map_err(|e| CliError::config("train.adam", e))?;
        let g = &self.generate;
        check(
            g.labels.iter().all(|v| v.is_finite()),
            "generate.labels",
            "must be finite",
        )?;
        check(g.n_samples >= 1, "generate.n_samples", "must be at least 1")?;
        check(g.n_steps >= 2, "generate.n_steps", "must be at least 2")?;
        let c = &self.couple;
        check(c.label.is_finite(), "couple.label", "must be finite")?;
        check(c.n_windows >= 1, "couple.n_windows", "must be at least 1")?;
        c.window
            .validate()
            .map_err(|e| CliError::config("couple.window", e))?;
        self.analyze
            .grid
            .validate()
            .map_err(|e| CliError::config("analyze.grid", e))?;
        if let Some(st) = &self.analyze.study {
            st.validate()
                .map_err(|e| CliError::config("analyze.study", e))?;
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        sgmus::sha256_hex(self.canonical_json().as_bytes())
    }

    pub fn system(&self) -> CliResult<FastSlowSystem> {
        self.system.build(self.simulate.dt)
    }
}

/// Best-effort field name from a serde error message (`unknown field `x``).
fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    format!("line {} column {}", e.line(), e.column())
}

/// The resolved configuration as a JSON value (used to expose defaults).
pub fn default_config_value() -> Value {
    serde_json::to_value(PipelineConfig::default()).expect("config serializes")
}
