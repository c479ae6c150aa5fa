use std::path::Path;

use serde::{Deserialize, Serialize};

use super::UmbrellaWindow;
use crate::error::{Error, Result};
use crate::sde::{FastSlowSystem, HarmonicBias};

pub const MANIFEST_FORMAT: &str = "sgmus-window-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Where a window's initial state came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSource {
    Generated,
    TrainingPoint,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowRecord {
    pub index: usize,
    pub center: f64,
    pub kappa: f64,
    #[serde(default)]
    pub fast_bias: Option<HarmonicBias>,
    pub seed: u64,
    pub n_steps: usize,
    pub dt: f64,
    pub initial_state: [f64; 2],
    pub initial_source: InitialSource,
}

/// Listing of every window of a coupled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowManifest {
    pub format: String,
    pub version: u32,
    pub system: FastSlowSystem,
    pub windows: Vec<WindowRecord>,
}

impl WindowManifest {
    pub fn new(system: FastSlowSystem, windows: &[UmbrellaWindow], source: InitialSource) -> Self {
        let windows = windows
            .iter()
            .enumerate()
            .map(|(index, w)| WindowRecord {
                index,
                center: w.bias.center,
                kappa: w.bias.kappa,
                fast_bias: w.fast_bias,
                seed: w.seed,
                n_steps: w.n_steps,
                dt: w.dt,
                initial_state: w.initial_state,
                initial_source: source,
            })
            .collect();
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            system,
            windows,
        }
    }

    /// Windows reconstructed from the records, validated.
    pub fn windows(&self) -> Result<Vec<UmbrellaWindow>> {
        self.windows
            .iter()
            .map(|r| {
                let w = UmbrellaWindow {
                    bias: HarmonicBias {
                        kappa: r.kappa,
                        center: r.center,
                    },
                    fast_bias: r.fast_bias,
                    n_steps: r.n_steps,
                    dt: r.dt,
                    initial_state: r.initial_state,
                    seed: r.seed,
                };
                w.validate().map(|_| w).map_err(|e| Error::Window {
                    window: r.index,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest {} v{}",
                m.format, m.version
            )));
        }
        m.system
            .validate()
            .map_err(|e| Error::Format(format!("invalid system: {e}")))?;
        if m.windows.iter().enumerate().any(|(i, r)| r.index != i) {
            return Err(Error::Format("window indices must be 0, 1, 2, …".into()));
        }
        m.windows().map_err(|e| Error::Format(e.to_string()))?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
