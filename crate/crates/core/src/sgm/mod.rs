//! Denoising score matching and reverse-SDE sampling.

mod generate;
mod schedule;
mod train;

pub use generate::{generate, generated_table, GENERATION_BLOCK};
pub use schedule::{
    max_pairwise_distance, NoiseSchedule, ScheduleKind, DEFAULT_SIGMA_MAX_FACTOR,
    DEFAULT_SIGMA_MIN, DEFAULT_T_MIN,
};
pub use train::{
    dsm_loss, dsm_loss_fixed, schedule_for, train, LambdaWeighting, TrainConfig, TrainLog,
    TrainLogEntry, Trained,
};

use crate::dataset::DataTable;
use crate::error::{invalid, Error, Result};

/// Perturbs `x0` with the VE kernel at time `t`.
///
/// Returns `(xt, target)` with `xt = x0 + σ(t)·draw` and
/// `target = −(xt − x0)/σ(t)²`, the score of the kernel.
pub fn perturb(
    x0: &[f64],
    t: f64,
    schedule: &NoiseSchedule,
    draw: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x0.len() != draw.len() {
        return Err(Error::Shape("x0 and draw differ in length".into()));
    }
    if !(schedule.t_min..=schedule.t_max).contains(&t) {
        return Err(invalid(format!(
            "diffusion time {t} outside [{}, {}]",
            schedule.t_min, schedule.t_max
        )));
    }
    let sigma = schedule.sigma(t)?;
    let xt: Vec<f64> = x0.iter().zip(draw).map(|(x, z)| x + sigma * z).collect();
    let target = xt
        .iter()
        .zip(x0)
        .map(|(a, b)| -(a - b) / (sigma * sigma))
        .collect();
    Ok((xt, target))
}

/// Data points paired with conditioning labels, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: Vec<f64>,
    pub labels: Vec<f64>,
    pub data_dim: usize,
    pub label_dim: usize,
}

impl LabeledDataset {
    pub fn new(
        points: Vec<f64>,
        data_dim: usize,
        labels: Vec<f64>,
        label_dim: usize,
    ) -> Result<Self> {
        let d = Self {
            points,
            labels,
            data_dim,
            label_dim,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.points.len() % self.data_dim != 0 {
            return Err(Error::Shape("points do not divide into rows".into()));
        }
        let n = self.points.len() / self.data_dim;
        if n == 0 {
            return Err(invalid("dataset is empty"));
        }
        let label_rows = if self.label_dim == 0 {
            n
        } else {
            self.labels.len() / self.label_dim
        };
        if label_rows != n || self.labels.len() != n * self.label_dim {
            return Err(Error::Shape(format!(
                "{n} points but {} label entries",
                self.labels.len()
            )));
        }
        if self
            .points
            .iter()
            .chain(&self.labels)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("dataset values must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.data_dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.data_dim..(i + 1) * self.data_dim]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.label_dim..(i + 1) * self.label_dim]
    }

    /// Selects data and label columns of a table by name.
    pub fn from_table(
        table: &DataTable,
        data_columns: &[&str],
        label_columns: &[&str],
    ) -> Result<Self> {
        let pick = |names: &[&str]| -> Result<Vec<f64>> {
            let cols = names
                .iter()
                .map(|n| {
                    table
                        .column(n)
                        .ok_or_else(|| invalid(format!("dataset has no column {n:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((0..table.rows())
                .flat_map(|r| cols.iter().map(move |c| c[r]))
                .collect())
        };
        Self::new(
            pick(data_columns)?,
            data_columns.len(),
            pick(label_columns)?,
            label_columns.len(),
        )
    }

    /// Every `stride`-th row starting at row 0.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(invalid("stride must be positive"));
        }
        let rows: Vec<usize> = (0..self.len()).step_by(stride).collect();
        Self::new(
            rows.iter()
                .flat_map(|&i| self.point(i).iter().copied())
                .collect(),
            self.data_dim,
            rows.iter()
                .flat_map(|&i| self.label(i).iter().copied())
                .collect(),
            self.label_dim,
        )
    }
}
