use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const DEFAULT_SIGMA_MAX_FACTOR: f64 = 1.5;
pub const DEFAULT_T_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    VarianceExploding,
}

/// Variance-exploding forward SDE: `f = 0`, `σ(t) = σ_min (σ_max/σ_min)^(t/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub t_max: f64,
    pub t_min: f64,
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::VarianceExploding,
            sigma_min,
            sigma_max,
            t_max: 1.0,
            t_min: DEFAULT_T_MIN,
        };
        s.validate()?;
        Ok(s)
    }

    /// `σ_max` set to a multiple of the largest pairwise distance of (normalized) data.
    pub fn for_data(points: &[f64], dim: usize) -> Result<Self> {
        let d = max_pairwise_distance(points, dim)?;
        if !(d > 0.0) {
            return Err(invalid("training data has zero spread"));
        }
        Self::new(
            DEFAULT_SIGMA_MIN,
            (DEFAULT_SIGMA_MAX_FACTOR * d).max(2.0 * DEFAULT_SIGMA_MIN),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma_min, self.sigma_max, self.t_max, self.t_min]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(0.0 < self.sigma_min && self.sigma_min < self.sigma_max) {
            return Err(invalid(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(0.0 < self.t_min && self.t_min < self.t_max) {
            return Err(invalid(format!(
                "need 0 < t_min < T, got {} and {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    /// Noise scale at diffusion time `t ∈ [0, T]`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(invalid(format!(
                "diffusion time {t} outside [0, {}]",
                self.t_max
            )));
        }
        Ok(self.sigma_at(t))
    }

    pub(crate) fn sigma_at(&self, t: f64) -> f64 {
        if t == self.t_max {
            return self.sigma_max;
        }
        if t == 0.0 {
            return self.sigma_min;
        }
        self.sigma_min * (t / self.t_max * self.log_ratio()).exp()
    }

    /// Squared diffusion coefficient `g(t)² = dσ²/dt`.
    pub fn g2(&self, t: f64) -> f64 {
        let s = self.sigma_at(t);
        2.0 * s * s * self.log_ratio() / self.t_max
    }
}

/// Largest Euclidean distance between any two rows.
pub fn max_pairwise_distance(points: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(invalid("point buffer does not divide into rows"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(invalid("points must be finite"));
    }
    let n = points.len() / dim;
    if n < 2 {
        return Ok(0.0);
    }
    match dim {
        1 => {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            Ok(hi - lo)
        }
        2 => {
            let hull = convex_hull(points.chunks_exact(2).map(|p| [p[0], p[1]]).collect());
            Ok(brute_force_diameter(&hull.concat(), 2))
        }
        _ => Ok(brute_force_diameter(points, dim)),
    }
}

fn brute_force_diameter(points: &[f64], dim: usize) -> f64 {
    let rows: Vec<&[f64]> = points.chunks_exact(dim).collect();
    let mut best: f64 = 0.0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d2: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Andrew's monotone chain.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}
