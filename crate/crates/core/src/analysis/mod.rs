//! Histogram densities, L1 error metrics and the convergence benchmark.

mod convergence;

pub use convergence::{
    convergence_study, nearest_training_state, ConvergenceCurve, Method, StudyConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the unit-integral invariant of [`EmpiricalPdf`].
pub const MASS_TOLERANCE: f64 = 1e-8;

/// A uniform binning of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for UniformGrid {
    /// 200 bins on [-2.5, 2.5]: covers both fast-variable wells with margin.
    fn default() -> Self {
        Self {
            lo: -2.5,
            hi: 2.5,
            bins: 200,
        }
    }
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let grid = Self { lo, hi, bins };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(invalid(format!(
                "grid bounds must satisfy lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.bins == 0 {
            return Err(invalid("grid needs at least one bin"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.bins)
            .map(|i| {
                if i == self.bins {
                    self.hi
                } else {
                    self.lo + i as f64 * w
                }
            })
            .collect()
    }

    /// Bin holding `x`; the right edge belongs to the last bin.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let idx = ((x - self.lo) / self.width()) as usize;
        Some(idx.min(self.bins - 1))
    }
}

/// Binned density with fixed support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPdf {
    edges: Vec<f64>,
    densities: Vec<f64>,
}

impl EmpiricalPdf {
    /// Wraps already-normalized densities, checking the invariants.
    pub fn new(edges: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if densities.len() + 1 != edges.len() {
            return Err(Error::Shape(format!(
                "{} densities for {} edges",
                densities.len(),
                edges.len()
            )));
        }
        if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(invalid("densities must be finite and non-negative"));
        }
        let pdf = Self { edges, densities };
        let mass = pdf.total_mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("density integrates to {mass}, expected 1")));
        }
        Ok(pdf)
    }

    /// Builds a density from non-negative per-bin masses (any positive total).
    pub fn from_masses(edges: Vec<f64>, masses: &[f64]) -> Result<Self> {
        check_edges(&edges)?;
        if masses.len() + 1 != edges.len() {
            return Err(Error::Shape(format!(
                "{} masses for {} edges",
                masses.len(),
                edges.len()
            )));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(invalid("bin masses must be finite and non-negative"));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("all bin masses are zero".into()));
        }
        let densities = masses
            .iter()
            .zip(edges.windows(2))
            .map(|(m, e)| m / total / (e[1] - e[0]))
            .collect();
        Ok(Self { edges, densities })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    pub fn bin_width(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.densities[j] * self.bin_width(j)
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.n_bins()).map(|j| self.mass(j)).sum()
    }

    /// Mass of the bins whose centers lie in `[lo, hi)`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.centers()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c >= lo && **c < hi)
            .map(|(j, _)| self.mass(j))
            .sum()
    }

    /// Gaussian-kernel smoothing over bin centers, renormalized.
    pub fn smoothed(&self, bandwidth: f64) -> EmpiricalPdf {
        if bandwidth <= 0.0 {
            return self.clone();
        }
        let centers = self.centers();
        let masses: Vec<f64> = (0..self.n_bins()).map(|j| self.mass(j)).collect();
        let reach = 5.0 * bandwidth;
        let smoothed: Vec<f64> = centers
            .iter()
            .map(|&c| {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (&ck, &mk) in centers.iter().zip(&masses) {
                    let d = ck - c;
                    if d.abs() <= reach {
                        let w = (-0.5 * (d / bandwidth).powi(2)).exp();
                        acc += w * mk;
                        norm += w;
                    }
                }
                acc / norm
            })
            .collect();
        EmpiricalPdf::from_masses(self.edges.clone(), &smoothed).unwrap_or_else(|_| self.clone())
    }

    /// Center of the highest-density bin with center in `[lo, hi)`.
    pub fn argmax_between(&self, lo: f64, hi: f64) -> Option<f64> {
        self.centers()
            .into_iter()
            .zip(&self.densities)
            .filter(|(c, _)| *c >= lo && *c < hi)
            .fold(None::<(f64, f64)>, |best, (c, &d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((c, d)),
            })
            .map(|(c, _)| c)
    }

    /// Local maxima of the density whose height exceeds `min_fraction` of the peak.
    pub fn modes(&self, min_fraction: f64) -> Vec<f64> {
        let d = &self.densities;
        let peak = d.iter().cloned().fold(0.0, f64::max);
        let centers = self.centers();
        let n = d.len();
        (0..n)
            .filter(|&j| {
                let left = if j == 0 { f64::NEG_INFINITY } else { d[j - 1] };
                let right = if j + 1 == n {
                    f64::NEG_INFINITY
                } else {
                    d[j + 1]
                };
                d[j] > left && d[j] >= right && d[j] >= min_fraction * peak
            })
            .map(|j| centers[j])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,density\n");
        for (c, d) in self.centers().iter().zip(&self.densities) {
            out.push_str(&format!("{c:.17e},{d:.17e}\n"));
        }
        out
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid("need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|e| e[1] <= e[0]) {
        return Err(invalid("bin edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// Result of binning samples: the normalized in-range density plus accounting
/// for the samples that fell outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfEstimate {
    pub pdf: EmpiricalPdf,
    pub counts: Vec<u64>,
    pub n_total: usize,
    pub n_out_of_range: usize,
}

impl PdfEstimate {
    pub fn in_range_fraction(&self) -> f64 {
        (self.n_total - self.n_out_of_range) as f64 / self.n_total as f64
    }

    pub fn out_of_range_fraction(&self) -> f64 {
        self.n_out_of_range as f64 / self.n_total as f64
    }
}

/// Bins integer counts accumulated elsewhere into a normalized estimate.
pub fn pdf_from_counts(
    counts: Vec<u64>,
    n_out_of_range: usize,
    grid: &UniformGrid,
) -> Result<PdfEstimate> {
    let n_in: u64 = counts.iter().sum();
    if n_in == 0 {
        return Err(invalid("no samples fall inside the grid"));
    }
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let pdf = EmpiricalPdf::from_masses(grid.edges(), &masses)?;
    Ok(PdfEstimate {
        pdf,
        counts,
        n_total: n_in as usize + n_out_of_range,
        n_out_of_range,
    })
}

/// Histogram density estimate of `samples` on `grid`.
pub fn estimate_pdf(samples: &[f64], grid: &UniformGrid) -> Result<PdfEstimate> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(invalid("cannot estimate a density from zero samples"));
    }
    let mut counts = vec![0u64; grid.bins];
    let mut out = 0usize;
    for &x in samples {
        if !x.is_finite() {
            return Err(invalid("samples must be finite"));
        }
        match grid.bin_of(x) {
            Some(j) => counts[j] += 1,
            None => out += 1,
        }
    }
    if out == samples.len() {
        return Err(invalid(format!(
            "all {} samples fall outside [{}, {}]",
            out, grid.lo, grid.hi
        )));
    }
    pdf_from_counts(counts, out, grid)
}

/// Σ |p_j − q_j|·w_j over a shared grid.
pub fn l1_distance(p: &EmpiricalPdf, q: &EmpiricalPdf) -> Result<f64> {
    if p.edges != q.edges {
        return Err(Error::Shape("pdfs are defined on different grids".into()));
    }
    Ok((0..p.n_bins())
        .map(|j| (p.densities[j] - q.densities[j]).abs() * p.bin_width(j))
        .sum())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(
            "spearman needs two equal-length series of length >= 2".into(),
        ));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate(
            "constant series has no rank correlation".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
