//! Diffusion maps: a spectral coordinate for the slow direction of point clouds.

mod lanczos;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sgm::LabeledDataset;

pub use lanczos::{lanczos_top, LanczosOptions};

/// Largest point set accepted; callers subsample beyond this.
pub const MAX_POINTS: usize = 10_000;
/// Above this size the leading eigenpairs come from Lanczos instead of a full
/// dense decomposition.
pub const DENSE_LIMIT: usize = 1_500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EigenRoute {
    /// Dense for small inputs, Lanczos above [`DENSE_LIMIT`].
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionMapConfig {
    /// Kernel scale; the median pairwise squared distance when absent.
    pub bandwidth: Option<f64>,
    pub alpha: f64,
    pub n_eigenpairs: usize,
    pub route: EigenRoute,
}

impl Default for DiffusionMapConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            alpha: 1.0,
            n_eigenpairs: 5,
            route: EigenRoute::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMapResult {
    /// Descending; the first is the trivial eigenvalue 1.
    pub eigenvalues: Vec<f64>,
    /// Right eigenvectors of the Markov matrix, one entry per point, scaled to
    /// unit norm under the stationary distribution. `eigenvectors[0]` is constant.
    pub eigenvectors: Vec<Vec<f64>>,
    pub bandwidth: f64,
    pub alpha: f64,
}

/// Metadata written next to the coordinate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMapMetadata {
    pub n_points: usize,
    pub bandwidth: f64,
    pub alpha: f64,
    pub eigenvalues: Vec<f64>,
}

impl DiffusionMapResult {
    pub fn n_points(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    /// The first nontrivial coordinate Φ1.
    pub fn phi1(&self) -> &[f64] {
        &self.eigenvectors[1]
    }

    /// `index,phi1,…,phik` rows.
    pub fn to_csv(&self) -> String {
        let k = self.eigenvectors.len();
        let mut s = String::from("index");
        for j in 1..k {
            s.push_str(&format!(",phi{j}"));
        }
        s.push('\n');
        for i in 0..self.n_points() {
            s.push_str(&i.to_string());
            for v in &self.eigenvectors[1..] {
                s.push_str(&format!(",{:?}", v[i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn metadata(&self) -> DiffusionMapMetadata {
        DiffusionMapMetadata {
            n_points: self.n_points(),
            bandwidth: self.bandwidth,
            alpha: self.alpha,
            eigenvalues: self.eigenvalues.clone(),
        }
    }
}

fn check_points(points: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Shape("points do not divide into rows".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(invalid("points must be finite"));
    }
    let n = points.len() / dim;
    if n > MAX_POINTS {
        return Err(invalid(format!(
            "{n} points exceed the cap of {MAX_POINTS}; subsample first"
        )));
    }
    let mut rows: Vec<&[f64]> = points.chunks_exact(dim).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(*b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.dedup();
    if rows.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct points, got {}",
            rows.len()
        )));
    }
    Ok(n)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of all pairwise squared distances (mean of the two central values
/// for an even count).
pub fn median_sq_distance(points: &[f64], dim: usize) -> Result<f64> {
    let n = check_points(points, dim)?;
    let rows: Vec<&[f64]> = points.chunks_exact(dim).collect();
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    let m = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(m, f64::total_cmp);
    if d.len() % 2 == 1 {
        return Ok(upper);
    }
    let lower = d[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (lower + upper))
}

/// Symmetric conjugate `S = D̃^{-1/2} K̃ D̃^{-1/2}` (row-major, n×n) and the
/// row sums `d̃` of the α-normalized kernel.
fn symmetric_kernel(
    points: &[f64],
    dim: usize,
    bandwidth: f64,
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() / dim;
    let rows: Vec<&[f64]> = points.chunks_exact(dim).collect();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-sq_dist(rows[i], rows[j]) / bandwidth).exp();
        }
    });
    let q: Vec<f64> = k
        .par_chunks(n)
        .map(|r| r.iter().sum::<f64>().powf(-alpha))
        .collect();
    k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        row.iter_mut().zip(&q).for_each(|(v, qj)| *v *= q[i] * qj);
    });
    let d: Vec<f64> = k.par_chunks(n).map(|r| r.iter().sum()).collect();
    let s: Vec<f64> = d.iter().map(|v| v.sqrt().recip()).collect();
    k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        row.iter_mut().zip(&s).for_each(|(v, sj)| *v *= s[i] * sj);
    });
    (k, d)
}

/// Row-stochastic Markov matrix `M = D̃^{-1} K̃`, row-major. Meant for small inputs.
pub fn transition_matrix(
    points: &[f64],
    dim: usize,
    bandwidth: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = check_points(points, dim)?;
    let (mut s, d) = symmetric_kernel(points, dim, bandwidth, alpha);
    // M = D̃^{-1/2} S D̃^{1/2}
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] *= d[j].sqrt() / d[i].sqrt();
        }
    }
    Ok(s)
}

fn dense_top(s: Vec<f64>, n: usize, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let eig = SymmetricEigen::try_new(DMatrix::from_row_slice(n, n, &s), 1e-14, 0)
        .ok_or_else(|| Error::Eigen("dense symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok((vals, vecs))
}

/// Leading eigenpairs of the diffusion-map Markov matrix of row-major `points`.
pub fn diffusion_maps(
    points: &[f64],
    dim: usize,
    config: &DiffusionMapConfig,
) -> Result<DiffusionMapResult> {
    let n = check_points(points, dim)?;
    let k = config.n_eigenpairs;
    if k < 2 || k > n {
        return Err(invalid(format!("n_eigenpairs must be in 2..={n}, got {k}")));
    }
    if !(config.alpha.is_finite() && config.alpha >= 0.0) {
        return Err(invalid("alpha must be finite and non-negative"));
    }
    let bandwidth = match config.bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(invalid(format!("bandwidth must be positive, got {b}"))),
        None => median_sq_distance(points, dim)?,
    };
    let (s, d) = symmetric_kernel(points, dim, bandwidth, config.alpha);
    let dense = match config.route {
        EigenRoute::Dense => true,
        EigenRoute::Lanczos => false,
        EigenRoute::Auto => n <= DENSE_LIMIT,
    };
    let (eigenvalues, phis) = if dense {
        dense_top(s, n, k)?
    } else {
        lanczos_top(&s, n, k, &LanczosOptions::default())?
    };
    // ψ = D̃^{-1/2} φ, normalized so Σ π ψ² = 1 with π = d̃ / Σ d̃.
    let total: f64 = d.iter().sum();
    let mut eigenvectors: Vec<Vec<f64>> = phis
        .into_iter()
        .map(|phi| {
            let psi: Vec<f64> = phi.iter().zip(&d).map(|(p, di)| p / di.sqrt()).collect();
            let norm = psi
                .iter()
                .zip(&d)
                .map(|(v, di)| v * v * di / total)
                .sum::<f64>()
                .sqrt();
            psi.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    orient(&mut eigenvectors, points, dim);
    Ok(DiffusionMapResult {
        eigenvalues,
        eigenvectors,
        bandwidth,
        alpha: config.alpha,
    })
}

/// Trivial vector positive; the others non-negatively correlated with the
/// first data coordinate.
fn orient(vectors: &mut [Vec<f64>], points: &[f64], dim: usize) {
    let first: Vec<f64> = points.chunks_exact(dim).map(|r| r[0]).collect();
    let mean = first.iter().sum::<f64>() / first.len() as f64;
    for (j, v) in vectors.iter_mut().enumerate() {
        let flip = if j == 0 {
            v.iter().sum::<f64>() < 0.0
        } else {
            v.iter()
                .zip(&first)
                .map(|(a, b)| a * (b - mean))
                .sum::<f64>()
                < 0.0
        };
        if flip {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Affine map from a raw eigenvector coordinate to the training label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelTransform {
    pub component: usize,
    pub mean: f64,
    pub std: f64,
}

impl LabelTransform {
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.std
    }

    pub fn invert(&self, label: f64) -> f64 {
        label * self.std + self.mean
    }
}

/// Labels every point by the standardized Φ1.
pub fn label_dataset(
    points: &[f64],
    dim: usize,
    result: &DiffusionMapResult,
) -> Result<(LabeledDataset, LabelTransform)> {
    label_dataset_by(points, dim, result, 1)
}

/// Labels every point by the standardized eigenvector `component`.
pub fn label_dataset_by(
    points: &[f64],
    dim: usize,
    result: &DiffusionMapResult,
    component: usize,
) -> Result<(LabeledDataset, LabelTransform)> {
    if dim == 0 || points.len() != dim * result.n_points() {
        return Err(Error::Shape(format!(
            "{} point entries for {} diffusion-map coordinates",
            points.len(),
            result.n_points()
        )));
    }
    let v = result
        .eigenvectors
        .get(component)
        .ok_or_else(|| invalid(format!("component {component} not computed")))?;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if !(std > 1e-12 * (1.0 + mean.abs())) {
        return Err(Error::Degenerate(format!(
            "eigenvector {component} has zero variance"
        )));
    }
    let t = LabelTransform {
        component,
        mean,
        std,
    };
    let labels = v.iter().map(|&x| t.apply(x)).collect();
    Ok((LabeledDataset::new(points.to_vec(), dim, labels, 1)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[]);
        (0..n)
            .flat_map(|_| [r.random_range(0.0..4.0), r.random_range(-0.3..0.3)])
            .collect()
    }

    #[test]
    fn three_collinear_points() {
        let pts = [0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        let cfg = DiffusionMapConfig {
            n_eigenpairs: 3,
            ..Default::default()
        };
        let r = diffusion_maps(&pts, 2, &cfg).unwrap();
        let m = transition_matrix(&pts, 2, r.bandwidth, 1.0).unwrap();
        // Reflection symmetry makes (1, 0, −1) an eigenvector with eigenvalue M00 − M02.
        assert!((r.eigenvalues[1] - (m[0] - m[2])).abs() < 1e-12);
        let phi = r.phi1();
        assert!(phi[1].abs() < 1e-12);
        assert!((phi[0] + phi[2]).abs() < 1e-12);
        assert!(phi[2] > 0.0);
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-8);
        assert!(r.eigenvectors[0].iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn default_bandwidth_is_median() {
        let pts = [0.0, 1.0, 3.0];
        // squared distances 1, 9, 4 -> median 4
        assert_eq!(median_sq_distance(&pts, 1).unwrap(), 4.0);
        let pts4 = [0.0, 1.0, 3.0, 7.0];
        // 1, 9, 49, 4, 36, 16 -> (9 + 16) / 2
        assert_eq!(median_sq_distance(&pts4, 1).unwrap(), 12.5);
    }

    #[test]
    fn degenerate_inputs() {
        let same = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            diffusion_maps(&same, 2, &Default::default()),
            Err(Error::Degenerate(_))
        ));
        let pts = [0.0, 1.0, 2.0];
        let cfg = DiffusionMapConfig {
            n_eigenpairs: 1,
            ..Default::default()
        };
        assert!(diffusion_maps(&pts, 1, &cfg).is_err());
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let pts = cloud(300, 4);
        let a = diffusion_maps(
            &pts,
            2,
            &DiffusionMapConfig {
                route: EigenRoute::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        let b = diffusion_maps(
            &pts,
            2,
            &DiffusionMapConfig {
                route: EigenRoute::Lanczos,
                ..Default::default()
            },
        )
        .unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        let diff = a
            .phi1()
            .iter()
            .zip(b.phi1())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn phi1_follows_long_axis() {
        let pts = cloud(400, 5);
        let r = diffusion_maps(&pts, 2, &Default::default()).unwrap();
        let x: Vec<f64> = pts.chunks(2).map(|p| p[0]).collect();
        let rho = crate::analysis::spearman(r.phi1(), &x).unwrap();
        assert!(rho > 0.99, "{rho}");
    }

    #[test]
    fn labels_are_standardized() {
        let pts = cloud(100, 6);
        let r = diffusion_maps(&pts, 2, &Default::default()).unwrap();
        let (ds, t) = label_dataset(&pts, 2, &r).unwrap();
        let mean = ds.labels.iter().sum::<f64>() / 100.0;
        let var = ds.labels.iter().map(|v| v * v).sum::<f64>() / 100.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!((t.invert(ds.labels[3]) - r.phi1()[3]).abs() < 1e-12);
        assert!(matches!(
            label_dataset_by(&pts, 2, &r, 0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            label_dataset(&pts[..10], 2, &r),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sign_flip_flips_labels() {
        let pts = cloud(60, 7);
        let r = diffusion_maps(&pts, 2, &Default::default()).unwrap();
        let mut flipped = r.clone();
        flipped.eigenvectors[1].iter_mut().for_each(|v| *v = -*v);
        let (a, _) = label_dataset(&pts, 2, &r).unwrap();
        let (b, _) = label_dataset(&pts, 2, &flipped).unwrap();
        assert!(a
            .labels
            .iter()
            .zip(&b.labels)
            .all(|(x, y)| (x + y).abs() < 1e-12));
    }

    #[test]
    fn csv_and_metadata() {
        let pts = [0.0, 0.0, 1.0, 0.0, 2.0, 0.5];
        let r = diffusion_maps(
            &pts,
            2,
            &DiffusionMapConfig {
                n_eigenpairs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("index,phi1,phi2\n0,"));
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(r.metadata().eigenvalues.len(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn markov_rows_and_spectrum(pts in prop::collection::vec(-3.0f64..3.0, 8..40), alpha in 0.0f64..1.0) {
            let n = pts.len() / 2 * 2;
            let pts = &pts[..n];
            prop_assume!(check_points(pts, 2).is_ok());
            let r = diffusion_maps(pts, 2, &DiffusionMapConfig { alpha, n_eigenpairs: 3.min(n / 2), ..Default::default() }).unwrap();
            let m = transition_matrix(pts, 2, r.bandwidth, alpha).unwrap();
            for row in m.chunks(n / 2) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            prop_assert!((r.eigenvalues[0] - 1.0).abs() < 1e-8);
            prop_assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(r.eigenvalues.iter().all(|&l| (-1.0..=1.0 + 1e-10).contains(&l)));
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..1000) {
            let pts = cloud(30, seed);
            let mut perm: Vec<usize> = (0..30).collect();
            let mut r = rng::stream(seed, &[1]);
            for i in (1..30).rev() {
                perm.swap(i, r.random_range(0..=i));
            }
            let permuted: Vec<f64> = perm.iter().flat_map(|&i| [pts[2 * i], pts[2 * i + 1]]).collect();
            let a = diffusion_maps(&pts, 2, &Default::default()).unwrap();
            let b = diffusion_maps(&permuted, 2, &Default::default()).unwrap();
            prop_assert_eq!(a.bandwidth, b.bandwidth);
            for (p, &i) in perm.iter().enumerate() {
                prop_assert!((a.phi1()[i] - b.phi1()[p]).abs() < 1e-8);
            }
        }
    }
}
