use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    /// Residual bound `‖S v − λ v‖` for accepting a Ritz pair.
    pub tolerance: f64,
    pub max_basis: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_basis: 600,
            seed: 0x1A2C,
        }
    }
}

fn matvec(s: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().enumerate().for_each(|(i, yi)| {
        *yi = s[i * n..(i + 1) * n]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
    });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components along `basis` (twice, for stability).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
}

/// Largest `k` eigenpairs of the symmetric row-major `n×n` matrix `s`, by
/// Lanczos with full reorthogonalization.
pub fn lanczos_top(
    s: &[f64],
    n: usize,
    k: usize,
    opts: &LanczosOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if s.len() != n * n || k == 0 || k > n {
        return Err(Error::Shape(format!(
            "lanczos on {}-entry matrix of order {n} for {k} pairs",
            s.len()
        )));
    }
    let mut r = rng::stream(opts.seed, &[n as u64]);
    let mut fresh = |basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..8 {
            let mut v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            orthogonalize(&mut v, basis);
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                return Some(v);
            }
        }
        None
    };
    let max_basis = opts.max_basis.min(n).max(k);
    let mut basis: Vec<Vec<f64>> = vec![fresh(&[]).expect("non-empty space")];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let check_every = 10;
    loop {
        let j = basis.len() - 1;
        matvec(s, n, &basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        let m = basis.len();
        let done = m == max_basis;
        if done || (m >= k && (m % check_every == 0 || b < 1e-10)) {
            let t = DMatrix::from_fn(m, m, |i, l| {
                if i == l {
                    alpha[i]
                } else if i + 1 == l {
                    beta[i]
                } else if l + 1 == i {
                    beta[l]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = &order[..k];
            let converged = top
                .iter()
                .all(|&c| (b * eig.eigenvectors[(m - 1, c)]).abs() < opts.tolerance);
            if converged || done {
                if !converged {
                    let worst = top
                        .iter()
                        .map(|&c| (b * eig.eigenvectors[(m - 1, c)]).abs())
                        .fold(0.0, f64::max);
                    if worst > 1e-6 {
                        return Err(Error::Eigen(format!(
                            "lanczos residual {worst:e} after {m} vectors"
                        )));
                    }
                    log::warn!("lanczos stopped at {m} vectors with residual {worst:e}");
                }
                let vals = top.iter().map(|&c| eig.eigenvalues[c]).collect();
                let vecs = top
                    .iter()
                    .map(|&c| {
                        let mut v = vec![0.0; n];
                        for (i, q) in basis.iter().enumerate() {
                            let coef = eig.eigenvectors[(i, c)];
                            v.iter_mut().zip(q).for_each(|(x, qi)| *x += coef * qi);
                        }
                        let norm = dot(&v, &v).sqrt();
                        v.iter_mut().for_each(|x| *x /= norm);
                        v
                    })
                    .collect();
                return Ok((vals, vecs));
            }
        }
        if b < 1e-10 {
            // Invariant subspace found; continue in its complement.
            match fresh(&basis) {
                Some(v) => {
                    beta.push(0.0);
                    basis.push(v);
                }
                None => return Err(Error::Eigen("lanczos could not extend the basis".into())),
            }
        } else {
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
    }
}
