use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::DataTable;
use crate::error::{invalid, Error, Result};
use crate::nn::ScoreNetwork;
use crate::rng;

/// Samples per independently seeded generation block.
pub const GENERATION_BLOCK: usize = 256;

/// Draws `n_samples` points conditioned on the raw `label` by integrating the
/// reverse SDE from `T` to `t_min` with `n_steps` Euler–Maruyama steps.
///
/// Returns row-major samples in raw data coordinates.
pub fn generate(
    net: &ScoreNetwork,
    label: &[f64],
    n_samples: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_steps < 2 {
        return Err(invalid(format!(
            "n_steps must be at least 2, got {n_steps}"
        )));
    }
    if label.len() != net.label_dim {
        return Err(Error::Shape(format!(
            "label has {} entries, network expects {}",
            label.len(),
            net.label_dim
        )));
    }
    if label.iter().any(|v| !v.is_finite()) {
        return Err(invalid("label must be finite"));
    }
    let y = net.norm.normalize_y(label);
    let n_blocks = n_samples.div_ceil(GENERATION_BLOCK);
    let blocks: Vec<Result<Vec<f64>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let m = GENERATION_BLOCK.min(n_samples - b * GENERATION_BLOCK);
            reverse_block(net, &y, m, n_steps, rng::stream(seed, &[b as u64]))
        })
        .collect();
    let mut out = Vec::with_capacity(n_samples * net.data_dim);
    for block in blocks {
        out.extend(net.norm.denormalize_x(&block?));
    }
    Ok(out)
}

fn reverse_block(
    net: &ScoreNetwork,
    y: &[f64],
    m: usize,
    n_steps: usize,
    mut r: rng::StreamRng,
) -> Result<Vec<f64>> {
    let d = net.data_dim;
    let s = net.schedule;
    let mut x: Vec<f64> = (0..m * d)
        .map(|_| s.sigma_max * Distribution::<f64>::sample(&StandardNormal, &mut r))
        .collect();
    let ys: Vec<f64> = (0..m).flat_map(|_| y.iter().copied()).collect();
    let dt = (s.t_max - s.t_min) / n_steps as f64;
    for step in 0..n_steps {
        let t = s.t_max - step as f64 * dt;
        let sigma = s.sigma_at(t);
        let g2 = s.g2(t);
        let score = net.score_normalized(&x, &vec![sigma; m], &ys)?;
        let noise = (g2 * dt).sqrt();
        for (xi, si) in x.iter_mut().zip(&score) {
            let z: f64 = StandardNormal.sample(&mut r);
            *xi += g2 * si * dt + noise * z;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ReverseDiverged { step });
        }
    }
    Ok(x)
}

/// Generated samples as a dataset table with the label in the header.
pub fn generated_table(
    samples: Vec<f64>,
    data_dim: usize,
    label: Option<f64>,
    seed: u64,
) -> Result<DataTable> {
    let columns = (1..=data_dim).map(|i| format!("x{i}")).collect();
    DataTable::new(columns, samples, f64::NAN, seed, label)
}
