use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::{Activation, Dense, GradientBundle, Mlp, MlpCache};
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::sgm::NoiseSchedule;

pub const CHECKPOINT_FORMAT: &str = "sgmus-score-network";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture knobs that are not fixed by the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    /// Number of Fourier features of `ln σ`; must be even.
    pub n_fourier: usize,
    pub fourier_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 128, 256, 512, 512, 256, 128, 64],
            n_fourier: 32,
            fourier_scale: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid(format!(
                "hidden widths must be non-empty and positive, got {:?}",
                self.hidden
            )));
        }
        if self.n_fourier == 0 || self.n_fourier % 2 != 0 {
            return Err(invalid(format!(
                "n_fourier must be positive and even, got {}",
                self.n_fourier
            )));
        }
        if !(self.fourier_scale > 0.0 && self.fourier_scale.is_finite()) {
            return Err(invalid("fourier_scale must be positive"));
        }
        Ok(())
    }
}

/// Per-coordinate affine normalization of data and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_scale: Vec<f64>,
}

fn column_stats(values: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (values.len() / dim.max(1)) as f64;
    let mut mean = vec![0.0; dim];
    for row in values.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in values.chunks_exact(dim) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    // Constant columns keep unit scale.
    let scale = var
        .iter()
        .map(|s| (s / n).sqrt())
        .map(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 })
        .collect();
    (mean, scale)
}

impl NormStats {
    pub fn identity(data_dim: usize, label_dim: usize) -> Self {
        Self {
            x_mean: vec![0.0; data_dim],
            x_scale: vec![1.0; data_dim],
            y_mean: vec![0.0; label_dim],
            y_scale: vec![1.0; label_dim],
        }
    }

    /// Mean and standard deviation of row-major `points` and `labels`.
    pub fn from_data(
        points: &[f64],
        data_dim: usize,
        labels: &[f64],
        label_dim: usize,
    ) -> Result<Self> {
        if data_dim == 0 || points.is_empty() || points.len() % data_dim != 0 {
            return Err(invalid("points do not form a non-empty matrix"));
        }
        if label_dim > 0 && labels.len() / label_dim != points.len() / data_dim {
            return Err(Error::Shape(
                "points and labels have different row counts".into(),
            ));
        }
        let (x_mean, x_scale) = column_stats(points, data_dim);
        let (y_mean, y_scale) = if label_dim == 0 {
            (vec![], vec![])
        } else {
            column_stats(labels, label_dim)
        };
        let s = Self {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_mean.len() != self.x_scale.len() || self.y_mean.len() != self.y_scale.len() {
            return Err(Error::Shape(
                "norm_stats mean and scale lengths differ".into(),
            ));
        }
        let finite = self
            .x_mean
            .iter()
            .chain(&self.y_mean)
            .all(|v| v.is_finite());
        let positive = self
            .x_scale
            .iter()
            .chain(&self.y_scale)
            .all(|s| *s > 0.0 && s.is_finite());
        if !finite || !positive {
            return Err(invalid(
                "norm_stats must be finite with strictly positive scales",
            ));
        }
        Ok(())
    }

    pub fn normalize_x(&self, x: &[f64]) -> Vec<f64> {
        affine(x, &self.x_mean, &self.x_scale, false)
    }

    pub fn denormalize_x(&self, x: &[f64]) -> Vec<f64> {
        affine(x, &self.x_mean, &self.x_scale, true)
    }

    pub fn normalize_y(&self, y: &[f64]) -> Vec<f64> {
        affine(y, &self.y_mean, &self.y_scale, false)
    }

    pub fn denormalize_y(&self, y: &[f64]) -> Vec<f64> {
        affine(y, &self.y_mean, &self.y_scale, true)
    }
}

/// Applies the per-column map to every row of `v`.
fn affine(v: &[f64], mean: &[f64], scale: &[f64], inverse: bool) -> Vec<f64> {
    let d = mean.len();
    if d == 0 {
        return v.to_vec();
    }
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let j = i % d;
            if inverse {
                x * scale[j] + mean[j]
            } else {
                (x - mean[j]) / scale[j]
            }
        })
        .collect()
}

/// Conditional score model `s_θ(x, t, y)`.
///
/// The network input is `[x̃ / √(1+σ²), ỹ, sin(2π w c), cos(2π w c)]` with
/// `c = ln σ / 4`, and the score in normalized coordinates is the network
/// output divided by `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetwork {
    pub data_dim: usize,
    pub label_dim: usize,
    pub schedule: NoiseSchedule,
    pub fourier_frequencies: Vec<f64>,
    pub norm: NormStats,
    pub mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    version: u32,
    data_dim: usize,
    label_dim: usize,
    layer_widths: Vec<usize>,
    activation: Activation,
    fourier_frequencies: Vec<f64>,
    norm_stats: NormStats,
    schedule: NoiseSchedule,
    layers: Vec<LayerDoc>,
}

impl ScoreNetwork {
    pub fn new(
        config: &NetworkConfig,
        schedule: NoiseSchedule,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        norm.validate()?;
        let data_dim = norm.x_mean.len();
        let label_dim = norm.y_mean.len();
        if data_dim == 0 {
            return Err(invalid("data dimension must be positive"));
        }
        let mut r = rng::stream(seed, &[0x5C0E]);
        let fourier_frequencies = (0..config.n_fourier / 2)
            .map(|_| config.fourier_scale * r.sample::<f64, _>(StandardNormal))
            .collect();
        let mut widths = vec![data_dim + label_dim + config.n_fourier];
        widths.extend(&config.hidden);
        widths.push(data_dim);
        let mlp = Mlp::new(&widths, &mut r)?;
        Ok(Self {
            data_dim,
            label_dim,
            schedule,
            fourier_frequencies,
            norm,
            mlp,
        })
    }

    pub fn n_fourier(&self) -> usize {
        2 * self.fourier_frequencies.len()
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.label_dim + self.n_fourier()
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.mlp.widths()
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.norm.validate()?;
        self.mlp.validate()?;
        if self.norm.x_mean.len() != self.data_dim || self.norm.y_mean.len() != self.label_dim {
            return Err(Error::Shape(
                "norm_stats do not match data/label dimensions".into(),
            ));
        }
        if self.fourier_frequencies.is_empty()
            || self.fourier_frequencies.iter().any(|w| !w.is_finite())
        {
            return Err(invalid("fourier frequencies must be non-empty and finite"));
        }
        if self.mlp.input_dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network input width {} but layout needs {}",
                self.mlp.input_dim(),
                self.input_dim()
            )));
        }
        if self.mlp.output_dim() != self.data_dim {
            return Err(Error::Shape(format!(
                "network output width {} but data dimension {}",
                self.mlp.output_dim(),
                self.data_dim
            )));
        }
        Ok(())
    }

    fn write_features(&self, xt: &[f64], sigma: f64, y: &[f64], out: &mut Vec<f64>) {
        let c_in = 1.0 / (1.0 + sigma * sigma).sqrt();
        out.extend(xt.iter().map(|v| v * c_in));
        out.extend_from_slice(y);
        let c = sigma.ln() / 4.0;
        for w in &self.fourier_frequencies {
            out.push((TAU * w * c).sin());
        }
        for w in &self.fourier_frequencies {
            out.push((TAU * w * c).cos());
        }
    }

    fn check_batch(&self, xt: &[f64], sigmas: &[f64], y: &[f64]) -> Result<usize> {
        let b = sigmas.len();
        if b == 0 {
            return Err(invalid("batch must be non-empty"));
        }
        if xt.len() != b * self.data_dim || y.len() != b * self.label_dim {
            return Err(Error::Shape(format!(
                "batch of {b} needs {} data and {} label entries, got {} and {}",
                b * self.data_dim,
                b * self.label_dim,
                xt.len(),
                y.len()
            )));
        }
        Ok(b)
    }

    /// Batched score in normalized coordinates, keeping the activations.
    pub fn forward_cached(
        &self,
        xt: &[f64],
        sigmas: &[f64],
        y: &[f64],
    ) -> Result<(Vec<f64>, MlpCache)> {
        let b = self.check_batch(xt, sigmas, y)?;
        let mut input = Vec::with_capacity(b * self.input_dim());
        for i in 0..b {
            let xs = &xt[i * self.data_dim..(i + 1) * self.data_dim];
            let ys = &y[i * self.label_dim..(i + 1) * self.label_dim];
            self.write_features(xs, sigmas[i], ys, &mut input);
        }
        let (mut out, cache) = self.mlp.forward_cached(&input, b);
        for (row, s) in out.chunks_exact_mut(self.data_dim).zip(sigmas) {
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok((out, cache))
    }

    /// Batched score in normalized coordinates.
    pub fn score_normalized(&self, xt: &[f64], sigmas: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.forward_cached(xt, sigmas, y).map(|(s, _)| s)
    }

    /// Parameter gradients of `Σ d_score ⊙ score` for a cached batch.
    pub fn backward_cached(
        &self,
        cache: &MlpCache,
        sigmas: &[f64],
        d_score: &[f64],
    ) -> Result<GradientBundle> {
        if d_score.len() != sigmas.len() * self.data_dim {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, expected {}",
                d_score.len(),
                sigmas.len() * self.data_dim
            )));
        }
        let d_out: Vec<f64> = d_score
            .chunks_exact(self.data_dim)
            .zip(sigmas)
            .flat_map(|(row, s)| row.iter().map(move |v| v / s))
            .collect();
        self.mlp.backward(cache, &d_out)
    }

    /// Parameter gradients for a batch given in normalized coordinates.
    pub fn backward(
        &self,
        xt: &[f64],
        sigmas: &[f64],
        y: &[f64],
        d_score: &[f64],
    ) -> Result<GradientBundle> {
        let (_, cache) = self.forward_cached(xt, sigmas, y)?;
        self.backward_cached(&cache, sigmas, d_score)
    }

    /// Score at a raw data point `x`, diffusion time `t` and raw label `y`,
    /// expressed in raw data coordinates.
    pub fn forward(&self, x: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.data_dim || y.len() != self.label_dim {
            return Err(Error::Shape(format!(
                "expected {} data and {} label entries",
                self.data_dim, self.label_dim
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(invalid("score inputs must be finite"));
        }
        if !(self.schedule.t_min..=self.schedule.t_max).contains(&t) {
            return Err(invalid(format!(
                "diffusion time {t} outside [{}, {}]",
                self.schedule.t_min, self.schedule.t_max
            )));
        }
        let sigma = self.schedule.sigma(t)?;
        let s = self.score_normalized(
            &self.norm.normalize_x(x),
            &[sigma],
            &self.norm.normalize_y(y),
        )?;
        Ok(s.iter()
            .zip(&self.norm.x_scale)
            .map(|(v, sc)| v / sc)
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CheckpointDoc {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            data_dim: self.data_dim,
            label_dim: self.label_dim,
            layer_widths: self.layer_widths(),
            activation: self.mlp.activation,
            fourier_frequencies: self.fourier_frequencies.clone(),
            norm_stats: self.norm.clone(),
            schedule: self.schedule,
            layers: self
                .mlp
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weight: l.weight.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "not a score-network checkpoint (format {:?})",
                doc.format
            )));
        }
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                doc.version
            )));
        }
        let w = &doc.layer_widths;
        if w.len() < 2 || w.len() != doc.layers.len() + 1 {
            return Err(Error::Format(format!(
                "{} layer widths for {} layers",
                w.len(),
                doc.layers.len()
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| Dense {
                inputs: w[i],
                outputs: w[i + 1],
                weight: l.weight,
                bias: l.bias,
            })
            .collect();
        let net = Self {
            data_dim: doc.data_dim,
            label_dim: doc.label_dim,
            schedule: doc.schedule,
            fourier_frequencies: doc.fourier_frequencies,
            norm: doc.norm_stats,
            mlp: Mlp {
                activation: doc.activation,
                layers,
            },
        };
        net.validate()
            .map_err(|e| Error::Format(format!("invalid checkpoint: {e}")))?;
        Ok(net)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.to_json()?;
        std::fs::write(path, &text)?;
        Ok(sha256_hex(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
