use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, NoiseSchedule};
use crate::error::{invalid, Error, Result};
use crate::nn::{
    adam_step, AdamConfig, AdamState, GradientBundle, NetworkConfig, NormStats, ScoreNetwork,
};
use crate::rng;

/// Rows per parallel work item when accumulating gradients.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaWeighting {
    #[default]
    SigmaSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub n_iterations: usize,
    pub learning_rate: f64,
    /// Cosine decay target reached at the last iteration.
    pub final_learning_rate: f64,
    pub seed: u64,
    pub lambda_weighting: LambdaWeighting,
    pub network: NetworkConfig,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            n_iterations: 50_000,
            learning_rate: 1e-4,
            final_learning_rate: 1e-6,
            seed: 0,
            lambda_weighting: LambdaWeighting::SigmaSquared,
            network: NetworkConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_iterations == 0 {
            return Err(invalid("batch_size and n_iterations must be at least 1"));
        }
        let lr_ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..=self.learning_rate).contains(&self.final_learning_rate);
        if !lr_ok {
            return Err(invalid(format!(
                "need 0 <= final_learning_rate <= learning_rate, got {} and {}",
                self.final_learning_rate, self.learning_rate
            )));
        }
        self.network.validate()?;
        self.adam.validate()
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if self.n_iterations <= 1 {
            return self.learning_rate;
        }
        let frac = iteration as f64 / (self.n_iterations - 1) as f64;
        self.final_learning_rate
            + 0.5 * (self.learning_rate - self.final_learning_rate) * (1.0 + (PI * frac).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss,learning_rate\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{:e},{:e}\n",
                e.iteration, e.loss, e.learning_rate
            ));
        }
        s
    }

    /// Means of consecutive non-overlapping windows of the loss.
    pub fn window_means(&self, window: usize) -> Vec<f64> {
        self.entries
            .chunks(window.max(1))
            .filter(|c| c.len() == window.max(1))
            .map(|c| c.iter().map(|e| e.loss).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: ScoreNetwork,
    pub log: TrainLog,
}

/// Weighted denoising loss and its gradient for given diffusion times and draws.
///
/// `x0` and `y` are in the network's normalized coordinates. The loss is the
/// batch mean of `σ(t)²·‖target − s_θ(xt, t, y)‖²`.
pub fn dsm_loss_fixed(
    net: &ScoreNetwork,
    x0: &[f64],
    y: &[f64],
    times: &[f64],
    draws: &[f64],
) -> Result<(f64, GradientBundle)> {
    let b = times.len();
    let d = net.data_dim;
    let l = net.label_dim;
    if b == 0 {
        return Err(invalid("batch must be non-empty"));
    }
    if x0.len() != b * d || draws.len() != b * d || y.len() != b * l {
        return Err(Error::Shape(
            "batch arrays disagree with the network layout".into(),
        ));
    }
    let sigmas: Vec<f64> = times
        .iter()
        .map(|&t| net.schedule.sigma(t))
        .collect::<Result<_>>()?;
    let starts: Vec<usize> = (0..b).step_by(GRAD_CHUNK).collect();
    let parts: Vec<Result<(f64, GradientBundle)>> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + GRAD_CHUNK).min(b);
            let sig = &sigmas[s..e];
            let xt: Vec<f64> = (s * d..e * d)
                .map(|i| x0[i] + sigmas[i / d] * draws[i])
                .collect();
            let (score, cache) = net.forward_cached(&xt, sig, &y[s * l..e * l])?;
            let mut loss = 0.0;
            let mut upstream = vec![0.0; score.len()];
            for (j, (sv, u)) in score.iter().zip(upstream.iter_mut()).enumerate() {
                let i = s * d + j;
                let sigma = sigmas[i / d];
                let lambda = sigma * sigma;
                let target = -draws[i] / sigma;
                let r = sv - target;
                loss += lambda * r * r;
                *u = 2.0 * lambda * r / b as f64;
            }
            Ok((loss, net.backward_cached(&cache, sig, &upstream)?))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = GradientBundle::zeros_like(&net.mlp);
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        grads.add_assign(&g);
    }
    Ok((total / b as f64, grads))
}

/// Monte-Carlo denoising loss with `t ~ U(t_min, T)` and standard normal draws.
pub fn dsm_loss<R: Rng + ?Sized>(
    net: &ScoreNetwork,
    x0: &[f64],
    y: &[f64],
    rng: &mut R,
) -> Result<(f64, GradientBundle)> {
    let d = net.data_dim;
    if x0.is_empty() || x0.len() % d != 0 {
        return Err(invalid("batch must be non-empty"));
    }
    let b = x0.len() / d;
    let s = net.schedule;
    let times: Vec<f64> = (0..b)
        .map(|_| rng.random_range(s.t_min..=s.t_max))
        .collect();
    let draws: Vec<f64> = (0..b * d).map(|_| rng.sample(StandardNormal)).collect();
    dsm_loss_fixed(net, x0, y, &times, &draws)
}

/// Normalization statistics and the default schedule for a dataset.
pub fn schedule_for(dataset: &LabeledDataset) -> Result<(NormStats, NoiseSchedule)> {
    let norm = NormStats::from_data(
        &dataset.points,
        dataset.data_dim,
        &dataset.labels,
        dataset.label_dim,
    )?;
    let schedule = NoiseSchedule::for_data(&norm.normalize_x(&dataset.points), dataset.data_dim)?;
    Ok((norm, schedule))
}

/// Trains a conditional score network on `dataset`.
///
/// The schedule refers to normalized coordinates; see [`schedule_for`].
pub fn train(
    dataset: &LabeledDataset,
    config: &TrainConfig,
    schedule: &NoiseSchedule,
) -> Result<Trained> {
    dataset.validate()?;
    config.validate()?;
    schedule.validate()?;
    let norm = NormStats::from_data(
        &dataset.points,
        dataset.data_dim,
        &dataset.labels,
        dataset.label_dim,
    )?;
    let xn = norm.normalize_x(&dataset.points);
    let yn = norm.normalize_y(&dataset.labels);
    let mut net = ScoreNetwork::new(
        &config.network,
        *schedule,
        norm,
        rng::derive_seed(config.seed, &[0]),
    )?;
    let mut state = AdamState::new(&net.mlp);
    let mut r = rng::stream(config.seed, &[1]);
    let (d, l, n) = (dataset.data_dim, dataset.label_dim, dataset.len());
    let mut log = TrainLog {
        entries: Vec::with_capacity(config.n_iterations),
    };
    let mut x0 = Vec::with_capacity(config.batch_size * d);
    let mut y = Vec::with_capacity(config.batch_size * l);
    let report = (config.n_iterations / 10).max(1);
    for it in 0..config.n_iterations {
        x0.clear();
        y.clear();
        for _ in 0..config.batch_size {
            let i = r.random_range(0..n);
            x0.extend_from_slice(&xn[i * d..(i + 1) * d]);
            y.extend_from_slice(&yn[i * l..(i + 1) * l]);
        }
        let (loss, grads) = dsm_loss(&net, &x0, &y, &mut r)?;
        if !loss.is_finite() || !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        let lr = config.learning_rate_at(it);
        adam_step(&mut net.mlp, &grads, &mut state, lr, &config.adam)?;
        log.entries.push(TrainLogEntry {
            iteration: it,
            loss,
            learning_rate: lr,
        });
        if (it + 1) % report == 0 {
            log::info!(
                "iteration {}/{} loss {loss:.5} lr {lr:.3e}",
                it + 1,
                config.n_iterations
            );
        }
    }
    Ok(Trained { net, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net(data_dim: usize) -> ScoreNetwork {
        let cfg = NetworkConfig {
            hidden: vec![16, 16],
            n_fourier: 4,
            fourier_scale: 1.0,
        };
        ScoreNetwork::new(
            &cfg,
            NoiseSchedule::new(0.002, 3.0).unwrap(),
            NormStats::identity(data_dim, 1),
            1,
        )
        .unwrap()
    }

    #[test]
    fn zero_draw_zero_net_gives_zero_loss() {
        let net = tiny_net(2);
        let (loss, g) = dsm_loss_fixed(
            &net,
            &[0.5, 0.5, -1.0, 2.0],
            &[0.0, 1.0],
            &[0.2, 0.9],
            &[0.0; 4],
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    /// With a zero network the weighted loss is `‖draw‖²`, so its expectation
    /// is the data dimension.
    #[test]
    fn zero_net_loss_expectation() {
        let net = tiny_net(2);
        let mut r = rng::stream(5, &[]);
        let b = 20_000;
        let x0 = vec![0.0; 2 * b];
        let y = vec![0.0; b];
        let (loss, _) = dsm_loss(&net, &x0, &y, &mut r).unwrap();
        let se = (2.0f64 * 2.0 / b as f64).sqrt();
        assert!((loss - 2.0).abs() < 4.0 * se, "loss {loss}");
    }

    #[test]
    fn chunked_gradient_equals_single_pass() {
        let mut net = tiny_net(1);
        for w in net.mlp.layers.last_mut().unwrap().weight.iter_mut() {
            *w = 0.1;
        }
        let b = 150;
        let x0: Vec<f64> = (0..b).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..b).map(|i| (i as f64 * 0.11).cos()).collect();
        let t: Vec<f64> = (0..b)
            .map(|i| 0.001 + 0.99 * (i as f64 / b as f64))
            .collect();
        let z: Vec<f64> = (0..b).map(|i| (i as f64 * 1.3).cos()).collect();
        let (loss, g) = dsm_loss_fixed(&net, &x0, &y, &t, &z).unwrap();
        let sig: Vec<f64> = t
            .iter()
            .map(|&ti| net.schedule.sigma(ti).unwrap())
            .collect();
        let xt: Vec<f64> = (0..b).map(|i| x0[i] + sig[i] * z[i]).collect();
        let s = net.score_normalized(&xt, &sig, &y).unwrap();
        let direct: f64 = (0..b).map(|i| (sig[i] * s[i] + z[i]).powi(2)).sum::<f64>() / b as f64;
        assert!((loss - direct).abs() < 1e-12 * direct.max(1.0));
        let up: Vec<f64> = (0..b)
            .map(|i| 2.0 * sig[i] * sig[i] * (s[i] + z[i] / sig[i]) / b as f64)
            .collect();
        let g2 = net.backward(&xt, &sig, &y, &up).unwrap();
        let diff = g
            .iter()
            .zip(g2.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-12, "max diff {diff}");
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig {
            n_iterations: 11,
            ..TrainConfig::default()
        };
        assert_eq!(c.learning_rate_at(0), 1e-4);
        assert!((c.learning_rate_at(10) - 1e-6).abs() < 1e-18);
        assert!(c.learning_rate_at(5) < 1e-4 && c.learning_rate_at(5) > 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            final_learning_rate: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let n = 300;
        let pts: Vec<f64> = (0..n)
            .flat_map(|i| [(i as f64).sin(), (i as f64 * 0.7).cos()])
            .collect();
        let labels: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let ds = LabeledDataset::new(pts, 2, labels, 1).unwrap();
        let cfg = TrainConfig {
            batch_size: 32,
            n_iterations: 20,
            learning_rate: 1e-3,
            network: NetworkConfig {
                hidden: vec![16, 16],
                n_fourier: 4,
                fourier_scale: 1.0,
            },
            seed: 9,
            ..TrainConfig::default()
        };
        let (_, sched) = schedule_for(&ds).unwrap();
        let a = train(&ds, &cfg, &sched).unwrap();
        let b = train(&ds, &cfg, &sched).unwrap();
        assert_eq!(a.net.to_json().unwrap(), b.net.to_json().unwrap());
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.entries.len(), 20);
        assert!(a
            .log
            .to_csv()
            .starts_with("iteration,loss,learning_rate\n0,"));
    }
}
