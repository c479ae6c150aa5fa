//! Oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use sgmus::analysis::{l1_distance, EmpiricalPdf, UniformGrid};
use sgmus::nn::{NetworkConfig, NormStats, ScoreNetwork};
use sgmus::rng;
use sgmus::sampling::{wham, WhamInput};
use sgmus::sde::euler_maruyama_step;
use sgmus::sgm::{schedule_for, train, LabeledDataset, TrainConfig};

pub fn normal<R: Rng + ?Sized>(r: &mut R) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, r)
}

/// Worst relative error of the score-network parameter gradient against
/// central differences, over `n_nets` random networks.
pub fn score_gradient_fd_error(n_nets: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..n_nets {
        let cfg = NetworkConfig {
            hidden: vec![6, 5],
            n_fourier: 4,
            fourier_scale: 1.0,
        };
        let norm = NormStats {
            x_mean: vec![0.5, -1.0],
            x_scale: vec![2.0, 0.5],
            y_mean: vec![3.0],
            y_scale: vec![1.5],
        };
        let schedule = sgmus::sgm::NoiseSchedule::new(0.002, 5.0).unwrap();
        let mut net = ScoreNetwork::new(&cfg, schedule, norm, seed).unwrap();
        let mut r = rng::stream(seed, &[7]);
        for p in net.mlp.params_mut() {
            *p += 0.3 * normal(&mut r);
        }
        let batch = 3;
        let x: Vec<f64> = (0..2 * batch).map(|_| normal(&mut r)).collect();
        let y: Vec<f64> = (0..batch).map(|_| normal(&mut r)).collect();
        let sigma: Vec<f64> = (0..batch).map(|_| 0.01 + r.random::<f64>()).collect();
        let up: Vec<f64> = (0..2 * batch).map(|_| normal(&mut r)).collect();
        let analytic: Vec<f64> = net
            .backward(&x, &sigma, &y, &up)
            .unwrap()
            .iter()
            .copied()
            .collect();
        let f = |n: &ScoreNetwork| -> f64 {
            n.score_normalized(&x, &sigma, &y)
                .unwrap()
                .iter()
                .zip(&up)
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-5;
        let mut probe = net.clone();
        for (idx, &g) in analytic.iter().enumerate() {
            let orig = *probe.mlp.params_mut().nth(idx).unwrap();
            *probe.mlp.params_mut().nth(idx).unwrap() = orig + h;
            let up_v = f(&probe);
            *probe.mlp.params_mut().nth(idx).unwrap() = orig - h;
            let down_v = f(&probe);
            *probe.mlp.params_mut().nth(idx).unwrap() = orig;
            let fd = (up_v - down_v) / (2.0 * h);
            worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-3));
        }
    }
    worst
}

/// Mean absolute error of a network trained on N(mu, s²) data against the
/// exact perturbed score `-(x - mu) / (s² + σ(t)²)` on a grid of
/// `t ∈ [0.5, 1]` and `x` within two marginal standard deviations.
pub fn gaussian_score_mae(seed: u64, n_iterations: usize) -> f64 {
    let (mu, s) = (0.5, 1.0);
    let mut r = rng::stream(seed, &[0]);
    let points: Vec<f64> = (0..20_000).map(|_| mu + s * normal(&mut r)).collect();
    let data = LabeledDataset::new(points, 1, Vec::new(), 0).unwrap();
    let (_, schedule) = schedule_for(&data).unwrap();
    let cfg = TrainConfig {
        batch_size: 256,
        n_iterations,
        learning_rate: 1e-3,
        final_learning_rate: 1e-5,
        seed,
        network: NetworkConfig {
            hidden: vec![64, 64],
            n_fourier: 16,
            fourier_scale: 1.0,
        },
        ..TrainConfig::default()
    };
    let net = train(&data, &cfg, &schedule).unwrap().net;
    let scale = net.norm.x_scale[0];
    let mut err = 0.0;
    let mut count = 0;
    for i in 0..=5 {
        let t = 0.5 + 0.1 * i as f64;
        // The schedule is defined on normalized data.
        let sigma = net.schedule.sigma(t).unwrap() * scale;
        let var = s * s + sigma * sigma;
        for j in 0..=20 {
            let x = mu + var.sqrt() * (-2.0 + 0.2 * j as f64);
            err += (net.forward(&[x], t, &[]).unwrap()[0] + (x - mu) / var).abs();
            count += 1;
        }
    }
    err / count as f64
}

/// Samples of `p(x) ∝ exp(-β(U(x) + κ/2 (x-c)²))` on `[lo, hi]` by inverse CDF.
pub fn biased_samples(
    beta: f64,
    kappa: f64,
    center: f64,
    n: usize,
    seed: u64,
    u: &dyn Fn(f64) -> f64,
) -> Vec<f64> {
    let (lo, hi, m) = (-2.5, 2.5, 20_000);
    let dx = (hi - lo) / m as f64;
    let w: Vec<f64> = (0..m)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * dx;
            (-beta * (u(x) + 0.5 * kappa * (x - center).powi(2))).exp()
        })
        .collect();
    let mut cdf = Vec::with_capacity(m);
    let mut acc = 0.0;
    for v in &w {
        acc += v;
        cdf.push(acc);
    }
    let mut r = rng::stream(seed, &[]);
    (0..n)
        .map(|_| {
            let target = r.random::<f64>() * acc;
            let i = cdf.partition_point(|c| *c < target).min(m - 1);
            lo + (i as f64 + r.random::<f64>()) * dx
        })
        .collect()
}

/// L1 error of WHAM on synthetic restrained samples of a double well.
pub fn wham_double_well_l1() -> f64 {
    let beta = 3.0;
    let kappa = 8.0;
    let u = |x: f64| (x * x - 1.0).powi(2);
    let grid = UniformGrid::new(-2.5, 2.5, 100).unwrap();
    let edges = grid.edges();
    let centers: Vec<f64> = vec![-1.5, -0.75, 0.0, 0.75, 1.5];
    let mut counts = Vec::new();
    let mut bias = Vec::new();
    for (k, &c) in centers.iter().enumerate() {
        let mut h = vec![0.0; grid.bins];
        for x in biased_samples(beta, kappa, c, 50_000, 100 + k as u64, &u) {
            if let Some(j) = grid.bin_of(x) {
                h[j] += 1.0;
            }
        }
        counts.push(h);
        bias.push(
            (0..grid.bins)
                .map(|j| 0.5 * kappa * (0.5 * (edges[j] + edges[j + 1]) - c).powi(2))
                .collect(),
        );
    }
    let out = wham(
        &WhamInput::new(edges.clone(), counts, bias, beta).unwrap(),
        1e-10,
        100_000,
    )
    .unwrap();
    let truth: Vec<f64> = (0..grid.bins)
        .map(|j| (-beta * u(0.5 * (edges[j] + edges[j + 1]))).exp())
        .collect();
    l1_distance(&out.pdf, &EmpiricalPdf::from_masses(edges, &truth).unwrap()).unwrap()
}

/// Max deviation of single-window, zero-bias WHAM from the normalized histogram.
pub fn wham_identity_error() -> f64 {
    let grid = UniformGrid::new(-1.0, 1.0, 25).unwrap();
    let mut r = rng::stream(5, &[]);
    let counts: Vec<f64> = (0..grid.bins)
        .map(|_| 1.0 + (r.random::<f64>() * 50.0).floor())
        .collect();
    let out = wham(
        &WhamInput::new(
            grid.edges(),
            vec![counts.clone()],
            vec![vec![0.0; grid.bins]],
            2.0,
        )
        .unwrap(),
        1e-12,
        1000,
    )
    .unwrap();
    let hist = EmpiricalPdf::from_masses(grid.edges(), &counts).unwrap();
    out.pdf
        .densities()
        .iter()
        .zip(hist.densities())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Sample variance of `dx = -x dt + dB` after burn-in.
pub fn ou_variance(seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[]);
    let dt = 0.01;
    let mut x = [0.0];
    for _ in 0..1000 {
        x = euler_maruyama_step(x, [-x[0]], [1.0], dt, [normal(&mut r)]);
    }
    let n = 2_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        x = euler_maruyama_step(x, [-x[0]], [1.0], dt, [normal(&mut r)]);
        s += x[0];
        s2 += x[0] * x[0];
    }
    let mean = s / n as f64;
    s2 / n as f64 - mean * mean
}
