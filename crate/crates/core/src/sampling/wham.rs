use crate::analysis::EmpiricalPdf;
use crate::error::{invalid, Error, Result};

/// Per-window histograms on one grid plus the bias energy of each window at
/// every bin center.
#[derive(Debug, Clone, PartialEq)]
pub struct WhamInput {
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhamOutput {
    pub pdf: EmpiricalPdf,
    /// Dimensionless free-energy offsets, `f[0] = 0`.
    pub offsets: Vec<f64>,
    pub iterations: usize,
}

impl WhamInput {
    pub fn new(
        edges: Vec<f64>,
        counts: Vec<Vec<f64>>,
        bias: Vec<Vec<f64>>,
        beta: f64,
    ) -> Result<Self> {
        let w = Self {
            edges,
            counts,
            bias,
            beta,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let bins = self.edges.len().saturating_sub(1);
        if bins == 0
            || self.edges.windows(2).any(|e| !(e[1] > e[0]))
            || self.edges.iter().any(|e| !e.is_finite())
        {
            return Err(invalid(
                "WHAM grid edges must be finite and strictly increasing",
            ));
        }
        if self.counts.is_empty() || self.counts.len() != self.bias.len() {
            return Err(Error::Shape(format!(
                "{} histograms but {} bias tables",
                self.counts.len(),
                self.bias.len()
            )));
        }
        if self
            .counts
            .iter()
            .chain(&self.bias)
            .any(|row| row.len() != bins)
        {
            return Err(Error::Shape(
                "every histogram and bias table needs one entry per bin".into(),
            ));
        }
        if self
            .counts
            .iter()
            .flatten()
            .any(|c| !(c.is_finite() && *c >= 0.0))
        {
            return Err(invalid("histogram counts must be finite and non-negative"));
        }
        if self.bias.iter().flatten().any(|b| !b.is_finite()) {
            return Err(invalid("bias energies must be finite"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.counts.iter().flatten().sum::<f64>() <= 0.0 {
            return Err(invalid("WHAM needs at least one sample"));
        }
        Ok(())
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Self-consistent WHAM iteration in log space, stopped when the largest
/// change of the offsets drops below `tolerance`.
pub fn wham(input: &WhamInput, tolerance: f64, max_iterations: usize) -> Result<WhamOutput> {
    input.validate()?;
    if !(tolerance > 0.0) {
        return Err(invalid(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let windows = input.counts.len();
    let bins = input.edges.len() - 1;
    let ln_n: Vec<f64> = input
        .counts
        .iter()
        .map(|c| c.iter().sum::<f64>().ln())
        .collect();
    let ln_total: Vec<f64> = (0..bins)
        .map(|j| input.counts.iter().map(|c| c[j]).sum::<f64>().ln())
        .collect();
    let bw: Vec<Vec<f64>> = input
        .bias
        .iter()
        .map(|row| row.iter().map(|b| input.beta * b).collect())
        .collect();
    let mut f = vec![0.0; windows];
    let mut ln_p = vec![0.0; bins];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        for j in 0..bins {
            ln_p[j] = if ln_total[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                ln_total[j]
                    - log_sum_exp(
                        (0..windows)
                            .filter(|&i| ln_n[i].is_finite())
                            .map(|i| ln_n[i] + f[i] - bw[i][j]),
                    )
            };
        }
        let norm = log_sum_exp(ln_p.iter().copied());
        ln_p.iter_mut().for_each(|v| *v -= norm);
        let mut f_new: Vec<f64> = (0..windows)
            .map(|i| -log_sum_exp((0..bins).map(|j| ln_p[j] - bw[i][j])))
            .collect();
        let gauge = f_new[0];
        f_new.iter_mut().for_each(|v| *v -= gauge);
        residual = f_new
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        f = f_new;
        if residual < tolerance {
            let masses: Vec<f64> = ln_p.iter().map(|v| v.exp()).collect();
            let pdf = EmpiricalPdf::from_masses(input.edges.clone(), &masses)?;
            return Ok(WhamOutput {
                pdf,
                offsets: f,
                iterations: it,
            });
        }
    }
    Err(Error::WhamNotConverged {
        iterations: max_iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::l1_distance;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect()
    }

    #[test]
    fn single_unbiased_window_is_identity() {
        let counts = vec![3.0, 0.0, 5.0, 2.0];
        let input = WhamInput::new(
            edges(0.0, 4.0, 4),
            vec![counts.clone()],
            vec![vec![0.0; 4]],
            1.0,
        )
        .unwrap();
        let out = wham(&input, 1e-12, 10).unwrap();
        for (j, c) in counts.iter().enumerate() {
            assert!((out.pdf.mass(j) - c / 10.0).abs() < 1e-10);
        }
        assert_eq!(out.offsets, vec![0.0]);
    }

    #[test]
    fn duplicate_window_changes_nothing() {
        let counts = vec![1.0, 4.0, 5.0];
        let e = edges(-1.0, 2.0, 3);
        let one = wham(
            &WhamInput::new(e.clone(), vec![counts.clone()], vec![vec![0.0; 3]], 2.0).unwrap(),
            1e-12,
            50,
        )
        .unwrap();
        let two = wham(
            &WhamInput::new(e, vec![counts.clone(), counts], vec![vec![0.0; 3]; 2], 2.0).unwrap(),
            1e-12,
            50,
        )
        .unwrap();
        assert!(l1_distance(&one.pdf, &two.pdf).unwrap() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let input = WhamInput::new(
            edges(0.0, 2.0, 2),
            vec![vec![5.0, 1.0], vec![2.0, 7.0]],
            vec![vec![0.0, 3.0], vec![1.0, 0.0]],
            1.0,
        )
        .unwrap();
        match wham(&input, 1e-14, 1) {
            Err(Error::WhamNotConverged {
                iterations: 1,
                residual,
            }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
        assert!(wham(&input, 0.0, 10).is_err());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(WhamInput::new(edges(0.0, 1.0, 2), vec![vec![1.0]], vec![vec![0.0]], 1.0).is_err());
        assert!(
            WhamInput::new(edges(0.0, 1.0, 1), vec![vec![-1.0]], vec![vec![0.0]], 1.0).is_err()
        );
        assert!(WhamInput::new(edges(0.0, 1.0, 1), vec![vec![1.0]], vec![vec![0.0]], 0.0).is_err());
    }

    /// Draws exactly from `exp(−β(U + W))` by inverting its tabulated CDF.
    fn biased_samples(beta: f64, kappa: f64, center: f64, n: usize, seed: u64) -> Vec<f64> {
        let (lo, hi, m) = (-3.0, 3.0, 60_000usize);
        let h = (hi - lo) / m as f64;
        let dens =
            |x: f64| (-beta * ((x * x - 1.0).powi(2) + 0.5 * kappa * (x - center).powi(2))).exp();
        let mut cdf = vec![0.0; m + 1];
        for i in 0..m {
            let a = lo + i as f64 * h;
            cdf[i + 1] = cdf[i] + 0.5 * h * (dens(a) + dens(a + h));
        }
        let total = cdf[m];
        let mut r = rng::stream(seed, &[]);
        (0..n)
            .map(|_| {
                let u = r.random::<f64>() * total;
                let i = cdf.partition_point(|&c| c < u).clamp(1, m);
                let frac = (u - cdf[i - 1]) / (cdf[i] - cdf[i - 1]).max(f64::MIN_POSITIVE);
                lo + (i - 1) as f64 * h + frac * h
            })
            .collect()
    }

    #[test]
    fn recovers_synthetic_double_well() {
        let beta = 3.0;
        let kappa = 8.0;
        let centers = [-1.5, -0.75, 0.0, 0.75, 1.5];
        let e = edges(-2.0, 2.0, 80);
        let mids: Vec<f64> = e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut counts = Vec::new();
        let mut bias = Vec::new();
        for (i, &c) in centers.iter().enumerate() {
            let mut hist = vec![0.0; 80];
            for x in biased_samples(beta, kappa, c, 50_000, i as u64) {
                if (-2.0..2.0).contains(&x) {
                    hist[((x + 2.0) / 0.05) as usize] += 1.0;
                }
            }
            counts.push(hist);
            bias.push(mids.iter().map(|x| 0.5 * kappa * (x - c).powi(2)).collect());
        }
        let out = wham(
            &WhamInput::new(e.clone(), counts, bias, beta).unwrap(),
            1e-9,
            100_000,
        )
        .unwrap();
        // Truth: bin-averaged density, normalized over the grid.
        let masses: Vec<f64> = e
            .windows(2)
            .map(|w| {
                let sub = 200;
                let h = (w[1] - w[0]) / sub as f64;
                (0..sub)
                    .map(|s| {
                        (-beta * ((w[0] + (s as f64 + 0.5) * h).powi(2) - 1.0).powi(2)).exp() * h
                    })
                    .sum()
            })
            .collect();
        let truth = EmpiricalPdf::from_masses(e, &masses).unwrap();
        let l1 = l1_distance(&out.pdf, &truth).unwrap();
        assert!(l1 <= 0.05, "L1 {l1}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gauge_invariance_and_mass(
            shifts in prop::collection::vec(-5.0f64..5.0, 3),
            seed in 0u64..10_000,
        ) {
            let mut r = rng::stream(seed, &[]);
            let e = edges(-1.0, 1.0, 6);
            let mids: Vec<f64> = e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            let centers = [-0.5, 0.0, 0.5];
            let counts: Vec<Vec<f64>> = (0..3).map(|_| (0..6).map(|_| r.random_range(1..50) as f64).collect()).collect();
            let bias: Vec<Vec<f64>> = centers.iter().map(|c| mids.iter().map(|x| 2.0 * (x - c) * (x - c)).collect()).collect();
            let shifted: Vec<Vec<f64>> = bias.iter().zip(&shifts).map(|(row, s)| row.iter().map(|b| b + s).collect()).collect();
            let beta = 1.5;
            let a = wham(&WhamInput::new(e.clone(), counts.clone(), bias, beta).unwrap(), 1e-12, 100_000).unwrap();
            let b = wham(&WhamInput::new(e, counts, shifted, beta).unwrap(), 1e-12, 100_000).unwrap();
            prop_assert!((a.pdf.total_mass() - 1.0).abs() < 1e-10);
            prop_assert!(l1_distance(&a.pdf, &b.pdf).unwrap() < 1e-8);
            for i in 0..3 {
                let expect = a.offsets[i] + beta * (shifts[i] - shifts[0]);
                prop_assert!((b.offsets[i] - expect).abs() < 1e-8);
            }
        }
    }
}
