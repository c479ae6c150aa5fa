use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

/// Fully connected layer, `y = x·W + b` with `W` stored `inputs × outputs` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-style normal initialization, zero bias.
    pub fn he<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    fn check(&self) -> Result<()> {
        if self.weight.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::Shape(format!(
                "dense layer {}x{} has {} weights and {} biases",
                self.inputs,
                self.outputs,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients laid out exactly like the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<DenseGrad>,
}

impl GradientBundle {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, mlp: &Mlp) -> bool {
        self.layers.len() == mlp.layers.len()
            && self
                .layers
                .iter()
                .zip(&mlp.layers)
                .all(|(g, l)| g.weight.len() == l.weight.len() && g.bias.len() == l.bias.len())
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight
                .iter_mut()
                .zip(&b.weight)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    batch: usize,
    /// Input of each layer (`inputs[0]` is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
}

/// Multilayer perceptron; the activation follows every layer but the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub activation: Activation,
    pub layers: Vec<Dense>,
}

/// `c = a·b (+ c if accumulate)` for row-major slices with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above keep every index the kernel touches inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// He-initialized hidden layers and a zero output layer.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "invalid layer widths {widths:?}"
            )));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                if i + 1 == n {
                    Dense::zeros(widths[i], widths[i + 1])
                } else {
                    Dense::he(widths[i], widths[i + 1], rng)
                }
            })
            .collect();
        Ok(Self {
            activation: Activation::Silu,
            layers,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        w.extend(self.layers.last().map(|l| l.outputs));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for l in &self.layers {
            l.check()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer output width {} feeds layer input width {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if self
            .layers
            .iter()
            .any(|l| l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidInput(
                "network parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Batched forward pass over `batch` row-major inputs.
    pub fn forward(&self, input: &[f64], batch: usize) -> Vec<f64> {
        self.forward_cached(input, batch).0
    }

    pub fn forward_cached(&self, input: &[f64], batch: usize) -> (Vec<f64>, MlpCache) {
        assert_eq!(
            input.len(),
            batch * self.input_dim(),
            "input length does not match batch"
        );
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut act = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(batch * layer.outputs);
            for _ in 0..batch {
                z.extend_from_slice(&layer.bias);
            }
            gemm(
                batch,
                layer.inputs,
                layer.outputs,
                &act,
                (layer.inputs, 1),
                &layer.weight,
                (layer.outputs, 1),
                &mut z,
                true,
            );
            inputs.push(std::mem::take(&mut act));
            if i == last {
                act = z;
            } else {
                act = z.iter().map(|&v| self.activation.apply(v)).collect();
                pre.push(z);
            }
        }
        (act, MlpCache { batch, inputs, pre })
    }

    /// Parameter gradients of `Σ d_out ⊙ output` for the cached batch.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64]) -> Result<GradientBundle> {
        self.backward_with_input(cache, d_out).map(|(g, _)| g)
    }

    /// As [`Mlp::backward`], also returning the gradient with respect to the input.
    pub fn backward_with_input(
        &self,
        cache: &MlpCache,
        d_out: &[f64],
    ) -> Result<(GradientBundle, Vec<f64>)> {
        let batch = cache.batch;
        if d_out.len() != batch * self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, expected {}",
                d_out.len(),
                batch * self.output_dim()
            )));
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("cache does not belong to this network".into()));
        }
        let mut grads = GradientBundle::zeros_like(self);
        let mut delta = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let a = &cache.inputs[i];
            // dW = aᵀ·δ
            gemm(
                layer.inputs,
                batch,
                layer.outputs,
                a,
                (1, layer.inputs),
                &delta,
                (layer.outputs, 1),
                &mut grads.layers[i].weight,
                false,
            );
            let gb = &mut grads.layers[i].bias;
            for row in delta.chunks_exact(layer.outputs) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            // δ_prev = δ·Wᵀ, then through the activation of the previous layer.
            let mut prev = vec![0.0; batch * layer.inputs];
            gemm(
                batch,
                layer.outputs,
                layer.inputs,
                &delta,
                (layer.outputs, 1),
                &layer.weight,
                (1, layer.outputs),
                &mut prev,
                false,
            );
            if i > 0 {
                let z = &cache.pre[i - 1];
                prev.iter_mut()
                    .zip(z)
                    .for_each(|(d, &zv)| *d *= self.activation.derivative(zv));
            }
            delta = prev;
        }
        Ok((grads, delta))
    }
}
