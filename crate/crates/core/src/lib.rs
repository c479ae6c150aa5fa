//! Score-based generative models as initial-condition generators for umbrella
//! sampling of fast/slow stochastic systems.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`sde`]: benchmark systems, Euler–Maruyama integration, analytic densities
//! - [`nn`]: the dense score network with exact reverse-mode gradients and Adam
//! - [`sgm`]: noise schedule, denoising score matching and reverse-SDE sampling
//! - [`manifold`]: diffusion maps for data-driven slow coordinates
//! - [`sampling`]: umbrella windows, histogram pooling, WHAM, the coupled pipeline
//! - [`analysis`]: histogram densities, L1 errors and the convergence study
//! - [`dataset`]: binary and CSV dataset files

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod manifold;
pub mod nn;
pub mod rng;
pub mod sampling;
pub mod sde;
pub mod sgm;

pub use error::{Error, Result};
pub use nn::sha256_hex;
