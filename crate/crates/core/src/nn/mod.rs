//! Dense feed-forward score network with hand-written reverse-mode gradients.

mod adam;
mod mlp;
mod score;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{Activation, Dense, DenseGrad, GradientBundle, Mlp, MlpCache};
pub use score::{
    sha256_hex, NetworkConfig, NormStats, ScoreNetwork, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
