//! Policy and value networks, the clipped policy objective, the squared-error
//! value objective, the optimizer and checkpoints.

mod adam;
mod checkpoint;
mod network;
mod policy;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, ModelSpec};
pub use network::{ConvSpec, ForwardCache, NetConfig, Network};
pub use policy::{
    clipped_surrogate, gaussian_log_prob, ppo_policy_loss, sample_raw_action, value_loss,
    GaussianPolicy, LogStdRange, LossAndGrad, PolicySample, SurrogateStats, ValueNet,
};
