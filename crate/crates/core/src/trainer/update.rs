use serde::{Deserialize, Serialize};

use super::config::PpoConfig;
use super::rollout::ExperienceBuffer;
use crate::error::{Error, Result};
use crate::nn::{ppo_policy_loss, value_loss, Checkpoint, PolicySample};
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Mean over policy iterations.
    pub policy_loss: f64,
    /// Mean over value iterations.
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub mean_advantage: f64,
    /// Largest `|ratio - 1|` in the first policy iteration.
    pub first_ratio_deviation: f64,
}

/// Runs the policy iterations on the clipped objective and then the value
/// iterations on the stored returns, all on the full buffer. Optimizer state
/// lives in the checkpoint so runs resume exactly.
pub fn update(
    state: &mut Checkpoint,
    buffer: &ExperienceBuffer,
    ppo: &PpoConfig,
    normalize_advantages: bool,
    epoch: u64,
) -> Result<UpdateStats> {
    if buffer.is_empty() {
        return Err(Error::InvalidConfig("update called with an empty buffer".into()));
    }
    let diverged = |e: Error| match e {
        Error::NonFinite(what) => Error::Diverged {
            epoch,
            detail: format!("non-finite {what}"),
        },
        other => other,
    };
    let Checkpoint {
        policy,
        value,
        policy_opt,
        value_opt,
        ..
    } = state;
    let steps = || buffer.episodes.iter().flat_map(|e| e.steps.iter());
    let mut advantages: Vec<f64> = buffer.episodes.iter().flat_map(|e| e.advantages().iter().copied()).collect();
    let returns: Vec<f64> = buffer.episodes.iter().flat_map(|e| e.returns().iter().copied()).collect();
    let n = advantages.len() as f64;
    let mean_advantage = advantages.iter().sum::<f64>() / n;
    if normalize_advantages {
        let var = advantages.iter().map(|a| (a - mean_advantage).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        advantages.iter_mut().for_each(|a| *a = (*a - mean_advantage) / std);
    }
    let samples: Vec<PolicySample<'_>> = steps()
        .zip(&advantages)
        .map(|(s, &advantage)| PolicySample {
            observation: &s.observation,
            raw_action: &s.raw_action,
            old_log_prob: s.log_prob,
            advantage,
        })
        .collect();

    let mut stats = UpdateStats {
        mean_advantage,
        ..Default::default()
    };
    for it in 0..ppo.policy_iters {
        let (lg, s) = ppo_policy_loss(policy, &samples, ppo.clip).map_err(diverged)?;
        if it == 0 {
            stats.first_ratio_deviation = s.max_ratio_deviation;
        }
        stats.policy_loss += lg.loss;
        stats.mean_ratio += s.mean_ratio;
        stats.clip_fraction += s.clip_fraction;
        policy_opt.apply(&mut policy.params, &lg.grad);
        policy.clamp_log_std();
    }
    let k = ppo.policy_iters as f64;
    stats.policy_loss /= k;
    stats.mean_ratio /= k;
    stats.clip_fraction /= k;

    let observations: Vec<&Observation> = steps().map(|s| &s.observation).collect();
    for _ in 0..ppo.value_iters {
        let lg = value_loss(value, &observations, &returns).map_err(diverged)?;
        stats.value_loss += lg.loss;
        value_opt.apply(&mut value.params, &lg.grad);
    }
    stats.value_loss /= ppo.value_iters as f64;

    if policy.params.iter().chain(&value.params).any(|p| !p.is_finite()) {
        return Err(Error::Diverged {
            epoch,
            detail: "non-finite parameters after update".into(),
        });
    }
    Ok(stats)
}
