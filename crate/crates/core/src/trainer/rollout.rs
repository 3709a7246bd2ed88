use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use crate::egae::{egae_advantages, value_targets, EstimatorConfig};
use crate::error::Result;
use crate::eval::generate_with_rng;
use crate::nn::{sample_raw_action, GaussianPolicy, ValueNet};
use crate::sim::{LocalMapper, NavEnv, StepEvent};
use crate::smdp::{EpisodeBuffer, StepRecord, TerminalKind};

/// Finalized episodes gathered during one epoch, in worker-index order.
#[derive(Debug, Clone, Default)]
pub struct ExperienceBuffer {
    pub episodes: Vec<EpisodeBuffer>,
}

impl ExperienceBuffer {
    pub fn n_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps() == 0
    }

    pub fn clear(&mut self) {
        self.episodes.clear();
    }

    /// Episodes that ended on their own or by the decision cap.
    pub fn finished(&self) -> impl Iterator<Item = &EpisodeBuffer> {
        self.episodes.iter().filter(|e| !e.budget_cut)
    }
}

/// Seeds the random stream of one worker in one epoch.
pub fn worker_rng(seed: u64, epoch: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((epoch << 20) | worker as u64);
    rng
}

/// Computes advantages and returns with terminal value 0 and closes the
/// episode.
pub fn finalize_episode(episode: &mut EpisodeBuffer, kind: TerminalKind, estimator: &EstimatorConfig) -> Result<()> {
    let traj = episode.trajectory_with_tail(0.0);
    let advantages = egae_advantages(&traj, estimator);
    let returns = value_targets(&traj, estimator);
    episode.finalize(kind, 0.0, advantages, returns)
}

/// Collects `config.steps_per_epoch` environment steps with a frozen policy
/// and value snapshot, split as evenly as possible over the workers.
pub fn rollout_epoch(
    config: &TrainConfig,
    policy: &GaussianPolicy,
    value: &ValueNet,
    mapper: &Arc<LocalMapper>,
    epoch: u64,
) -> Result<ExperienceBuffer> {
    let n = config.n_workers;
    let per_worker: Vec<usize> = (0..n)
        .map(|w| config.steps_per_epoch / n + usize::from(w < config.steps_per_epoch % n))
        .collect();
    let results: Vec<Result<Vec<EpisodeBuffer>>> = per_worker
        .par_iter()
        .enumerate()
        .map(|(w, &budget)| run_worker(config, policy, value, mapper, &mut worker_rng(config.seed, epoch, w), budget))
        .collect();
    let mut buffer = ExperienceBuffer::default();
    for r in results {
        buffer.episodes.extend(r?);
    }
    Ok(buffer)
}

fn run_worker(
    config: &TrainConfig,
    policy: &GaussianPolicy,
    value: &ValueNet,
    mapper: &Arc<LocalMapper>,
    rng: &mut ChaCha8Rng,
    budget: usize,
) -> Result<Vec<EpisodeBuffer>> {
    let pipeline = config.pipeline();
    let estimator = config.estimator_config();
    let mut episodes = Vec::new();
    let mut steps = 0;
    let mut env: Option<NavEnv> = None;
    while steps < budget {
        let scenario = generate_with_rng(&config.scenario, rng)?;
        let mut obs = match env.as_mut() {
            Some(e) => e.reset(scenario.world, scenario.start, scenario.goal)?,
            None => {
                let e = env.insert(NavEnv::new(
                    scenario.world,
                    config.robot,
                    config.reward,
                    config.mode,
                    mapper.clone(),
                    scenario.start,
                    scenario.goal,
                )?);
                e.observe()
            }
        };
        let env = env.as_mut().expect("environment created above");
        let mut episode = EpisodeBuffer::new();
        let kind = loop {
            if steps == budget {
                episode.budget_cut = true;
                break TerminalKind::Timeout;
            }
            let (mean, log_std) = policy.forward(&obs)?;
            let (raw, log_prob) = sample_raw_action(&mean, &log_std, rng);
            let value_estimate = value.value(&obs)?;
            let mut action = pipeline.convert(&raw)?;
            if let Some(d) = config.fixed_duration {
                action.d = d;
            }
            let out = env.step(&action)?;
            steps += 1;
            episode.push(StepRecord {
                observation: obs,
                raw_action: raw,
                reward: out.reward,
                tau: out.tau,
                value_estimate,
                log_prob,
                action,
            });
            obs = out.next_observation;
            match out.event {
                StepEvent::Arrived => break TerminalKind::Arrived,
                StepEvent::Collided => break TerminalKind::Collided,
                StepEvent::None if episode.len() >= config.max_episode_steps => break TerminalKind::Timeout,
                StepEvent::None => {}
            }
        };
        finalize_episode(&mut episode, kind, &estimator)?;
        episodes.push(episode);
    }
    Ok(episodes)
}
