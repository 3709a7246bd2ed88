//! PPO training with epoch-synchronous parallel rollouts.
//!
//! Each epoch, every worker runs its own environment against the same frozen
//! parameter snapshot; the updater then merges the workers' episodes in
//! worker order and performs the policy and value iterations alone.

mod config;
mod rollout;
mod update;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{Ablations, EstimatorSettings, PpoConfig, TrainConfig, Variant};
pub use rollout::{finalize_episode, rollout_epoch, worker_rng, ExperienceBuffer};
pub use update::{update, UpdateStats};

use crate::error::{Error, Result};
use crate::nn::{Adam, Checkpoint, GaussianPolicy, ModelSpec, ValueNet};
use crate::sim::LocalMapper;
use crate::smdp::TerminalKind;

/// One row of the metric log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    /// Cumulative environment steps after this epoch.
    pub env_steps: u64,
    pub episodes: usize,
    /// Mean undiscounted return of episodes that ended on their own or by
    /// the decision cap.
    pub mean_return: f64,
    pub success_rate: f64,
    pub mean_episode_seconds: f64,
    /// Mean commanded duration over all decisions.
    pub mean_fst: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub mean_advantage: f64,
    pub first_ratio_deviation: f64,
}

impl EpochMetrics {
    fn from_epoch(epoch: u64, env_steps: u64, buffer: &ExperienceBuffer, stats: &UpdateStats) -> Self {
        let finished: Vec<_> = buffer.finished().collect();
        let pool: Vec<_> = if finished.is_empty() {
            buffer.episodes.iter().collect()
        } else {
            finished
        };
        let m = pool.len() as f64;
        let steps = buffer.n_steps() as f64;
        Self {
            epoch,
            env_steps,
            episodes: pool.len(),
            mean_return: pool.iter().map(|e| e.total_reward()).sum::<f64>() / m,
            success_rate: pool
                .iter()
                .filter(|e| e.terminal_kind() == Some(TerminalKind::Arrived))
                .count() as f64
                / m,
            mean_episode_seconds: pool.iter().map(|e| e.duration()).sum::<f64>() / m,
            mean_fst: buffer
                .episodes
                .iter()
                .flat_map(|e| e.steps.iter())
                .map(|s| s.action.d)
                .sum::<f64>()
                / steps,
            clip_fraction: stats.clip_fraction,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            mean_ratio: stats.mean_ratio,
            mean_advantage: stats.mean_advantage,
            first_ratio_deviation: stats.first_ratio_deviation,
        }
    }
}

pub fn model_spec(config: &TrainConfig) -> ModelSpec {
    ModelSpec {
        net: config.net.clone(),
        pipeline: config.pipeline(),
        sensor: config.sensor,
        log_std_range: config.log_std_range,
        value_scale: config.value_scale,
    }
}

/// Freshly initialized networks and optimizers, determined by the seed.
pub fn initial_checkpoint(config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    let spec = model_spec(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let policy = GaussianPolicy::new(
        spec.net.clone(),
        spec.pipeline.raw_dim(),
        config.init_log_std,
        spec.log_std_range,
        &mut rng,
    )?;
    let value = ValueNet::new(spec.net.clone(), spec.value_scale, &mut rng)?;
    Ok(Checkpoint {
        policy_opt: Adam::new(config.ppo.policy_lr, policy.params.len()),
        value_opt: Adam::new(config.ppo.value_lr, value.params.len()),
        policy,
        value,
        spec,
        epoch: 0,
        env_steps: 0,
    })
}

/// Drives epochs against one training state.
#[derive(Debug)]
pub struct Trainer {
    config: TrainConfig,
    state: Checkpoint,
    mapper: Arc<LocalMapper>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let state = initial_checkpoint(&config)?;
        Self::resume(config, state)
    }

    /// Continues from a saved state; its architecture must match the config.
    pub fn resume(config: TrainConfig, state: Checkpoint) -> Result<Self> {
        config.validate()?;
        if state.spec != model_spec(&config) {
            return Err(Error::Checkpoint("checkpoint architecture differs from the config".into()));
        }
        let mapper = Arc::new(LocalMapper::new(config.sensor.local_map, config.sensor.lidar));
        Ok(Self { config, state, mapper })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &Checkpoint {
        &self.state
    }

    pub fn into_state(self) -> Checkpoint {
        self.state
    }

    /// Collects one epoch of experience with the current parameters.
    pub fn collect(&self) -> Result<ExperienceBuffer> {
        rollout_epoch(
            &self.config,
            &self.state.policy,
            &self.state.value,
            &self.mapper,
            self.state.epoch,
        )
    }

    /// One rollout and update. On error the state is left as it was before
    /// the epoch.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let started = Instant::now();
        let buffer = self.collect()?;
        let mut next = self.state.clone();
        let stats = update(
            &mut next,
            &buffer,
            &self.config.ppo,
            self.config.normalize_advantages,
            self.state.epoch,
        )?;
        next.epoch += 1;
        next.env_steps += buffer.n_steps() as u64;
        let metrics = EpochMetrics::from_epoch(next.epoch, next.env_steps, &buffer, &stats);
        self.state = next;
        tracing::info!(
            epoch = metrics.epoch,
            mean_return = metrics.mean_return,
            success_rate = metrics.success_rate,
            seconds = started.elapsed().as_secs_f64(),
            "epoch done"
        );
        Ok(metrics)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

pub fn checkpoint_path(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("checkpoint_{epoch:05}.ckpt"))
}

/// Trains for `config.epochs` epochs. With an output directory, writes
/// `metrics.csv`, periodic checkpoints and `final.ckpt`; if an epoch fails,
/// the last good state is saved as `resume.ckpt` before the error returns.
pub fn train(config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let trainer = Trainer::new(config.clone())?;
    train_from(trainer, out_dir)
}

pub fn train_from(mut trainer: Trainer, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(csv::Writer::from_writer(File::create(dir.join("metrics.csv"))?))
        }
        None => None,
    };
    let target = trainer.config.epochs;
    let every = trainer.config.checkpoint_every;
    let mut metrics = Vec::new();
    while trainer.state.epoch < target {
        let m = match trainer.run_epoch() {
            Ok(m) => m,
            Err(e) => {
                if let Some(dir) = out_dir {
                    trainer.state.save(&dir.join("resume.ckpt"))?;
                }
                return Err(e);
            }
        };
        if let Some(w) = log.as_mut() {
            w.serialize(m)?;
            w.flush()?;
        }
        if let Some(dir) = out_dir {
            if every > 0 && m.epoch % every == 0 {
                trainer.state.save(&checkpoint_path(dir, m.epoch))?;
            }
        }
        metrics.push(m);
    }
    if let Some(dir) = out_dir {
        trainer.state.save(&dir.join("final.ckpt"))?;
    }
    Ok(TrainOutcome {
        checkpoint: trainer.into_state(),
        metrics,
    })
}

/// Least-squares slope of `values` against their index.
pub fn trend_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            steps_per_epoch: 48,
            n_workers: 3,
            ppo: PpoConfig {
                policy_iters: 2,
                value_iters: 2,
                ..Default::default()
            },
            ..TrainConfig::desk()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_state() {
        let config = TrainConfig { epochs: 0, ..tiny() };
        let out = train(&config, None).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.checkpoint, initial_checkpoint(&config).unwrap());
    }

    #[test]
    fn rollout_respects_budget_and_finalizes() {
        let trainer = Trainer::new(tiny()).unwrap();
        let buffer = trainer.collect().unwrap();
        assert_eq!(buffer.n_steps(), 48);
        for e in &buffer.episodes {
            assert!(e.is_finalized());
            assert_eq!(e.advantages().len(), e.len());
            assert!(e.len() <= 200);
        }
        let again = trainer.collect().unwrap();
        assert_eq!(buffer.episodes.len(), again.episodes.len());
        for (a, b) in buffer.episodes.iter().zip(&again.episodes) {
            assert_eq!(a.advantages(), b.advantages());
            assert_eq!(a.returns(), b.returns());
        }
    }

    #[test]
    fn first_iteration_ratios_are_one() {
        let mut trainer = Trainer::new(tiny()).unwrap();
        let m = trainer.run_epoch().unwrap();
        assert!(m.first_ratio_deviation < 1e-6, "{}", m.first_ratio_deviation);
        assert_eq!(m.env_steps, 48);
        assert_eq!(trainer.state().epoch, 1);
    }

    #[test]
    fn slope_of_line() {
        assert!((trend_slope(&[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(trend_slope(&[4.0]), 0.0);
    }
}
