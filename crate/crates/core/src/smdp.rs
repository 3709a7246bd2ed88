//! Semi-Markov domain types: poses, actions, time-indexed discounting and
//! per-episode bookkeeping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Observation;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Robot configuration in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, point: [f64; 2]) -> f64 {
        (self.x - point[0]).hypot(self.y - point[1])
    }
}

/// A command the robot can execute: velocities held for a planned duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutableAction {
    /// Translational velocity, m/s.
    pub v: f64,
    /// Rotational velocity, rad/s.
    pub omega: f64,
    /// Planned duration (forward simulation time), s.
    pub d: f64,
}

/// A point in trajectory-parameter space: velocities that are not bounded by
/// the robot's limits and are interpreted over a fixed time scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualAction {
    pub v_tp: f64,
    pub omega_tp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Arrived,
    Collided,
    Timeout,
}

impl TerminalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalKind::Arrived => "arrived",
            TerminalKind::Collided => "collided",
            TerminalKind::Timeout => "timeout",
        }
    }
}

/// One decision of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub observation: Observation,
    /// Policy output before activation. Two components, or three for the
    /// direct-duration ablation.
    pub raw_action: Vec<f64>,
    pub reward: f64,
    /// Duration actually executed, s.
    pub tau: f64,
    pub value_estimate: f64,
    /// Log-density of `raw_action` under the collecting policy.
    pub log_prob: f64,
    /// Command that was executed (kept for logging).
    pub action: ExecutableAction,
}

/// The reward/duration/value sequence of one episode, the only part of an
/// episode that advantage estimation needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub rewards: Vec<f64>,
    pub taus: Vec<f64>,
    /// Value estimates at each decision state.
    pub values: Vec<f64>,
    /// Value assigned to the state after the last decision (0 at episode end).
    pub terminal_value: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Value estimate of the state following decision `i`.
    pub fn next_value(&self, i: usize) -> f64 {
        if i + 1 < self.values.len() {
            self.values[i + 1]
        } else {
            self.terminal_value
        }
    }
}

/// Per-episode sequence of decisions plus the quantities computed once the
/// episode ends.
#[derive(Debug, Clone, Default)]
pub struct EpisodeBuffer {
    pub steps: Vec<StepRecord>,
    terminal_kind: Option<TerminalKind>,
    /// Set when the episode was cut by the epoch step budget rather than
    /// ending on its own.
    pub budget_cut: bool,
    terminal_value: f64,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl EpisodeBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: StepRecord) {
        debug_assert!(self.terminal_kind.is_none(), "push after finalize");
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_finalized(&self) -> bool {
        self.terminal_kind.is_some()
    }

    pub fn terminal_kind(&self) -> Option<TerminalKind> {
        self.terminal_kind
    }

    pub fn terminal_value(&self) -> f64 {
        self.terminal_value
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    /// Marks the episode as ended. `advantages` and `returns` must have one
    /// entry per step.
    pub fn finalize(
        &mut self,
        kind: TerminalKind,
        terminal_value: f64,
        advantages: Vec<f64>,
        returns: Vec<f64>,
    ) -> Result<()> {
        let n = self.steps.len();
        for len in [advantages.len(), returns.len()] {
            if len != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: len,
                });
            }
        }
        self.terminal_kind = Some(kind);
        self.terminal_value = terminal_value;
        self.advantages = advantages;
        self.returns = returns;
        Ok(())
    }

    /// Decision times `t_0 = 0, t_i = sum_{j<i} tau_j`; one entry per step
    /// plus the end time.
    pub fn cumulative_times(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.steps.len() + 1);
        let mut t = 0.0;
        times.push(t);
        for step in &self.steps {
            t += step.tau;
            times.push(t);
        }
        times
    }

    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.tau).sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Reward/duration/value view, using `terminal_value` for the state after
    /// the last step.
    pub fn trajectory_with_tail(&self, terminal_value: f64) -> Trajectory {
        Trajectory {
            rewards: self.steps.iter().map(|s| s.reward).collect(),
            taus: self.steps.iter().map(|s| s.tau).collect(),
            values: self.steps.iter().map(|s| s.value_estimate).collect(),
            terminal_value,
        }
    }

    pub fn trajectory(&self) -> Trajectory {
        self.trajectory_with_tail(self.terminal_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscountMode {
    /// Discount compounds over elapsed seconds.
    #[default]
    SmdpTime,
    /// Discount compounds once per decision regardless of its duration.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    /// Discount base, per second in `SmdpTime` mode and per decision in
    /// `PerStep` mode.
    pub gamma: f64,
    pub mode: DiscountMode,
}

impl Default for DiscountSpec {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            mode: DiscountMode::SmdpTime,
        }
    }
}

impl DiscountSpec {
    pub fn smdp(gamma: f64) -> Self {
        Self {
            gamma,
            mode: DiscountMode::SmdpTime,
        }
    }

    pub fn per_step(gamma: f64) -> Self {
        Self {
            gamma,
            mode: DiscountMode::PerStep,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Weight applied across one decision that lasted `tau` seconds.
    pub fn step_weight(&self, tau: f64) -> f64 {
        discount_weight(self, tau, 1)
    }
}

/// Discount between two decisions separated by `elapsed_seconds` and
/// `elapsed_steps`. Only one of the two is used, depending on the mode.
pub fn discount_weight(spec: &DiscountSpec, elapsed_seconds: f64, elapsed_steps: u32) -> f64 {
    match spec.mode {
        DiscountMode::SmdpTime => spec.gamma.powf(elapsed_seconds),
        DiscountMode::PerStep => spec.gamma.powi(elapsed_steps as i32),
    }
}

/// Discounted reward-to-go from `start_index`, summed forward from its
/// definition. The state after the last step contributes the episode's
/// terminal value (zero unless bootstrapping was requested).
pub fn discounted_return(
    episode: &EpisodeBuffer,
    start_index: usize,
    spec: &DiscountSpec,
) -> Result<f64> {
    if !episode.is_finalized() {
        return Err(Error::NotFinalized);
    }
    trajectory_return(&episode.trajectory(), start_index, spec)
}

/// [`discounted_return`] over a bare trajectory.
pub fn trajectory_return(traj: &Trajectory, start_index: usize, spec: &DiscountSpec) -> Result<f64> {
    let n = traj.len();
    if start_index >= n {
        return Err(Error::IndexOutOfRange {
            index: start_index,
            len: n,
        });
    }
    let mut total = 0.0;
    let mut elapsed = 0.0;
    for (j, i) in (start_index..n).enumerate() {
        total += discount_weight(spec, elapsed, j as u32) * traj.rewards[i];
        elapsed += traj.taus[i];
    }
    total += discount_weight(spec, elapsed, (n - start_index) as u32) * traj.terminal_value;
    Ok(total)
}

/// All reward-to-go values of a trajectory by the backward recursion
/// `R_i = r_i + w(tau_i) R_{i+1}`.
pub fn discounted_returns(traj: &Trajectory, spec: &DiscountSpec) -> Vec<f64> {
    let mut returns = vec![0.0; traj.len()];
    let mut next = traj.terminal_value;
    for i in (0..traj.len()).rev() {
        next = traj.rewards[i] + spec.step_weight(traj.taus[i]) * next;
        returns[i] = next;
    }
    returns
}
