//! Scenario generation, policy evaluation, trajectory rendering and
//! ablation sweeps.

mod render;
mod scenario;
mod sweep;

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use render::{render_trajectory, render_trajectory_image, trajectory_pixels, RenderStyle};
pub use scenario::{
    connected, generate_scenario, generate_with_rng, write_scenario_files, BuiltinLayout, Family, Layout, Obstacle, ObstaclePlan, Rect,
    Region, Scenario, ScenarioSpec,
};
pub use sweep::{ablation_sweep, SweepReport, SweepRun, SweepSettings};

use crate::action::ActionPipeline;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, GaussianPolicy};
use crate::sim::{ExecutionMode, LocalMapper, NavEnv, Observation, RewardParams, RobotSpec, StepEvent, TrajectoryRow};
use crate::smdp::{ExecutableAction, Pose, TerminalKind};

/// Decision cap for one evaluation episode.
pub const EVAL_DECISION_CAP: usize = 200;

/// Chooses the next command from the current observation.
pub trait Controller: Sync {
    fn decide(&self, observation: &Observation, pose: &Pose, goal: [f64; 2]) -> Result<ExecutableAction>;
}

/// Acts with the policy mean, without exploration noise.
#[derive(Debug, Clone)]
pub struct MeanPolicy {
    pub policy: GaussianPolicy,
    pub pipeline: ActionPipeline,
}

impl MeanPolicy {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Self {
        Self {
            policy: checkpoint.policy.clone(),
            pipeline: checkpoint.spec.pipeline,
        }
    }
}

impl Controller for MeanPolicy {
    fn decide(&self, observation: &Observation, _pose: &Pose, _goal: [f64; 2]) -> Result<ExecutableAction> {
        let (mean, _) = self.policy.forward(observation)?;
        self.pipeline.convert(&mean)
    }
}

/// Always issues the same command.
#[derive(Debug, Clone, Copy)]
pub struct FixedCommand(pub ExecutableAction);

impl Controller for FixedCommand {
    fn decide(&self, _: &Observation, _: &Pose, _: [f64; 2]) -> Result<ExecutableAction> {
        Ok(self.0)
    }
}

/// Everything needed to run episodes besides the controller.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub robot: RobotSpec,
    pub reward: RewardParams,
    pub mode: ExecutionMode,
    pub mapper: Arc<LocalMapper>,
    pub decision_cap: usize,
}

impl EvalSetup {
    pub fn for_checkpoint(checkpoint: &Checkpoint, mode: ExecutionMode) -> Self {
        let sensor = checkpoint.spec.sensor;
        Self {
            robot: RobotSpec {
                limits: checkpoint.spec.pipeline.limits,
                ..RobotSpec::default()
            },
            reward: RewardParams::default(),
            mode,
            mapper: Arc::new(LocalMapper::new(sensor.local_map, sensor.lidar)),
            decision_cap: EVAL_DECISION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub outcome: TerminalKind,
    pub decisions: usize,
    /// Simulated seconds until the episode ended.
    pub time: f64,
    pub path_length: f64,
    pub mean_fst: f64,
    pub start: Pose,
    pub goal: [f64; 2],
    /// One row per decision; the pose is where the decision was made.
    #[serde(skip)]
    pub rows: Vec<TrajectoryRow>,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.outcome == TerminalKind::Arrived
    }
}

/// Runs one episode until arrival, collision or the decision cap.
pub fn run_episode(setup: &EvalSetup, controller: &dyn Controller, scenario: &Scenario, index: usize) -> Result<EpisodeRecord> {
    let mut env = NavEnv::new(
        scenario.world.clone(),
        setup.robot,
        setup.reward,
        setup.mode,
        setup.mapper.clone(),
        scenario.start,
        scenario.goal,
    )?;
    let mut obs = env.observe();
    let mut rows = Vec::new();
    let (mut t, mut path_length, mut fst) = (0.0, 0.0, 0.0);
    let mut outcome = TerminalKind::Timeout;
    while rows.len() < setup.decision_cap {
        let pose = env.pose();
        let action = controller.decide(&obs, &pose, scenario.goal)?;
        let out = env.step(&action)?;
        rows.push(TrajectoryRow::new(t, pose, &action, out.tau, out.reward, out.event));
        t += out.tau;
        path_length += action.v.abs() * out.tau;
        fst += action.d;
        obs = out.next_observation;
        match out.event {
            StepEvent::Arrived => {
                outcome = TerminalKind::Arrived;
                break;
            }
            StepEvent::Collided => {
                outcome = TerminalKind::Collided;
                break;
            }
            StepEvent::None => {}
        }
    }
    Ok(EpisodeRecord {
        index,
        outcome,
        decisions: rows.len(),
        time: t,
        path_length,
        mean_fst: if rows.is_empty() { 0.0 } else { fst / rows.len() as f64 },
        start: scenario.start,
        goal: scenario.goal,
        rows,
    })
}

/// Scenario for evaluation episode `index` under `seed`.
pub fn episode_scenario(spec: &ScenarioSpec, seed: u64, index: usize) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    generate_with_rng(spec, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub episodes: Vec<EpisodeRecord>,
    pub success_rate: f64,
    /// Mean time over successful episodes; `None` without successes.
    pub reach_time: Option<f64>,
    pub mean_path_length: f64,
    pub mean_decisions: f64,
    pub mean_fst: f64,
}

impl ScenarioReport {
    pub fn from_episodes(name: impl Into<String>, episodes: Vec<EpisodeRecord>) -> Self {
        let n = episodes.len().max(1) as f64;
        let successes: Vec<&EpisodeRecord> = episodes.iter().filter(|e| e.success()).collect();
        let reach_time = (!successes.is_empty())
            .then(|| successes.iter().map(|e| e.time).sum::<f64>() / successes.len() as f64);
        Self {
            name: name.into(),
            success_rate: successes.len() as f64 / n,
            reach_time,
            mean_path_length: episodes.iter().map(|e| e.path_length).sum::<f64>() / n,
            mean_decisions: episodes.iter().map(|e| e.decisions as f64).sum::<f64>() / n,
            mean_fst: episodes.iter().map(|e| e.mean_fst).sum::<f64>() / n,
            episodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenarios: Vec<ScenarioReport>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "/".to_string(), |v| format!("{v:.3}"))
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "scenario",
            "episodes",
            "success_rate",
            "reach_time",
            "mean_path_length",
            "mean_decisions",
            "mean_fst",
        ])?;
        for s in &self.scenarios {
            w.write_record([
                s.name.clone(),
                s.episodes.len().to_string(),
                s.success_rate.to_string(),
                s.reach_time.map_or_else(String::new, |v| v.to_string()),
                s.mean_path_length.to_string(),
                s.mean_decisions.to_string(),
                s.mean_fst.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_episodes_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "episode", "outcome", "decisions", "time", "path_length", "mean_fst"])?;
        for s in &self.scenarios {
            for e in &s.episodes {
                w.write_record([
                    s.name.clone(),
                    e.index.to_string(),
                    e.outcome.as_str().to_string(),
                    e.decisions.to_string(),
                    e.time.to_string(),
                    e.path_length.to_string(),
                    e.mean_fst.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text table with one line per scenario.
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>8} {:>8} {:>10} {:>10} {:>10} {:>8}\n",
            "scenario", "episodes", "SR", "RT (s)", "length (m)", "decisions", "FST (s)"
        );
        for s in &self.scenarios {
            out.push_str(&format!(
                "{:<12} {:>8} {:>8.3} {:>10} {:>10.3} {:>10.2} {:>8.3}\n",
                s.name,
                s.episodes.len(),
                s.success_rate,
                fmt_opt(s.reach_time),
                s.mean_path_length,
                s.mean_decisions,
                s.mean_fst
            ));
        }
        out
    }
}

/// Runs `n_episodes` per scenario spec with any controller. Episodes run in
/// parallel and are collected in index order.
pub fn evaluate_controller(
    setup: &EvalSetup,
    controller: &dyn Controller,
    specs: &[(String, ScenarioSpec)],
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be at least 1".into()));
    }
    let mut report = EvalReport::default();
    for (name, spec) in specs {
        let episodes = (0..n_episodes)
            .into_par_iter()
            .map(|i| run_episode(setup, controller, &episode_scenario(spec, seed, i)?, i))
            .collect::<Result<Vec<_>>>()?;
        report.scenarios.push(ScenarioReport::from_episodes(name.clone(), episodes));
    }
    Ok(report)
}

/// Evaluates the mean action of a checkpoint's policy.
pub fn evaluate(
    checkpoint: &Checkpoint,
    specs: &[(String, ScenarioSpec)],
    n_episodes: usize,
    seed: u64,
    mode: ExecutionMode,
) -> Result<EvalReport> {
    let setup = EvalSetup::for_checkpoint(checkpoint, mode);
    evaluate_controller(&setup, &MeanPolicy::from_checkpoint(checkpoint), specs, n_episodes, seed)
}

/// `(name, preset)` for every family.
pub fn all_families() -> Vec<(String, ScenarioSpec)> {
    Family::ALL
        .into_iter()
        .map(|f| (f.as_str().to_string(), ScenarioSpec::preset(f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LidarConfig, LocalMapConfig};
    use approx::assert_abs_diff_eq;

    fn setup() -> EvalSetup {
        EvalSetup {
            robot: RobotSpec::default(),
            reward: RewardParams::default(),
            mode: ExecutionMode::Mode1,
            mapper: Arc::new(LocalMapper::new(
                LocalMapConfig { extent: 6.0, cells: 12 },
                LidarConfig {
                    n_beams: 31,
                    ..Default::default()
                },
            )),
            decision_cap: EVAL_DECISION_CAP,
        }
    }

    fn open_world(start: Pose, goal: [f64; 2]) -> Scenario {
        Scenario {
            world: Arc::new(crate::sim::WorldMap::empty(40.0, 40.0, 0.05).unwrap()),
            start,
            goal,
            obstacles: vec![],
            random_obstacles: 0,
            start_region: Rect::new([0.0; 2], [0.0; 2]),
            goal_region: Rect::new([0.0; 2], [0.0; 2]),
        }
    }

    #[test]
    fn spawn_at_goal_succeeds_immediately() {
        let scenario = open_world(Pose::new(5.0, 5.0, 0.0), [5.2, 5.0]);
        let hold = FixedCommand(ExecutableAction { v: 0.0, omega: 0.0, d: 0.4 });
        let rec = run_episode(&setup(), &hold, &scenario, 0).unwrap();
        assert!(rec.success());
        assert_eq!(rec.decisions, 1);
        assert_eq!(rec.time, 0.0);
        let report = ScenarioReport::from_episodes("x", vec![rec]);
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(report.reach_time, Some(0.0));
    }

    #[test]
    fn circling_path_length_is_speed_times_time() {
        let scenario = open_world(Pose::new(20.0, 20.0, 0.0), [35.0, 35.0]);
        let circle = FixedCommand(ExecutableAction { v: 0.6, omega: 0.9, d: 0.7 });
        let rec = run_episode(&setup(), &circle, &scenario, 0).unwrap();
        assert_eq!(rec.outcome, TerminalKind::Timeout);
        assert_eq!(rec.decisions, EVAL_DECISION_CAP);
        assert_abs_diff_eq!(rec.path_length, 0.6 * rec.time, epsilon = 1e-6);
        let report = ScenarioReport::from_episodes("x", vec![rec]);
        assert_eq!(report.reach_time, None);
        assert!(EvalReport { scenarios: vec![report] }.summary_table().contains('/'));
    }

    #[test]
    fn evaluation_is_reproducible() {
        let specs = vec![("zigzag".to_string(), ScenarioSpec::preset(Family::Zigzag))];
        let go = FixedCommand(ExecutableAction { v: 0.5, omega: 0.1, d: 0.5 });
        let a = evaluate_controller(&setup(), &go, &specs, 4, 3).unwrap();
        let b = evaluate_controller(&setup(), &go, &specs, 4, 3).unwrap();
        assert_eq!(a, b);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("scenario,"));
        assert!(evaluate_controller(&setup(), &go, &specs, 0, 3).is_err());
    }
}
