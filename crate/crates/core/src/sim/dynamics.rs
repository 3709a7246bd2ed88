use serde::{Deserialize, Serialize};

use super::kinematics::propagate_arc;
use super::world::WorldMap;
use crate::action::RobotLimits;
use crate::error::{Error, Result};
use crate::smdp::{ExecutableAction, Pose};

/// Replanning interval used in [`ExecutionMode::Mode2`], s.
pub const MODE2_CONTROL_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    /// Disc radius, meters.
    pub radius: f64,
    pub limits: RobotLimits,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            radius: 0.17,
            limits: RobotLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub r_arr: f64,
    pub r_col: f64,
    /// Reward per meter of progress toward the goal.
    pub eps_a: f64,
    /// Penalty per second of execution.
    pub eps_t: f64,
    /// Per-decision penalty coefficient, multiplied by the time scale.
    pub eps_tau: f64,
    pub arrive_radius: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            r_arr: 500.0,
            r_col: -500.0,
            eps_a: 200.0,
            eps_t: 12.0,
            eps_tau: 10.0,
            arrive_radius: 0.3,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r_arr > 0.0
            && self.r_col < 0.0
            && self.eps_a > 0.0
            && self.eps_t > 0.0
            && self.eps_tau > 0.0
            && self.arrive_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("reward parameters {self:?}")))
        }
    }
}

/// Reward for one decision.
pub fn reward(
    params: &RewardParams,
    prev_distance: f64,
    distance: f64,
    event: StepEvent,
    tau: f64,
    tau_tp: f64,
) -> f64 {
    let approach = params.eps_a * (prev_distance - distance);
    let terminal = match event {
        StepEvent::Arrived => params.r_arr,
        StepEvent::Collided => params.r_col,
        StepEvent::None => 0.0,
    };
    approach + terminal - params.eps_t * tau - params.eps_tau * tau_tp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionMode {
    /// Execute every action for its full planned duration.
    #[default]
    Mode1,
    /// Replan after a fixed control interval.
    Mode2,
}

impl ExecutionMode {
    pub fn execution_time(&self, d: f64) -> f64 {
        match self {
            ExecutionMode::Mode1 => d,
            ExecutionMode::Mode2 => d.min(MODE2_CONTROL_INTERVAL),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepEvent {
    #[default]
    None,
    Arrived,
    Collided,
}

impl StepEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepEvent::None => "none",
            StepEvent::Arrived => "arrived",
            StepEvent::Collided => "collided",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(StepEvent::None),
            "arrived" => Some(StepEvent::Arrived),
            "collided" => Some(StepEvent::Collided),
            _ => None,
        }
    }
}

/// Result of executing one command in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub pose: Pose,
    pub reward: f64,
    pub tau: f64,
    pub event: StepEvent,
}

/// Substep count and length for executing `action` over `exec_time`: the arc
/// length per substep is at most half the map resolution.
pub fn substeps(world: &WorldMap, action: &ExecutableAction, exec_time: f64) -> usize {
    let arc = action.v.abs() * exec_time;
    let max_chord = 0.5 * world.resolution();
    ((arc / max_chord).ceil() as usize).max(1)
}

/// Executes `action` from `pose`, stopping at the first sampled pose inside
/// the arrival radius or just before the first substep whose swept disc could
/// touch an obstacle.
///
/// Between two samples `a` and `b` that are `s` apart along the arc, every
/// intermediate point has clearance at least `(c_a + c_b - s) / 2`, so a
/// substep is accepted only when that bound is at least the robot radius. On
/// contact the reported duration is the start time of the offending substep.
pub fn step(
    world: &WorldMap,
    robot: &RobotSpec,
    pose: Pose,
    goal: [f64; 2],
    action: &ExecutableAction,
    params: &RewardParams,
    mode: ExecutionMode,
) -> Result<Transition> {
    let exec_time = mode.execution_time(action.d);
    let n = substeps(world, action, exec_time);
    let h = exec_time / n as f64;
    let s = action.v.abs() * h;
    let cap = robot.radius + s + world.resolution();

    let mut clearance = world.clearance(pose.x, pose.y, cap);
    if clearance < robot.radius {
        return Err(Error::Contract(format!(
            "commanded from an in-collision pose ({:.3}, {:.3})",
            pose.x, pose.y
        )));
    }
    let start_distance = pose.distance_to(goal);
    let finish = |end: Pose, tau: f64, event: StepEvent| Transition {
        pose: end,
        reward: reward(
            params,
            start_distance,
            end.distance_to(goal),
            event,
            tau,
            robot.limits.tau_tp,
        ),
        tau,
        event,
    };

    if start_distance < params.arrive_radius {
        return Ok(finish(pose, 0.0, StepEvent::Arrived));
    }

    let mut prev = pose;
    let mut prev_t = 0.0;
    for k in 1..=n {
        let t = if k == n { exec_time } else { k as f64 * h };
        let next = propagate_arc(pose, action, t);
        let next_clearance = world.clearance(next.x, next.y, cap);
        if 0.5 * (clearance + next_clearance - s) < robot.radius {
            return Ok(finish(prev, prev_t, StepEvent::Collided));
        }
        if next.distance_to(goal) < params.arrive_radius {
            return Ok(finish(next, t, StepEvent::Arrived));
        }
        prev = next;
        prev_t = t;
        clearance = next_clearance;
    }
    Ok(finish(prev, exec_time, StepEvent::None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn open_world() -> WorldMap {
        WorldMap::empty(10.0, 10.0, 0.05).unwrap()
    }

    #[test]
    fn reward_worked_example() {
        let r = reward(&RewardParams::default(), 2.0, 1.9, StepEvent::None, 0.8, 0.4);
        assert_abs_diff_eq!(r, 6.4, epsilon = 1e-12);
    }

    #[test]
    fn free_motion_runs_full_duration() {
        let world = open_world();
        let robot = RobotSpec::default();
        let action = ExecutableAction { v: 0.6, omega: 0.0, d: 0.8 };
        let pose = Pose::new(2.0, 5.0, 0.0);
        let goal = [8.0, 5.0];
        let out = step(&world, &robot, pose, goal, &action, &RewardParams::default(), ExecutionMode::Mode1).unwrap();
        assert_eq!(out.event, StepEvent::None);
        assert_eq!(out.tau, 0.8);
        assert_abs_diff_eq!(out.pose.x, 2.48, epsilon = 1e-12);
        assert_abs_diff_eq!(out.reward, 200.0 * 0.48 - 12.0 * 0.8 - 4.0, epsilon = 1e-9);
    }

    #[test]
    fn mode2_truncates_to_control_interval() {
        let world = open_world();
        let action = ExecutableAction { v: 0.6, omega: 0.3, d: 2.0 };
        let out = step(
            &world,
            &RobotSpec::default(),
            Pose::new(5.0, 5.0, 0.0),
            [9.0, 9.0],
            &action,
            &RewardParams::default(),
            ExecutionMode::Mode2,
        )
        .unwrap();
        assert_abs_diff_eq!(out.tau, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn arrival_stops_inside_radius() {
        let world = open_world();
        let action = ExecutableAction { v: 0.6, omega: 0.0, d: 3.0 };
        let out = step(
            &world,
            &RobotSpec::default(),
            Pose::new(2.0, 5.0, 0.0),
            [3.0, 5.0],
            &action,
            &RewardParams::default(),
            ExecutionMode::Mode1,
        )
        .unwrap();
        assert_eq!(out.event, StepEvent::Arrived);
        assert!(out.pose.distance_to([3.0, 5.0]) < 0.3);
        // Entered at 0.7 m travelled, within one substep.
        assert!((out.tau * 0.6 - 0.7).abs() <= 0.025 + 1e-12);
        assert!(out.reward > 400.0);
    }

    #[test]
    fn contact_time_matches_swept_disc() {
        let mut world = open_world();
        // Wall face at x = 5.0; robot edge starts 0.03 m away moving at 0.6 m/s,
        // so contact happens after 0.05 s.
        world.fill_rect([5.0, 0.0], [6.0, 10.0]);
        let robot = RobotSpec::default();
        let pose = Pose::new(5.0 - 0.17 - 0.03, 5.0, 0.0);
        let action = ExecutableAction { v: 0.6, omega: 0.0, d: 1.0 };
        let out = step(&world, &robot, pose, [1.0, 1.0], &action, &RewardParams::default(), ExecutionMode::Mode1).unwrap();
        assert_eq!(out.event, StepEvent::Collided);
        let exact = 0.03 / 0.6;
        let h = 1.0 / substeps(&world, &action, 1.0) as f64;
        assert!(out.tau <= exact && out.tau >= exact - 2.0 * h, "tau {}", out.tau);
        assert!(out.reward < -400.0);
        assert!(!world.disc_collides(out.pose.x, out.pose.y, robot.radius));
    }

    #[test]
    fn in_collision_start_is_rejected() {
        let mut world = open_world();
        world.fill_disc([5.0, 5.0], 0.5);
        let action = ExecutableAction { v: 0.6, omega: 0.0, d: 1.0 };
        assert!(matches!(
            step(&world, &RobotSpec::default(), Pose::new(5.0, 5.0, 0.0), [1.0, 1.0], &action, &RewardParams::default(), ExecutionMode::Mode1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn deterministic() {
        let mut world = open_world();
        world.fill_disc([6.0, 6.0], 0.7);
        let action = ExecutableAction { v: 0.55, omega: 0.41, d: 2.7 };
        let run = || {
            step(&world, &RobotSpec::default(), Pose::new(4.0, 5.0, 0.2), [8.0, 8.0], &action, &RewardParams::default(), ExecutionMode::Mode1).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.pose.x.to_bits(), b.pose.x.to_bits());
        assert_eq!(a.reward.to_bits(), b.reward.to_bits());
        assert_eq!(a, b);
    }
}
