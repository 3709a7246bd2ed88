use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dynamics::{self, ExecutionMode, RewardParams, RobotSpec, StepEvent};
use super::lidar::{raycast_scan, LidarConfig};
use super::observation::{LocalMapConfig, LocalMapper, Observation};
use super::world::WorldMap;
use crate::error::{Error, Result};
use crate::smdp::{ExecutableAction, Pose};

/// Sensor and map settings shared by every environment of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorConfig {
    pub lidar: LidarConfig,
    pub local_map: LocalMapConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_observation: Observation,
    pub reward: f64,
    pub tau: f64,
    pub event: StepEvent,
    pub pose: Pose,
}

/// One navigation episode in progress: an immutable world plus the robot's
/// pose and goal.
#[derive(Debug, Clone)]
pub struct NavEnv {
    world: Arc<WorldMap>,
    robot: RobotSpec,
    rewards: RewardParams,
    mode: ExecutionMode,
    mapper: Arc<LocalMapper>,
    pose: Pose,
    goal: [f64; 2],
}

impl NavEnv {
    pub fn new(
        world: Arc<WorldMap>,
        robot: RobotSpec,
        rewards: RewardParams,
        mode: ExecutionMode,
        mapper: Arc<LocalMapper>,
        start: Pose,
        goal: [f64; 2],
    ) -> Result<Self> {
        let env = Self {
            world,
            robot,
            rewards,
            mode,
            mapper,
            pose: start,
            goal,
        };
        env.check_pose()?;
        Ok(env)
    }

    fn check_pose(&self) -> Result<()> {
        if self.world.disc_collides(self.pose.x, self.pose.y, self.robot.radius) {
            Err(Error::Contract(format!(
                "robot placed in collision at ({:.3}, {:.3})",
                self.pose.x, self.pose.y
            )))
        } else {
            Ok(())
        }
    }

    /// Starts a new episode in `world`.
    pub fn reset(&mut self, world: Arc<WorldMap>, start: Pose, goal: [f64; 2]) -> Result<Observation> {
        self.world = world;
        self.pose = start;
        self.goal = goal;
        self.check_pose()?;
        Ok(self.observe())
    }

    pub fn world(&self) -> &Arc<WorldMap> {
        &self.world
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn robot(&self) -> &RobotSpec {
        &self.robot
    }

    pub fn scan(&self) -> Vec<f64> {
        let lidar = self.mapper.lidar();
        raycast_scan(&self.world, &self.pose, lidar.fov, lidar.n_beams, lidar.max_range)
    }

    pub fn observe(&self) -> Observation {
        self.mapper.build_observation(&self.pose, self.goal, &self.scan())
    }

    pub fn step(&mut self, action: &ExecutableAction) -> Result<StepOutcome> {
        let t = dynamics::step(
            &self.world,
            &self.robot,
            self.pose,
            self.goal,
            action,
            &self.rewards,
            self.mode,
        )?;
        self.pose = t.pose;
        Ok(StepOutcome {
            next_observation: self.observe(),
            reward: t.reward,
            tau: t.tau,
            event: t.event,
            pose: t.pose,
        })
    }
}
