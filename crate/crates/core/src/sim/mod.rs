//! Deterministic 2D world: occupancy raster, exact arc kinematics with
//! collision truncation, raycast lidar, egocentric local map and reward.

mod dynamics;
mod env;
mod io;
mod kinematics;
mod lidar;
mod observation;
mod world;

pub use dynamics::{
    reward, step, substeps, ExecutionMode, RewardParams, RobotSpec, StepEvent, Transition,
    MODE2_CONTROL_INTERVAL,
};
pub use env::{NavEnv, SensorConfig, StepOutcome};
pub use io::{read_trajectory_csv, write_trajectory_csv, TrajectoryRow};
pub use kinematics::propagate_arc;
pub use lidar::{cast_ray, raycast_scan, LidarConfig};
pub use observation::{to_robot_frame, LocalMapConfig, LocalMapper, Observation};
pub use world::{
    load_world, load_world_file, read_gray_image, save_world_file, WorldFile, WorldMap,
    DEFAULT_THRESHOLD,
};
