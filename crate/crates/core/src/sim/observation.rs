use serde::{Deserialize, Serialize};

use super::lidar::LidarConfig;
use crate::smdp::Pose;

/// Egocentric occupancy grid plus the goal in the robot frame.
///
/// `local_map` is row-major, `size x size`. Row 0 is the far edge ahead of
/// the robot and column 0 the far left, so the robot's `+x` points up and
/// `+y` points left. Cells hold 1 for occupied or unobserved and 0 for free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub size: usize,
    pub local_map: Vec<u8>,
    /// Goal position in the robot frame (x forward, y left), meters.
    pub goal_rel: [f64; 2],
}

impl Observation {
    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.local_map[row * self.size + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMapConfig {
    /// Side length of the square map, meters.
    pub extent: f64,
    /// Cells per side.
    pub cells: usize,
}

impl Default for LocalMapConfig {
    fn default() -> Self {
        Self {
            extent: 6.0,
            cells: 120,
        }
    }
}

impl LocalMapConfig {
    pub fn cell_size(&self) -> f64 {
        self.extent / self.cells as f64
    }

    /// Robot-frame coordinates of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let half = 0.5 * self.extent;
        let c = self.cell_size();
        [half - (row as f64 + 0.5) * c, half - (col as f64 + 0.5) * c]
    }
}

/// Precomputed lookup from local-map cells to the beam that covers them.
#[derive(Debug, Clone)]
pub struct LocalMapper {
    config: LocalMapConfig,
    lidar: LidarConfig,
    /// Per cell: nearest beam index and distance from the robot, or `None`
    /// if the cell lies outside the field of view.
    lookup: Vec<Option<(usize, f64)>>,
}

impl LocalMapper {
    pub fn new(config: LocalMapConfig, lidar: LidarConfig) -> Self {
        let n = config.cells;
        let mut lookup = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let [x, y] = config.cell_center(row, col);
                let bearing = y.atan2(x);
                let entry = if bearing.abs() <= 0.5 * lidar.fov + 1e-12 {
                    let beam = if lidar.n_beams <= 1 {
                        0
                    } else {
                        let spacing = lidar.fov / (lidar.n_beams - 1) as f64;
                        (((bearing + 0.5 * lidar.fov) / spacing).round() as usize).min(lidar.n_beams - 1)
                    };
                    Some((beam, x.hypot(y)))
                } else {
                    None
                };
                lookup.push(entry);
            }
        }
        Self {
            config,
            lidar,
            lookup,
        }
    }

    pub fn config(&self) -> &LocalMapConfig {
        &self.config
    }

    pub fn lidar(&self) -> &LidarConfig {
        &self.lidar
    }

    /// Rasterizes a scan taken at `pose`: a cell is free when it lies in the
    /// field of view and closer than the return of its nearest beam.
    /// Everything else, including cells never swept by a beam, is occupied.
    pub fn build_observation(&self, pose: &Pose, goal: [f64; 2], scan: &[f64]) -> Observation {
        debug_assert_eq!(scan.len(), self.lidar.n_beams);
        let local_map = self
            .lookup
            .iter()
            .map(|entry| match entry {
                Some((beam, dist)) if *dist < scan[*beam] => 0,
                _ => 1,
            })
            .collect();
        Observation {
            size: self.config.cells,
            local_map,
            goal_rel: to_robot_frame(pose, goal),
        }
    }
}

/// World point expressed in the robot frame (x forward, y left).
pub fn to_robot_frame(pose: &Pose, point: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (point[0] - pose.x, point[1] - pose.y);
    let (s, c) = pose.theta.sin_cos();
    [c * dx + s * dy, -s * dx + c * dy]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::lidar::raycast_scan;
    use crate::sim::world::WorldMap;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn mapper() -> LocalMapper {
        LocalMapper::new(LocalMapConfig::default(), LidarConfig::default())
    }

    #[test]
    fn goal_frame_examples() {
        let ahead = to_robot_frame(&Pose::new(1.0, 1.0, 0.0), [3.0, 1.0]);
        assert_abs_diff_eq!(ahead[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ahead[1], 0.0, epsilon = 1e-12);
        let turned = to_robot_frame(&Pose::new(1.0, 1.0, PI / 2.0), [3.0, 1.0]);
        assert_abs_diff_eq!(turned[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(turned[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_world_is_free_inside_sensing_half_disc() {
        let world = WorldMap::empty(20.0, 20.0, 0.05).unwrap();
        let m = mapper();
        let pose = Pose::new(10.0, 10.0, 0.4);
        let lidar = m.lidar();
        let scan = raycast_scan(&world, &pose, lidar.fov, lidar.n_beams, lidar.max_range);
        let obs = m.build_observation(&pose, [12.0, 10.0], &scan);
        assert_eq!(obs.local_map.len(), 120 * 120);
        let cfg = m.config();
        for row in 0..cfg.cells {
            for col in 0..cfg.cells {
                let [x, y] = cfg.cell_center(row, col);
                let expected = if x > 0.0 && x.hypot(y) < 3.0 { 0 } else { 1 };
                // Cells exactly on the lateral axis sit on the field-of-view
                // edge; both encodings are acceptable there.
                if x.abs() > 1e-9 {
                    assert_eq!(obs.cell(row, col), expected, "cell ({row}, {col}) at ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn obstacle_ahead_appears_in_front_rows() {
        let mut world = WorldMap::empty(20.0, 20.0, 0.05).unwrap();
        world.fill_rect([11.0, 9.0], [11.3, 11.0]);
        let m = mapper();
        let pose = Pose::new(10.0, 10.0, 0.0);
        let lidar = m.lidar();
        let scan = raycast_scan(&world, &pose, lidar.fov, lidar.n_beams, lidar.max_range);
        let obs = m.build_observation(&pose, [15.0, 10.0], &scan);
        // Straight ahead: free up to 1 m, occupied from there on.
        let col = 59;
        let row_at = |x: f64| ((3.0 - x) / 0.05).floor() as usize;
        assert_eq!(obs.cell(row_at(0.5), col), 0);
        assert_eq!(obs.cell(row_at(1.1), col), 1);
        assert_eq!(obs.cell(row_at(2.0), col), 1);
        assert_abs_diff_eq!(obs.goal_rel[0], 5.0, epsilon = 1e-12);
    }
}
