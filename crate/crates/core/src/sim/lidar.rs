use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::world::WorldMap;
use crate::smdp::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    /// Horizontal field of view, radians, centered on the heading.
    pub fov: f64,
    pub n_beams: usize,
    /// Meters.
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            fov: PI,
            n_beams: 181,
            max_range: 3.0,
        }
    }
}

impl LidarConfig {
    /// Beam angle relative to the heading.
    pub fn beam_offset(&self, i: usize) -> f64 {
        if self.n_beams <= 1 {
            0.0
        } else {
            -0.5 * self.fov + self.fov * i as f64 / (self.n_beams - 1) as f64
        }
    }
}

/// Casts `n_beams` rays evenly across `fov` and returns, per beam, the
/// distance to the first occupied cell or `max_range`.
pub fn raycast_scan(world: &WorldMap, pose: &Pose, fov: f64, n_beams: usize, max_range: f64) -> Vec<f64> {
    let config = LidarConfig {
        fov,
        n_beams,
        max_range,
    };
    (0..n_beams)
        .map(|i| cast_ray(world, pose.x, pose.y, pose.theta + config.beam_offset(i), max_range))
        .collect()
}

/// Grid traversal along one ray, visiting cells in the order the ray enters
/// them.
pub fn cast_ray(world: &WorldMap, x: f64, y: f64, angle: f64, max_range: f64) -> f64 {
    let res = world.resolution();
    let (ox, oy) = (x / res, y / res);
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut ix, mut iy) = (ox.floor() as i64, oy.floor() as i64);
    let limit = max_range / res;

    let axis = |origin: f64, cell: i64, dir: f64| -> (i64, f64, f64) {
        if dir > 0.0 {
            (1, ((cell + 1) as f64 - origin) / dir, 1.0 / dir)
        } else if dir < 0.0 {
            (-1, (origin - cell as f64) / -dir, -1.0 / dir)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut next_x, delta_x) = axis(ox, ix, dx);
    let (step_y, mut next_y, delta_y) = axis(oy, iy, dy);

    let mut t = 0.0;
    loop {
        if world.is_occupied(ix, iy) {
            return (t * res).min(max_range);
        }
        if next_x < next_y {
            t = next_x;
            next_x += delta_x;
            ix += step_x;
        } else {
            t = next_y;
            next_y += delta_y;
            iy += step_y;
        }
        if t >= limit {
            return max_range;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fine fixed-step march; independent of the cell traversal.
    fn march(world: &WorldMap, x: f64, y: f64, angle: f64, max_range: f64) -> f64 {
        let step = world.resolution() / 200.0;
        let mut s = 0.0;
        while s < max_range {
            let (px, py) = (x + s * angle.cos(), y + s * angle.sin());
            let (ix, iy) = world.cell_of(px, py);
            if world.is_occupied(ix, iy) {
                return s;
            }
            s += step;
        }
        max_range
    }

    fn open_world() -> WorldMap {
        WorldMap::empty(10.0, 10.0, 0.05).unwrap()
    }

    #[test]
    fn empty_world_reads_max_range() {
        let scan = raycast_scan(&open_world(), &Pose::new(5.0, 5.0, 0.3), PI, 181, 3.0);
        assert_eq!(scan.len(), 181);
        assert!(scan.iter().all(|&r| r == 3.0));
    }

    #[test]
    fn wall_ahead() {
        let mut world = open_world();
        world.fill_rect([6.0, 0.0], [6.2, 10.0]);
        let scan = raycast_scan(&world, &Pose::new(5.0, 5.0, 0.0), PI, 181, 3.0);
        assert!((scan[90] - 1.0).abs() <= world.resolution(), "{}", scan[90]);
    }

    #[test]
    fn obstacle_behind_is_invisible() {
        let mut world = open_world();
        world.fill_rect([3.8, 4.0], [4.2, 6.0]);
        let pose = Pose::new(5.0, 5.0, 0.0);
        let scan = raycast_scan(&world, &pose, PI, 181, 3.0);
        assert!(scan.iter().all(|&r| r == 3.0));
        let turned = raycast_scan(&world, &Pose::new(5.0, 5.0, PI), PI, 181, 3.0);
        assert!(turned[90] < 1.5);
    }

    #[test]
    fn traversal_agrees_with_fine_march() {
        let mut world = open_world();
        world.fill_disc([6.0, 6.5], 0.4);
        world.fill_rect([3.0, 2.0], [3.4, 7.0]);
        world.fill_rect([4.0, 7.3], [7.0, 7.6]);
        for k in 0..720 {
            let angle = k as f64 * PI / 360.0;
            let fast = cast_ray(&world, 5.013, 4.987, angle, 3.0);
            let slow = march(&world, 5.013, 4.987, angle, 3.0);
            assert!((fast - slow).abs() < 1e-3, "angle {angle}: {fast} vs {slow}");
        }
    }

    #[test]
    fn world_edge_stops_rays() {
        let world = WorldMap::empty(2.0, 2.0, 0.1).unwrap();
        let r = cast_ray(&world, 1.0, 1.0, 0.0, 3.0);
        assert!((r - 1.0).abs() < 1e-9);
    }
}
