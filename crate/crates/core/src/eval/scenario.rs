use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{load_world_file, WorldMap};
use crate::smdp::Pose;

const MAX_ATTEMPTS: usize = 500;
const WALL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Sparse,
    Dense,
    Spiral,
    Zigzag,
    Hybrid,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Sparse,
        Family::Dense,
        Family::Spiral,
        Family::Zigzag,
        Family::Hybrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Sparse => "sparse",
            Family::Dense => "dense",
            Family::Spiral => "spiral",
            Family::Zigzag => "zigzag",
            Family::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(0.0).max(p[0] - self.max[0]);
        let dy = (self.min[1] - p[1]).max(0.0).max(p[1] - self.max[1]);
        dx.hypot(dy)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        [
            rng.gen_range(self.min[0]..=self.max[0]),
            rng.gen_range(self.min[1]..=self.max[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Obstacle {
    Rect { min: [f64; 2], max: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

impl Obstacle {
    fn distance_to(&self, p: [f64; 2]) -> f64 {
        match *self {
            Obstacle::Rect { min, max } => Rect { min, max }.distance_to(p),
            Obstacle::Disc { center, radius } => ((center[0] - p[0]).hypot(center[1] - p[1]) - radius).max(0.0),
        }
    }

    fn draw(&self, world: &mut WorldMap) {
        match *self {
            Obstacle::Rect { min, max } => world.fill_rect(min, max),
            Obstacle::Disc { center, radius } => world.fill_disc(center, radius),
        }
    }
}

/// Where a start or goal comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    /// Uniform position in the rectangle; start headings are uniform too.
    Rect { min: [f64; 2], max: [f64; 2] },
    Fixed { x: f64, y: f64, theta: f64 },
}

impl Region {
    pub fn bounds(&self) -> Rect {
        match *self {
            Region::Rect { min, max } => Rect { min, max },
            Region::Fixed { x, y, .. } => Rect::new([x - 0.15, y - 0.15], [x + 0.15, y + 0.15]),
        }
    }

    fn sample_pose<R: Rng>(&self, rng: &mut R) -> Pose {
        match *self {
            Region::Rect { min, max } => {
                let [x, y] = Rect { min, max }.sample(rng);
                Pose::new(x, y, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            }
            Region::Fixed { x, y, theta } => Pose::new(x, y, theta),
        }
    }
}

/// Randomly placed obstacles: half axis-aligned rectangles with each side
/// uniform in `[size_min, size_max]`, half discs with that diameter range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePlan {
    pub count: usize,
    pub size_min: f64,
    pub size_max: f64,
}

/// Fixed structure drawn before any random obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Layout {
    Builtin { name: BuiltinLayout },
    /// World sidecar file (see [`crate::sim::WorldFile`]).
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinLayout {
    Spiral,
    Zigzag,
    /// Switchback walls stretched over a 10 m square.
    SwitchbackLarge,
}

impl BuiltinLayout {
    /// Walls and fixed small obstacles. Every corridor is at least 0.8 m wide.
    pub fn obstacles(&self) -> Vec<Obstacle> {
        let wall = |x0: f64, y0: f64, x1: f64, y1: f64| Obstacle::Rect {
            min: [x0, y0],
            max: [x1, y1],
        };
        let small = |x: f64, y: f64| Obstacle::Rect {
            min: [x - 0.15, y - 0.15],
            max: [x + 0.15, y + 0.15],
        };
        let h = 0.5 * WALL;
        match self {
            // A box entered through its lower-left side, split by an inner
            // wall so the way to the center winds around.
            BuiltinLayout::Spiral => vec![
                wall(1.2 - h, 1.2 - h, 1.2 + h, 4.8 + h),
                wall(1.2 - h, 4.8 - h, 4.8 + h, 4.8 + h),
                wall(4.8 - h, 1.2 - h, 4.8 + h, 4.8 + h),
                wall(2.4, 1.2 - h, 4.8 + h, 1.2 + h),
                wall(1.2 - h, 2.4 - h, 3.6, 2.4 + h),
                small(5.7, 3.0),
                small(3.0, 5.7),
                small(0.3, 2.2),
                small(3.6, 0.3),
                small(4.4, 3.9),
            ],
            // Three alternating walls forming a switchback corridor.
            BuiltinLayout::Zigzag => vec![
                wall(0.0, 1.5 - h, 4.8, 1.5 + h),
                wall(1.2, 3.0 - h, 6.0, 3.0 + h),
                wall(0.0, 4.5 - h, 4.8, 4.5 + h),
                small(3.0, 0.3),
                small(5.7, 1.8),
                small(2.2, 2.7),
                small(0.3, 3.8),
                small(3.6, 5.7),
            ],
            BuiltinLayout::SwitchbackLarge => vec![
                wall(0.0, 2.5 - h, 8.0, 2.5 + h),
                wall(2.0, 5.0 - h, 10.0, 5.0 + h),
                wall(0.0, 7.5 - h, 8.0, 7.5 + h),
            ],
        }
    }
}

/// Recipe for a family of navigation problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub family: Family,
    /// World size, meters.
    pub extent: [f64; 2],
    /// Meters per cell.
    pub resolution: f64,
    pub obstacles: ObstaclePlan,
    #[serde(default)]
    pub layout: Option<Layout>,
    pub start: Region,
    pub goal: Region,
    /// Minimum start-goal distance, meters.
    pub min_separation: f64,
    /// Random obstacles keep at least this distance from start and goal.
    pub clearance: f64,
    /// Robot radius used by the connectivity check.
    pub robot_radius: f64,
}

fn interior(extent: [f64; 2], margin: f64) -> Region {
    Region::Rect {
        min: [margin, margin],
        max: [extent[0] - margin, extent[1] - margin],
    }
}

impl ScenarioSpec {
    pub fn preset(family: Family) -> Self {
        let base = |extent: [f64; 2], obstacles: ObstaclePlan| ScenarioSpec {
            family,
            extent,
            resolution: 0.05,
            obstacles,
            layout: None,
            start: interior(extent, 0.5),
            goal: interior(extent, 0.5),
            min_separation: 1.0,
            clearance: 0.5,
            robot_radius: 0.17,
        };
        let none = ObstaclePlan {
            count: 0,
            size_min: 0.3,
            size_max: 0.6,
        };
        match family {
            Family::Sparse => base(
                [10.0, 10.0],
                ObstaclePlan {
                    count: 6,
                    size_min: 0.5,
                    size_max: 2.0,
                },
            ),
            Family::Dense => base(
                [10.0, 10.0],
                ObstaclePlan {
                    count: 32,
                    size_min: 0.3,
                    size_max: 0.6,
                },
            ),
            Family::Spiral => ScenarioSpec {
                layout: Some(Layout::Builtin {
                    name: BuiltinLayout::Spiral,
                }),
                start: Region::Fixed {
                    x: 5.4,
                    y: 5.4,
                    theta: -3.0 * std::f64::consts::FRAC_PI_4,
                },
                goal: Region::Fixed { x: 2.4, y: 3.6, theta: 0.0 },
                ..base([6.0, 6.0], none)
            },
            Family::Zigzag => ScenarioSpec {
                layout: Some(Layout::Builtin {
                    name: BuiltinLayout::Zigzag,
                }),
                start: Region::Fixed { x: 0.6, y: 0.6, theta: 0.0 },
                goal: Region::Fixed { x: 0.6, y: 5.4, theta: 0.0 },
                ..base([6.0, 6.0], none)
            },
            Family::Hybrid => ScenarioSpec {
                layout: Some(Layout::Builtin {
                    name: BuiltinLayout::SwitchbackLarge,
                }),
                ..base(
                    [10.0, 10.0],
                    ObstaclePlan {
                        count: 32,
                        size_min: 0.3,
                        size_max: 0.6,
                    },
                )
            },
        }
    }

    /// Reduced sparse world used for desk-scale training runs.
    pub fn small_sparse() -> Self {
        ScenarioSpec {
            extent: [6.0, 6.0],
            obstacles: ObstaclePlan {
                count: 3,
                size_min: 0.5,
                size_max: 1.2,
            },
            start: interior([6.0, 6.0], 0.5),
            goal: interior([6.0, 6.0], 0.5),
            ..Self::preset(Family::Sparse)
        }
    }

    /// Reads a spec document; a layout file path is resolved relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: ScenarioSpec = toml::from_str(&std::fs::read_to_string(path)?)?;
        if let Some(Layout::File { path: layout }) = &mut spec.layout {
            if layout.is_relative() {
                *layout = path.parent().unwrap_or_else(|| Path::new(".")).join(&*layout);
            }
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Preset by family name, or a spec document path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Family::parse(name_or_path) {
            Some(f) => Ok(Self::preset(f)),
            None => Self::load(Path::new(name_or_path)),
        }
    }
}

/// Writes one spec document per family into `dir`. Fixed layouts are
/// rasterized to `<family>_world.png` with a sidecar, and their documents
/// point at the sidecar. Returns the spec document paths.
pub fn write_scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for family in Family::ALL {
        let mut spec = ScenarioSpec::preset(family);
        if matches!(family, Family::Spiral | Family::Zigzag) {
            let world = generate_scenario(&spec, 0)?.world;
            let sidecar = format!("{}_world.toml", family.as_str());
            crate::sim::save_world_file(&world, &dir.join(&sidecar))?;
            spec.layout = Some(Layout::File {
                path: PathBuf::from(sidecar),
            });
        }
        let path = dir.join(format!("{}.toml", family.as_str()));
        std::fs::write(&path, spec.to_toml()?)?;
        written.push(path);
    }
    Ok(written)
}

/// A concrete navigation problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: Arc<WorldMap>,
    pub start: Pose,
    pub goal: [f64; 2],
    /// Fixed layout obstacles followed by the random ones.
    pub obstacles: Vec<Obstacle>,
    pub random_obstacles: usize,
    pub start_region: Rect,
    pub goal_region: Rect,
}

pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    generate_with_rng(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws a scenario with rejection sampling: start and goal separated by at
/// least `min_separation`, random obstacles clear of both, and a path for the
/// robot disc between them.
pub fn generate_with_rng<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Result<Scenario> {
    let mut base = WorldMap::empty(spec.extent[0], spec.extent[1], spec.resolution)?;
    let mut fixed = Vec::new();
    match &spec.layout {
        Some(Layout::Builtin { name }) => {
            fixed = name.obstacles();
            for o in &fixed {
                o.draw(&mut base);
            }
        }
        Some(Layout::File { path }) => {
            base = load_world_file(path)?;
        }
        None => {}
    }
    let mut last_reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let start = spec.start.sample_pose(rng);
        let goal_pose = spec.goal.sample_pose(rng);
        let goal = goal_pose.position();
        if start.distance_to(goal) < spec.min_separation {
            last_reason = "start and goal too close".into();
            continue;
        }
        if base.disc_collides(start.x, start.y, spec.robot_radius) || base.disc_collides(goal[0], goal[1], spec.robot_radius) {
            last_reason = "start or goal inside the fixed layout".into();
            continue;
        }
        let mut world = base.clone();
        let mut random = Vec::with_capacity(spec.obstacles.count);
        let mut placed_all = true;
        for _ in 0..spec.obstacles.count {
            match place_obstacle(spec, rng, start.position(), goal) {
                Some(o) => {
                    o.draw(&mut world);
                    random.push(o);
                }
                None => {
                    placed_all = false;
                    break;
                }
            }
        }
        if !placed_all {
            last_reason = "could not place obstacles clear of start and goal".into();
            continue;
        }
        if !connected(&world, start.position(), goal, spec.robot_radius) {
            last_reason = "no free path between start and goal".into();
            continue;
        }
        let mut obstacles = fixed.clone();
        obstacles.extend(random.iter().copied());
        return Ok(Scenario {
            world: Arc::new(world),
            start,
            goal,
            obstacles,
            random_obstacles: random.len(),
            start_region: spec.start.bounds(),
            goal_region: spec.goal.bounds(),
        });
    }
    Err(Error::Infeasible {
        attempts: MAX_ATTEMPTS,
        reason: last_reason,
    })
}

fn place_obstacle<R: Rng>(spec: &ScenarioSpec, rng: &mut R, start: [f64; 2], goal: [f64; 2]) -> Option<Obstacle> {
    let plan = &spec.obstacles;
    for _ in 0..100 {
        let center = [rng.gen_range(0.0..spec.extent[0]), rng.gen_range(0.0..spec.extent[1])];
        let obstacle = if rng.gen_bool(0.5) {
            let w = rng.gen_range(plan.size_min..=plan.size_max);
            let h = rng.gen_range(plan.size_min..=plan.size_max);
            Obstacle::Rect {
                min: [center[0] - 0.5 * w, center[1] - 0.5 * h],
                max: [center[0] + 0.5 * w, center[1] + 0.5 * h],
            }
        } else {
            Obstacle::Disc {
                center,
                radius: 0.5 * rng.gen_range(plan.size_min..=plan.size_max),
            }
        };
        if obstacle.distance_to(start) > spec.clearance && obstacle.distance_to(goal) > spec.clearance {
            return Some(obstacle);
        }
    }
    None
}

/// Flood fill over cells whose centers leave room for the robot disc.
pub fn connected(world: &WorldMap, start: [f64; 2], goal: [f64; 2], radius: f64) -> bool {
    let (cols, rows) = (world.cols(), world.rows());
    let free = |ix: i64, iy: i64| {
        let c = world.cell_center(ix, iy);
        !world.disc_collides(c[0], c[1], radius)
    };
    let s = world.cell_of(start[0], start[1]);
    let g = world.cell_of(goal[0], goal[1]);
    if !free(s.0, s.1) || !free(g.0, g.1) {
        return false;
    }
    let mut seen = vec![false; cols * rows];
    let mut queue = VecDeque::from([s]);
    seen[s.1 as usize * cols + s.0 as usize] = true;
    while let Some((x, y)) = queue.pop_front() {
        if (x, y) == g {
            return true;
        }
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if nx < 0 || ny < 0 || nx as usize >= cols || ny as usize >= rows {
                continue;
            }
            let idx = ny as usize * cols + nx as usize;
            if !seen[idx] && free(nx, ny) {
                seen[idx] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_counts() {
        let sparse = generate_scenario(&ScenarioSpec::preset(Family::Sparse), 7).unwrap();
        assert_eq!(sparse.random_obstacles, 6);
        assert_eq!(sparse.world.width(), 10.0);
        let dense = generate_scenario(&ScenarioSpec::preset(Family::Dense), 7).unwrap();
        assert_eq!(dense.random_obstacles, 32);
        for family in [Family::Spiral, Family::Zigzag] {
            let s = generate_scenario(&ScenarioSpec::preset(family), 1).unwrap();
            let small = s
                .obstacles
                .iter()
                .filter(|o| matches!(o, Obstacle::Rect { min, max } if (max[0] - min[0]) < 0.5 && (max[1] - min[1]) < 0.5))
                .count();
            assert_eq!(small, 5, "{family:?}");
            assert_eq!(s.world.width(), 6.0);
        }
    }

    #[test]
    fn fixed_layouts_are_seed_independent() {
        for family in [Family::Spiral, Family::Zigzag] {
            let a = generate_scenario(&ScenarioSpec::preset(family), 1).unwrap();
            let b = generate_scenario(&ScenarioSpec::preset(family), 99).unwrap();
            assert_eq!(a.world, b.world);
            assert_eq!(a.start, b.start);
            assert_eq!(a.goal, b.goal);
        }
    }

    #[test]
    fn generation_is_deterministic_and_connected() {
        for family in Family::ALL {
            let spec = ScenarioSpec::preset(family);
            for seed in 0..3 {
                let a = generate_scenario(&spec, seed).unwrap();
                let b = generate_scenario(&spec, seed).unwrap();
                assert_eq!(a.world, b.world);
                assert_eq!(a.start, b.start);
                assert!(connected(&a.world, a.start.position(), a.goal, spec.robot_radius));
                assert!(a.start.distance_to(a.goal) >= spec.min_separation);
                for o in &a.obstacles[a.obstacles.len() - a.random_obstacles..] {
                    assert!(o.distance_to(a.start.position()) > spec.clearance);
                    assert!(o.distance_to(a.goal) > spec.clearance);
                }
            }
        }
    }

    #[test]
    fn blocked_world_is_infeasible() {
        let mut spec = ScenarioSpec::small_sparse();
        spec.layout = Some(Layout::Builtin {
            name: BuiltinLayout::Zigzag,
        });
        spec.start = Region::Fixed { x: 0.6, y: 0.6, theta: 0.0 };
        spec.goal = Region::Fixed { x: 0.6, y: 5.4, theta: 0.0 };
        spec.obstacles.count = 0;
        assert!(generate_scenario(&spec, 0).is_ok());
        // Close the switchback's first gap.
        let dir = tempfile::tempdir().unwrap();
        let mut world = generate_scenario(&spec, 0).unwrap().world.as_ref().clone();
        world.fill_rect([4.8, 1.4], [6.0, 1.6]);
        let sidecar = dir.path().join("closed.toml");
        crate::sim::save_world_file(&world, &sidecar).unwrap();
        spec.layout = Some(Layout::File { path: sidecar });
        assert!(matches!(generate_scenario(&spec, 0), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn exported_files_reproduce_presets() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_scenario_files(dir.path()).unwrap();
        assert_eq!(paths.len(), 5);
        for (family, path) in Family::ALL.into_iter().zip(&paths) {
            let loaded = ScenarioSpec::load(path).unwrap();
            let a = generate_scenario(&loaded, 4).unwrap();
            let b = generate_scenario(&ScenarioSpec::preset(family), 4).unwrap();
            assert_eq!(a.world, b.world, "{family:?}");
            assert_eq!(a.start, b.start);
        }
    }

    #[test]
    fn spec_documents_round_trip() {
        for family in Family::ALL {
            let spec = ScenarioSpec::preset(family);
            let text = spec.to_toml().unwrap();
            let back: ScenarioSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
        assert_eq!(ScenarioSpec::resolve("dense").unwrap().family, Family::Dense);
    }
}
