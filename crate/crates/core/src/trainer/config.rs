use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{Activation, ActionPipeline, ActionSpace};
use crate::egae::{EstimatorConfig, EstimatorKind};
use crate::error::{Error, Result};
use crate::eval::ScenarioSpec;
use crate::nn::{ConvSpec, LogStdRange, NetConfig};
use crate::sim::{ExecutionMode, LidarConfig, LocalMapConfig, RewardParams, RobotSpec, SensorConfig};
use crate::smdp::{DiscountMode, DiscountSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    /// Full-buffer policy iterations per epoch.
    pub policy_iters: usize,
    /// Full-buffer value iterations per epoch.
    pub value_iters: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            policy_iters: 10,
            value_iters: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    pub lambda: f64,
    pub kind: EstimatorKind,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            lambda: 0.95,
            kind: EstimatorKind::Egae,
        }
    }
}

/// Action-path toggles. Estimator kind and discount mode live in
/// `estimator` and `discount`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablations {
    /// Modified ELU on the raw speed; a plain rectifier otherwise.
    pub use_elu: bool,
    /// Two-component virtual actions; direct three-component commands
    /// otherwise.
    pub use_2d_to_3d: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Self {
            use_elu: true,
            use_2d_to_3d: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    /// Environment steps per epoch, summed over workers.
    pub steps_per_epoch: usize,
    /// Decisions after which an episode is cut as a timeout.
    pub max_episode_steps: usize,
    pub n_workers: usize,
    pub seed: u64,
    pub discount: DiscountSpec,
    pub estimator: EstimatorSettings,
    pub ppo: PpoConfig,
    pub mode: ExecutionMode,
    pub ablations: Ablations,
    pub scenario: ScenarioSpec,
    pub sensor: SensorConfig,
    pub net: NetConfig,
    pub robot: RobotSpec,
    pub reward: RewardParams,
    pub init_log_std: f64,
    pub log_std_range: LogStdRange,
    /// Fixed multiplier on the value head output.
    pub value_scale: f64,
    /// Standardize advantages over each epoch's buffer.
    pub normalize_advantages: bool,
    /// Replaces every commanded duration, seconds. Used to make the two
    /// discount modes coincide.
    #[serde(default)]
    pub fixed_duration: Option<f64>,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            steps_per_epoch: 4096,
            max_episode_steps: 200,
            n_workers: 8,
            seed: 0,
            discount: DiscountSpec::default(),
            estimator: EstimatorSettings::default(),
            ppo: PpoConfig::default(),
            mode: ExecutionMode::Mode1,
            ablations: Ablations::default(),
            scenario: ScenarioSpec::preset(crate::eval::Family::Sparse),
            sensor: SensorConfig::default(),
            net: NetConfig::default(),
            robot: RobotSpec::default(),
            reward: RewardParams::default(),
            init_log_std: 0.5f64.ln(),
            log_std_range: LogStdRange::default(),
            value_scale: 100.0,
            normalize_advantages: false,
            fixed_duration: None,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    /// Reduced world, sensor and network that train on one CPU core within
    /// minutes.
    pub fn desk() -> Self {
        let stage = |channels| ConvSpec {
            channels,
            kernel: 3,
            stride: 2,
        };
        Self {
            epochs: 60,
            steps_per_epoch: 2048,
            n_workers: 4,
            scenario: ScenarioSpec::small_sparse(),
            sensor: SensorConfig {
                lidar: LidarConfig {
                    n_beams: 61,
                    ..LidarConfig::default()
                },
                local_map: LocalMapConfig { extent: 6.0, cells: 24 },
            },
            net: NetConfig {
                map_cells: 24,
                conv: vec![stage(8), stage(8)],
                hidden: vec![64, 64],
            },
            checkpoint_every: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps_per_epoch == 0 || self.max_episode_steps == 0 || self.n_workers == 0 {
            return invalid("steps_per_epoch, max_episode_steps and n_workers must be positive".into());
        }
        if self.ppo.policy_iters == 0 || self.ppo.value_iters == 0 {
            return invalid("policy_iters and value_iters must be positive".into());
        }
        if !(self.ppo.clip > 0.0 && self.ppo.policy_lr > 0.0 && self.ppo.value_lr > 0.0) {
            return invalid("clip and learning rates must be positive".into());
        }
        if self.net.map_cells != self.sensor.local_map.cells {
            return invalid(format!(
                "net.map_cells {} differs from sensor.local_map.cells {}",
                self.net.map_cells, self.sensor.local_map.cells
            ));
        }
        if let Some(d) = self.fixed_duration {
            if !(d > 0.0 && d.is_finite()) {
                return invalid(format!("fixed_duration must be positive, got {d}"));
            }
        }
        if !(self.value_scale > 0.0 && self.value_scale.is_finite()) {
            return invalid(format!("value_scale must be positive, got {}", self.value_scale));
        }
        if self.log_std_range.min > self.log_std_range.max {
            return invalid("log_std_range.min exceeds max".into());
        }
        self.estimator_config().validate()?;
        self.robot.limits.validate()?;
        self.reward.validate()
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            lambda: self.estimator.lambda,
            discount: self.discount,
            kind: self.estimator.kind,
        }
    }

    pub fn pipeline(&self) -> ActionPipeline {
        ActionPipeline {
            limits: self.robot.limits,
            activation: if self.ablations.use_elu {
                Activation::ModifiedElu
            } else {
                Activation::Relu
            },
            space: if self.ablations.use_2d_to_3d {
                ActionSpace::TrajectoryParameter
            } else {
                ActionSpace::Direct
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Applies `key=value` with a dotted key path, e.g.
    /// `ppo.policy_lr=1e-4` or `discount.mode="per-step"`. Bare words that
    /// are not TOML literals are taken as strings.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override '{assignment}' is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut root = toml::Value::try_from(&*self)?;
        let path: Vec<&str> = key.split('.').collect();
        let (last, parents) = path.split_last().expect("split yields one item");
        let mut node = &mut root;
        for p in parents {
            node = node
                .get_mut(*p)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key '{key}'")))?;
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("'{key}' does not name a field")))?;
        table.insert(last.to_string(), value);
        let updated: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("override '{assignment}': {e}")))?;
        // Catch keys silently dropped by nested types.
        let check = toml::Value::try_from(&updated)?;
        let mut node = &check;
        for p in &path {
            node = node
                .get(*p)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key '{key}'")))?;
        }
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

/// Named training variants for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoElu,
    No2dTo3d,
    NoEgae,
    NoSmdp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoElu,
        Variant::No2dTo3d,
        Variant::NoEgae,
        Variant::NoSmdp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "AFST",
            Variant::NoElu => "-ELU",
            Variant::No2dTo3d => "-2D-to-3D",
            Variant::NoEgae => "-EGAE",
            Variant::NoSmdp => "-SMDP",
        }
    }

    /// Accepts the display name in any case, with or without the dash.
    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().trim_start_matches('-').to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|v| v.name().trim_start_matches('-').to_ascii_lowercase() == norm)
    }

    /// Switches exactly one component off.
    pub fn apply(&self, config: &mut TrainConfig) {
        match self {
            Variant::Full => {}
            Variant::NoElu => config.ablations.use_elu = false,
            Variant::No2dTo3d => config.ablations.use_2d_to_3d = false,
            Variant::NoEgae => config.estimator.kind = EstimatorKind::Td0,
            Variant::NoSmdp => config.discount.mode = DiscountMode::PerStep,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for config in [TrainConfig::default(), TrainConfig::desk()] {
            let text = config.to_toml().unwrap();
            assert_eq!(TrainConfig::from_toml(&text).unwrap(), config);
        }
    }

    #[test]
    fn overrides() {
        let mut c = TrainConfig::desk();
        c.apply_override("ppo.policy_lr=1e-4").unwrap();
        assert_eq!(c.ppo.policy_lr, 1e-4);
        c.apply_override("discount.mode=per-step").unwrap();
        assert_eq!(c.discount.mode, DiscountMode::PerStep);
        c.apply_override("fixed_duration=1.0").unwrap();
        assert_eq!(c.fixed_duration, Some(1.0));
        c.apply_override("epochs = 3").unwrap();
        assert_eq!(c.epochs, 3);
        assert!(c.apply_override("ppo.nope=1").is_err());
        assert!(c.apply_override("robot.limits.vmax=1").is_err());
        assert!(c.apply_override("n_workers=0").is_err());
        assert!(c.apply_override("epochs").is_err());
    }

    #[test]
    fn variants_toggle_one_thing() {
        let base = TrainConfig::default();
        for v in Variant::ALL {
            let mut c = base.clone();
            v.apply(&mut c);
            let changed = [
                c.ablations.use_elu != base.ablations.use_elu,
                c.ablations.use_2d_to_3d != base.ablations.use_2d_to_3d,
                c.estimator != base.estimator,
                c.discount != base.discount,
            ]
            .iter()
            .filter(|&&b| b)
            .count();
            assert_eq!(changed, usize::from(v != Variant::Full), "{v:?}");
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        assert_eq!(Variant::parse("egae"), Some(Variant::NoEgae));
        assert_eq!(Variant::parse("afst"), Some(Variant::Full));
    }
}
