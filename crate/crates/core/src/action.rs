//! Raw policy output to executable command: the soft-saturating activation
//! on translational velocity and the trajectory-parameter-space conversion
//! that realizes a virtual action as the fastest admissible arc.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::smdp::{ExecutableAction, VirtualAction};

/// Knee of the activation; below it the exponential branch applies.
const ELU_KNEE: f64 = 0.2;
const ELU_SCALE: f64 = 0.2;
const ELU_SLOPE: f64 = 5.0;
const ELU_OFFSET: f64 = 1.0;

/// Upper bound on the duration emitted by [`direct_3d`], s.
pub const DIRECT_MAX_DURATION: f64 = 3.0;
/// Lower bound on the duration emitted by [`direct_3d`], s.
pub const DIRECT_MIN_DURATION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotLimits {
    /// Maximum translational velocity, m/s.
    pub v_max: f64,
    /// Maximum rotational velocity, rad/s.
    pub omega_max: f64,
    /// Time scale over which virtual actions are interpreted, s.
    pub tau_tp: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            v_max: 0.6,
            omega_max: 0.9,
            tau_tp: 0.4,
        }
    }
}

impl RobotLimits {
    pub fn validate(&self) -> Result<()> {
        if self.v_max > 0.0 && self.omega_max > 0.0 && self.tau_tp > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "robot limits must be positive: {self:?}"
            )))
        }
    }
}

/// Modified ELU on the translational component: continuous, strictly
/// increasing and positive everywhere. The rotational component passes
/// through.
pub fn activate(raw: [f64; 2]) -> Result<VirtualAction> {
    ensure_finite(raw[0], "raw translational velocity")?;
    ensure_finite(raw[1], "raw rotational velocity")?;
    Ok(VirtualAction {
        v_tp: modified_elu(raw[0]),
        omega_tp: raw[1],
    })
}

fn modified_elu(v: f64) -> f64 {
    if v < ELU_KNEE {
        ELU_SCALE * (ELU_SLOPE * v - ELU_OFFSET).exp()
    } else {
        v
    }
}

/// Rectifier replacement for [`activate`]; may produce `v_tp = 0`.
pub fn activate_relu(raw: [f64; 2]) -> Result<VirtualAction> {
    ensure_finite(raw[0], "raw translational velocity")?;
    ensure_finite(raw[1], "raw rotational velocity")?;
    Ok(VirtualAction {
        v_tp: raw[0].max(0.0),
        omega_tp: raw[1],
    })
}

/// Scales a virtual action so the robot follows the same arc as fast as its
/// limits allow: `k = max(v_tp / v_max, |omega_tp| / omega_max)`, then
/// `(v, omega, d) = (v_tp / k, omega_tp / k, k * tau_tp)`.
pub fn to_executable(virt: VirtualAction, limits: &RobotLimits) -> Result<ExecutableAction> {
    ensure_finite(virt.v_tp, "virtual translational velocity")?;
    ensure_finite(virt.omega_tp, "virtual rotational velocity")?;
    if virt.v_tp < 0.0 {
        return Err(Error::DegenerateAction("negative virtual velocity"));
    }
    let k = (virt.v_tp / limits.v_max).max(virt.omega_tp.abs() / limits.omega_max);
    if k <= 0.0 {
        return Err(Error::DegenerateAction("virtual action has no motion"));
    }
    Ok(ExecutableAction {
        v: virt.v_tp / k,
        omega: virt.omega_tp / k,
        d: k * limits.tau_tp,
    })
}

/// Direct three-component action for the ablation without trajectory
/// parameter space: velocities clamped to the limits, duration squashed into
/// `[DIRECT_MIN_DURATION, DIRECT_MAX_DURATION]` by a logistic.
pub fn direct_3d(raw: [f64; 3], limits: &RobotLimits) -> Result<ExecutableAction> {
    ensure_finite(raw[0], "raw translational velocity")?;
    ensure_finite(raw[1], "raw rotational velocity")?;
    ensure_finite(raw[2], "raw duration")?;
    let logistic = 1.0 / (1.0 + (-raw[2]).exp());
    Ok(ExecutableAction {
        v: raw[0].clamp(0.0, limits.v_max),
        omega: raw[1].clamp(-limits.omega_max, limits.omega_max),
        d: (DIRECT_MAX_DURATION * logistic).max(DIRECT_MIN_DURATION),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    ModifiedElu,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSpace {
    /// Two-component virtual action converted to a command.
    #[default]
    TrajectoryParameter,
    /// Three-component command emitted directly.
    Direct,
}

impl ActionSpace {
    pub fn raw_dim(&self) -> usize {
        match self {
            ActionSpace::TrajectoryParameter => 2,
            ActionSpace::Direct => 3,
        }
    }
}

/// The full raw-to-command mapping used during rollouts and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionPipeline {
    pub limits: RobotLimits,
    pub activation: Activation,
    pub space: ActionSpace,
}

impl ActionPipeline {
    pub fn raw_dim(&self) -> usize {
        self.space.raw_dim()
    }

    pub fn convert(&self, raw: &[f64]) -> Result<ExecutableAction> {
        if raw.len() != self.raw_dim() {
            return Err(Error::Shape {
                expected: self.raw_dim(),
                actual: raw.len(),
            });
        }
        match self.space {
            ActionSpace::Direct => direct_3d([raw[0], raw[1], raw[2]], &self.limits),
            ActionSpace::TrajectoryParameter => {
                let pair = [raw[0], raw[1]];
                let virt = match self.activation {
                    Activation::ModifiedElu => activate(pair)?,
                    Activation::Relu => activate_relu(pair)?,
                };
                match to_executable(virt, &self.limits) {
                    // The rectifier can zero both components; the robot then
                    // holds still for one time-scale period.
                    Err(Error::DegenerateAction(_)) if virt.v_tp == 0.0 && virt.omega_tp == 0.0 => {
                        Ok(ExecutableAction {
                            v: 0.0,
                            omega: 0.0,
                            d: self.limits.tau_tp,
                        })
                    }
                    other => other,
                }
            }
        }
    }
}
