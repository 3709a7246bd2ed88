//! Advantage estimation for episodes whose decisions last different amounts
//! of time.
//!
//! The time-discounted estimator weights the residual `j` decisions ahead by
//! `gamma^(t_{i+j} - t_i) * lambda^j`, so a long action discounts what follows
//! it more than a short one. The per-step and one-step estimators used by the
//! ablations share the same backward pass.

mod tabular;

use serde::{Deserialize, Serialize};

pub use tabular::{
    bias_experiment, exact_values, sample_episode, BiasReport, BiasRow, ExactValues, Outcome,
    SampledEpisode, TabularPolicy, TabularSmdp,
};

use crate::error::{Error, Result};
use crate::smdp::{DiscountMode, DiscountSpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Lambda-weighted residuals discounted by elapsed time.
    #[default]
    Egae,
    /// Classic GAE: discount per decision regardless of duration.
    GaePerStep,
    /// One-step residual only.
    Td0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub discount: DiscountSpec,
    pub kind: EstimatorKind,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: 0.95,
            discount: DiscountSpec::default(),
            kind: EstimatorKind::Egae,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.discount.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Discount actually applied between decisions.
    pub fn effective_discount(&self) -> DiscountSpec {
        match self.kind {
            EstimatorKind::GaePerStep => DiscountSpec {
                gamma: self.discount.gamma,
                mode: DiscountMode::PerStep,
            },
            EstimatorKind::Egae | EstimatorKind::Td0 => self.discount,
        }
    }
}

/// `delta_i = r_i + w(tau_i) V(s_{i+1}) - V(s_i)`, with the trajectory's
/// terminal value standing in for the state after the last decision.
pub fn td_residual(traj: &Trajectory, i: usize, discount: &DiscountSpec) -> Result<f64> {
    if i >= traj.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: traj.len(),
        });
    }
    Ok(traj.rewards[i] + discount.step_weight(traj.taus[i]) * traj.next_value(i) - traj.values[i])
}

pub fn td_residuals(traj: &Trajectory, discount: &DiscountSpec) -> Vec<f64> {
    (0..traj.len())
        .map(|i| traj.rewards[i] + discount.step_weight(traj.taus[i]) * traj.next_value(i) - traj.values[i])
        .collect()
}

/// Per-decision advantages in one backward pass:
/// `A_i = delta_i + w(tau_i) * lambda * A_{i+1}`, `A_n = 0`.
pub fn egae_advantages(traj: &Trajectory, config: &EstimatorConfig) -> Vec<f64> {
    let discount = config.effective_discount();
    let deltas = td_residuals(traj, &discount);
    if config.kind == EstimatorKind::Td0 {
        return deltas;
    }
    let mut advantages = vec![0.0; deltas.len()];
    let mut next = 0.0;
    for i in (0..deltas.len()).rev() {
        next = deltas[i] + discount.step_weight(traj.taus[i]) * config.lambda * next;
        advantages[i] = next;
    }
    advantages
}

/// Reward-to-go targets for the value function under the estimator's
/// discount.
pub fn value_targets(traj: &Trajectory, config: &EstimatorConfig) -> Vec<f64> {
    crate::smdp::discounted_returns(traj, &config.effective_discount())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_step() -> Trajectory {
        Trajectory {
            rewards: vec![1.0, 2.0],
            taus: vec![1.0, 2.0],
            values: vec![0.0, 0.0],
            terminal_value: 0.0,
        }
    }

    #[test]
    fn residual_examples() {
        let terminal = Trajectory {
            rewards: vec![-500.0],
            taus: vec![0.3],
            values: vec![0.0],
            terminal_value: 0.0,
        };
        assert_eq!(td_residual(&terminal, 0, &DiscountSpec::smdp(0.99)).unwrap(), -500.0);

        let t = Trajectory {
            rewards: vec![1.0, 0.0],
            taus: vec![1.0, 1.0],
            values: vec![0.0, 10.0],
            terminal_value: 0.0,
        };
        assert_abs_diff_eq!(td_residual(&t, 0, &DiscountSpec::smdp(0.9)).unwrap(), 10.0, epsilon = 1e-12);
        assert!(td_residual(&t, 2, &DiscountSpec::smdp(0.9)).is_err());
    }

    #[test]
    fn two_step_example() {
        let config = EstimatorConfig {
            lambda: 0.5,
            discount: DiscountSpec::smdp(0.9),
            kind: EstimatorKind::Egae,
        };
        let a = egae_advantages(&two_step(), &config);
        assert_abs_diff_eq!(a[0], 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda_zero_is_td0() {
        let t = Trajectory {
            rewards: vec![1.0, -2.0, 3.0],
            taus: vec![0.4, 1.7, 0.9],
            values: vec![0.5, 1.5, -1.0],
            terminal_value: 0.0,
        };
        let egae = EstimatorConfig {
            lambda: 0.0,
            discount: DiscountSpec::smdp(0.95),
            kind: EstimatorKind::Egae,
        };
        let td0 = EstimatorConfig {
            kind: EstimatorKind::Td0,
            lambda: 0.9,
            ..egae
        };
        assert_eq!(egae_advantages(&t, &egae), egae_advantages(&t, &td0));
    }

    #[test]
    fn per_step_kind_ignores_durations() {
        let mut a = two_step();
        let mut b = two_step();
        a.taus = vec![0.2, 2.0];
        b.taus = vec![2.5, 0.1];
        let config = EstimatorConfig {
            lambda: 0.7,
            discount: DiscountSpec::smdp(0.9),
            kind: EstimatorKind::GaePerStep,
        };
        assert_eq!(egae_advantages(&a, &config), egae_advantages(&b, &config));
        let smdp = EstimatorConfig {
            kind: EstimatorKind::Egae,
            ..config
        };
        assert_ne!(egae_advantages(&a, &smdp), egae_advantages(&b, &smdp));
    }

    #[test]
    fn lambda_out_of_range_rejected() {
        let config = EstimatorConfig {
            lambda: 1.5,
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }
}
