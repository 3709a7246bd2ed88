use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{NetConfig, Network};
use crate::error::{Error, Result};
use crate::sim::Observation;

/// Samples per gradient shard; shards are reduced in index order so results
/// do not depend on the thread count.
const SHARD: usize = 64;

/// Per-shard surrogate sum, gradient, ratio sum, max ratio deviation, clip count.
type ShardSums = (f64, Vec<f64>, f64, f64, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogStdRange {
    pub min: f64,
    pub max: f64,
}

impl Default for LogStdRange {
    fn default() -> Self {
        Self {
            min: 0.01f64.ln(),
            max: 2.0f64.ln(),
        }
    }
}

/// Diagonal Gaussian policy: a network producing the mean and a
/// state-independent log standard deviation vector. The log standard
/// deviations are stored after the network weights in `params`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    net: Network,
    pub params: Vec<f64>,
    pub log_std_range: LogStdRange,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(config: NetConfig, action_dim: usize, init_log_std: f64, log_std_range: LogStdRange, rng: &mut R) -> Result<Self> {
        let net = Network::new(config, action_dim)?;
        let mut params = net.init_params(rng, 0.01);
        params.extend(std::iter::repeat_n(init_log_std.clamp(log_std_range.min, log_std_range.max), action_dim));
        Ok(Self {
            net,
            params,
            log_std_range,
        })
    }

    pub fn from_params(config: NetConfig, action_dim: usize, params: Vec<f64>, log_std_range: LogStdRange) -> Result<Self> {
        let net = Network::new(config, action_dim)?;
        if params.len() != net.n_params() + action_dim {
            return Err(Error::Shape {
                expected: net.n_params() + action_dim,
                actual: params.len(),
            });
        }
        Ok(Self {
            net,
            params,
            log_std_range,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn action_dim(&self) -> usize {
        self.net.out_dim()
    }

    fn log_std_offset(&self) -> usize {
        self.net.n_params()
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.params[self.log_std_offset()..]
            .iter()
            .map(|&p| p.clamp(self.log_std_range.min, self.log_std_range.max))
            .collect()
    }

    /// Keeps the stored log standard deviations inside the configured range.
    pub fn clamp_log_std(&mut self) {
        let (lo, hi) = (self.log_std_range.min, self.log_std_range.max);
        let offset = self.log_std_offset();
        for p in &mut self.params[offset..] {
            *p = p.clamp(lo, hi);
        }
    }

    /// Mean and log standard deviation at `obs`.
    pub fn forward(&self, obs: &Observation) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.net.eval(&self.params, obs)?, self.log_std()))
    }

    pub fn log_prob(&self, obs: &Observation, raw: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.forward(obs)?;
        Ok(gaussian_log_prob(raw, &mean, &log_std))
    }
}

/// Log-density of `x` under a diagonal Gaussian.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&xi, &mi), &ls)| {
            let z = (xi - mi) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Draws a raw action and returns it with its log-density.
pub fn sample_raw_action<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let raw: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + ls.exp() * eps
        })
        .collect();
    let lp = gaussian_log_prob(&raw, mean, log_std);
    (raw, lp)
}

/// Value network: same trunk as the policy with a scalar head whose output
/// is multiplied by a fixed `scale`, so returns in the hundreds do not
/// require huge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    net: Network,
    pub params: Vec<f64>,
    scale: f64,
}

impl ValueNet {
    pub fn new<R: Rng>(config: NetConfig, scale: f64, rng: &mut R) -> Result<Self> {
        let net = Network::new(config, 1)?;
        let params = net.init_params(rng, 1.0);
        Self::checked(net, params, scale)
    }

    pub fn from_params(config: NetConfig, scale: f64, params: Vec<f64>) -> Result<Self> {
        let net = Network::new(config, 1)?;
        if params.len() != net.n_params() {
            return Err(Error::Shape {
                expected: net.n_params(),
                actual: params.len(),
            });
        }
        Self::checked(net, params, scale)
    }

    fn checked(net: Network, params: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("value scale must be positive, got {scale}")));
        }
        Ok(Self { net, params, scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(self.scale * self.net.eval(&self.params, obs)?[0])
    }
}

/// One training sample for the clipped policy objective.
#[derive(Debug, Clone, Copy)]
pub struct PolicySample<'a> {
    pub observation: &'a Observation,
    pub raw_action: &'a [f64],
    pub old_log_prob: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurrogateStats {
    pub mean_ratio: f64,
    pub max_ratio_deviation: f64,
    /// Fraction of samples whose surrogate sits on the clipped branch.
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Pessimistic clipped surrogate of one sample, `min(ratio * A, g(eps, A))`
/// with `g = (1 + eps) A` for `A >= 0` and `(1 - eps) A` otherwise. Returns
/// the value and whether the clipped branch is active.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let bound = if advantage >= 0.0 {
        (1.0 + clip) * advantage
    } else {
        (1.0 - clip) * advantage
    };
    let unclipped = ratio * advantage;
    if unclipped < bound {
        (unclipped, false)
    } else {
        (bound, true)
    }
}

/// Negated mean clipped surrogate and its exact gradient. Samples on the
/// clipped branch contribute no gradient.
pub fn ppo_policy_loss(
    policy: &GaussianPolicy,
    samples: &[PolicySample<'_>],
    clip: f64,
) -> Result<(LossAndGrad, SurrogateStats)> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("empty policy batch".into()));
    }
    for s in samples {
        if !s.old_log_prob.is_finite() || !s.advantage.is_finite() || s.raw_action.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy batch"));
        }
    }
    let n_params = policy.params.len();
    let net = policy.network();
    let offset = net.n_params();
    let log_std = policy.log_std();
    let range = policy.log_std_range;
    let ls_active: Vec<bool> = policy.params[offset..]
        .iter()
        .map(|&p| p >= range.min && p <= range.max)
        .collect();

    let shards: Vec<Result<ShardSums>> = samples
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut grad = vec![0.0; n_params];
            let (mut surr_sum, mut ratio_sum, mut max_dev, mut clipped) = (0.0, 0.0, 0.0f64, 0usize);
            for s in chunk {
                let cache = net.forward(&policy.params, s.observation)?;
                let mean = cache.output();
                let lp = gaussian_log_prob(s.raw_action, mean, &log_std);
                let ratio = (lp - s.old_log_prob).exp();
                let (surr, is_clipped) = clipped_surrogate(ratio, s.advantage, clip);
                surr_sum += surr;
                ratio_sum += ratio;
                max_dev = max_dev.max((ratio - 1.0).abs());
                if is_clipped {
                    clipped += 1;
                    continue;
                }
                // d(surr)/d(log p) = ratio * A.
                let coeff = ratio * s.advantage;
                let mut d_mean = vec![0.0; mean.len()];
                for d in 0..mean.len() {
                    let var = (2.0 * log_std[d]).exp();
                    let diff = s.raw_action[d] - mean[d];
                    d_mean[d] = -coeff * diff / var;
                    if ls_active[d] {
                        grad[offset + d] += -coeff * (diff * diff / var - 1.0);
                    }
                }
                net.backward(&policy.params, &cache, &d_mean, &mut grad);
            }
            Ok((surr_sum, grad, ratio_sum, max_dev, clipped))
        })
        .collect();

    let n = samples.len() as f64;
    let mut grad = vec![0.0; n_params];
    let (mut surr_sum, mut ratio_sum, mut max_dev, mut clipped) = (0.0, 0.0, 0.0f64, 0usize);
    for shard in shards {
        let (s, g, r, m, c) = shard?;
        surr_sum += s;
        ratio_sum += r;
        max_dev = max_dev.max(m);
        clipped += c;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    let loss = -surr_sum / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("policy loss"));
    }
    Ok((
        LossAndGrad { loss, grad },
        SurrogateStats {
            mean_ratio: ratio_sum / n,
            max_ratio_deviation: max_dev,
            clip_fraction: clipped as f64 / n,
        },
    ))
}

/// Mean squared error `E[(R - V)^2]` and its gradient.
pub fn value_loss(value: &ValueNet, observations: &[&Observation], returns: &[f64]) -> Result<LossAndGrad> {
    if observations.len() != returns.len() {
        return Err(Error::Shape {
            expected: observations.len(),
            actual: returns.len(),
        });
    }
    if observations.is_empty() {
        return Err(Error::InvalidConfig("empty value batch".into()));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("value targets"));
    }
    let net = value.network();
    let scale = value.scale;
    let n_params = value.params.len();
    let n = returns.len() as f64;
    let pairs: Vec<(&Observation, f64)> = observations.iter().copied().zip(returns.iter().copied()).collect();
    let shards: Vec<Result<(f64, Vec<f64>)>> = pairs
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut grad = vec![0.0; n_params];
            let mut sq = 0.0;
            for &(obs, target) in chunk {
                let cache = net.forward(&value.params, obs)?;
                let err = target - scale * cache.output()[0];
                sq += err * err;
                net.backward(&value.params, &cache, &[-2.0 * scale * err / n], &mut grad);
            }
            Ok((sq, grad))
        })
        .collect();
    let mut grad = vec![0.0; n_params];
    let mut sq = 0.0;
    for shard in shards {
        let (s, g) = shard?;
        sq += s;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    let loss = sq / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("value loss"));
    }
    Ok(LossAndGrad { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::ConvSpec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetConfig {
        NetConfig {
            map_cells: 5,
            conv: vec![ConvSpec { channels: 2, kernel: 3, stride: 2 }],
            hidden: vec![4],
        }
    }

    fn obs(seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Observation {
            size: 5,
            local_map: (0..25).map(|_| rng.gen_range(0..2)).collect(),
            goal_rel: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        }
    }

    #[test]
    fn log_prob_at_mean_unit_std() {
        let lp = gaussian_log_prob(&[0.3, -1.0], &[0.3, -1.0], &[0.0, 0.0]);
        assert_abs_diff_eq!(lp, -(2.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lp, -1.83788, epsilon = 1e-5);
    }

    #[test]
    fn sampled_log_prob_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean = [0.2, -0.4];
        let log_std = [-0.3, 0.1];
        for _ in 0..100 {
            let (raw, lp) = sample_raw_action(&mean, &log_std, &mut rng);
            let mut independent = 0.0;
            for d in 0..2 {
                let sigma = log_std[d].exp();
                independent += (-(raw[d] - mean[d]).powi(2) / (2.0 * sigma * sigma)).exp().ln()
                    - (sigma * (2.0 * PI).sqrt()).ln();
            }
            assert!((lp - independent).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_std_samples_near_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let floor = LogStdRange::default().min;
        let (raw, _) = sample_raw_action(&[0.5, 0.1], &[floor, floor], &mut rng);
        assert!((raw[0] - 0.5).abs() < 0.05 && (raw[1] - 0.1).abs() < 0.05);
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_raw_action(&[0.0, 0.0], &[0.0, 0.0], &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_raw_action(&[0.0, 0.0], &[0.0, 0.0], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn clipped_surrogate_branches() {
        assert_eq!(clipped_surrogate(1.0, 2.0, 0.2), (2.0, false));
        assert_eq!(clipped_surrogate(1.5, 2.0, 0.2), (2.4, true));
        assert_eq!(clipped_surrogate(0.5, -2.0, 0.2), (-1.6, true));
        assert_eq!(clipped_surrogate(1.5, -2.0, 0.2), (-3.0, false));
    }

    #[test]
    fn ratio_one_loss_is_negative_mean_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = GaussianPolicy::new(tiny(), 2, 0.5f64.ln(), LogStdRange::default(), &mut rng).unwrap();
        let observations: Vec<Observation> = (0..5).map(obs).collect();
        let raws: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 * i as f64, -0.2]).collect();
        let advs = [1.0, -2.0, 0.5, 3.0, -0.25];
        let samples: Vec<PolicySample> = (0..5)
            .map(|i| PolicySample {
                observation: &observations[i],
                raw_action: &raws[i],
                old_log_prob: policy.log_prob(&observations[i], &raws[i]).unwrap(),
                advantage: advs[i],
            })
            .collect();
        let (lg, stats) = ppo_policy_loss(&policy, &samples, 0.2).unwrap();
        assert_abs_diff_eq!(lg.loss, -advs.iter().sum::<f64>() / 5.0, epsilon = 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.max_ratio_deviation < 1e-12);
    }

    #[test]
    fn value_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut value = ValueNet::new(tiny(), 1.0, &mut rng).unwrap();
        value.params.iter_mut().for_each(|p| *p = 0.0);
        let o = obs(0);
        let lg = value_loss(&value, &[&o], &[2.0]).unwrap();
        assert_abs_diff_eq!(lg.loss, 4.0, epsilon = 1e-12);
        let lg = value_loss(&value, &[&o], &[0.0]).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.iter().all(|&g| g == 0.0));
        assert!(value_loss(&value, &[&o], &[f64::NAN]).is_err());
        assert!(value_loss(&value, &[&o], &[1.0, 2.0]).is_err());
    }
}
