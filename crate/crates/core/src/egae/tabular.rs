//! Finite SMDP with exact value functions, used to check the advantage
//! estimators against ground truth.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{egae_advantages, EstimatorConfig};
use crate::error::{Error, Result};
use crate::smdp::Trajectory;

const MAX_SAMPLED_STEPS: usize = 100_000;

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub duration: f64,
    pub reward: f64,
    pub prob: f64,
}

/// Finite SMDP. Episodes end on entering an absorbing state, which has zero
/// value by construction.
#[derive(Debug, Clone)]
pub struct TabularSmdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed by `state * n_actions + action`.
    outcomes: Vec<Vec<Outcome>>,
    absorbing: Vec<bool>,
    /// Discount per second.
    pub gamma: f64,
}

impl TabularSmdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        outcomes: Vec<Vec<Outcome>>,
        absorbing: Vec<bool>,
        gamma: f64,
    ) -> Result<Self> {
        if outcomes.len() != n_states * n_actions || absorbing.len() != n_states {
            return Err(Error::InvalidConfig("outcome table shape".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma {gamma}")));
        }
        for (idx, row) in outcomes.iter().enumerate() {
            if absorbing[idx / n_actions] {
                continue;
            }
            let total: f64 = row.iter().map(|o| o.prob).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "probabilities of (state {}, action {}) sum to {total}",
                    idx / n_actions,
                    idx % n_actions
                )));
            }
            for o in row {
                if o.duration.partial_cmp(&0.0) != Some(Ordering::Greater) || o.next >= n_states || o.prob < 0.0 {
                    return Err(Error::InvalidConfig(format!("bad outcome {o:?}")));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            outcomes,
            absorbing,
            gamma,
        })
    }

    /// Three live states on a line ending in an absorbing goal. Action 0
    /// moves one state ahead in 0.5 s or stalls for 1.5 s; action 1 jumps
    /// two ahead in 1 s or moves one ahead in 2.5 s.
    pub fn corridor_example(gamma: f64) -> Result<Self> {
        let o = |next, duration, reward, prob| Outcome {
            next,
            duration,
            reward,
            prob,
        };
        let mut outcomes = Vec::new();
        for s in 0..3usize {
            outcomes.push(vec![o(s + 1, 0.5, -1.0, 0.7), o(s, 1.5, -2.0, 0.3)]);
            outcomes.push(vec![o((s + 2).min(3), 1.0, -3.0, 0.5), o(s + 1, 2.5, 1.0, 0.5)]);
        }
        outcomes.push(vec![]);
        outcomes.push(vec![]);
        Self::new(4, 2, outcomes, vec![false, false, false, true], gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing[state]
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Outcome] {
        &self.outcomes[state * self.n_actions + action]
    }

    /// Expected immediate reward and discounted successor value of `(s, a)`.
    fn backup(&self, state: usize, action: usize, values: &[f64]) -> f64 {
        self.outcomes(state, action)
            .iter()
            .map(|o| o.prob * (o.reward + self.gamma.powf(o.duration) * values[o.next]))
            .sum()
    }

    pub fn sample_outcome<R: Rng>(&self, state: usize, action: usize, rng: &mut R) -> Outcome {
        let row = self.outcomes(state, action);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for o in row {
            acc += o.prob;
            if u < acc {
                return *o;
            }
        }
        *row.last().expect("non-empty outcome row")
    }
}

/// Stochastic policy `probs[state][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    pub fn sample<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in self.probs[state].iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.probs[state].len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

/// Solves the policy's Bellman equations
/// `V(s) = sum_a pi(a|s) sum_o p_o (r_o + gamma^tau_o V(s'_o))` directly.
pub fn exact_values(smdp: &TabularSmdp, policy: &TabularPolicy) -> Result<ExactValues> {
    let n = smdp.n_states;
    let mut lhs = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        if smdp.absorbing[s] {
            continue;
        }
        for a in 0..smdp.n_actions {
            let pa = policy.probs[s][a];
            for o in smdp.outcomes(s, a) {
                rhs[s] += pa * o.prob * o.reward;
                if !smdp.absorbing[o.next] {
                    lhs[(s, o.next)] -= pa * o.prob * smdp.gamma.powf(o.duration);
                }
            }
        }
    }
    let solution = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonTerminating("singular Bellman system".into()))?;
    let v: Vec<f64> = solution.iter().copied().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonTerminating("non-finite state values".into()));
    }
    let residual = (0..n)
        .filter(|&s| !smdp.absorbing[s])
        .map(|s| {
            let backed: f64 = (0..smdp.n_actions)
                .map(|a| policy.probs[s][a] * smdp.backup(s, a, &v))
                .sum();
            (backed - v[s]).abs()
        })
        .fold(0.0, f64::max);
    if residual > 1e-9 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
        return Err(Error::NonTerminating(format!("Bellman residual {residual}")));
    }
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..smdp.n_actions)
                .map(|a| if smdp.absorbing[s] { 0.0 } else { smdp.backup(s, a, &v) })
                .collect()
        })
        .collect();
    let a = q
        .iter()
        .zip(&v)
        .map(|(row, vs)| row.iter().map(|qa| qa - vs).collect())
        .collect();
    Ok(ExactValues { v, q, a })
}

/// A sampled episode with the visited states and chosen actions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEpisode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub taus: Vec<f64>,
}

impl SampledEpisode {
    /// Trajectory with value estimates taken from `values` per state.
    pub fn trajectory(&self, values: &[f64]) -> Trajectory {
        Trajectory {
            rewards: self.rewards.clone(),
            taus: self.taus.clone(),
            values: self.states.iter().map(|&s| values[s]).collect(),
            terminal_value: 0.0,
        }
    }
}

pub fn sample_episode<R: Rng>(
    smdp: &TabularSmdp,
    policy: &TabularPolicy,
    start: usize,
    rng: &mut R,
) -> Result<SampledEpisode> {
    let mut ep = SampledEpisode {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        taus: Vec::new(),
    };
    let mut s = start;
    while !smdp.absorbing[s] {
        if ep.states.len() >= MAX_SAMPLED_STEPS {
            return Err(Error::NonTerminating(format!(
                "episode exceeded {MAX_SAMPLED_STEPS} decisions"
            )));
        }
        let a = policy.sample(s, rng);
        let o = smdp.sample_outcome(s, a, rng);
        ep.states.push(s);
        ep.actions.push(a);
        ep.rewards.push(o.reward);
        ep.taus.push(o.duration);
        s = o.next;
    }
    Ok(ep)
}

/// Per `(state, action)` comparison of the mean estimated advantage with the
/// exact one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub state: usize,
    pub action: usize,
    pub exact_a: f64,
    pub mean_estimate: f64,
    pub std_error: f64,
    pub n: u64,
    /// `mean_estimate - exact_a`.
    pub error: f64,
    /// `mean_estimate - (Q(s, a) - V_hat(s))`: error left after removing the
    /// state-only offset `V(s) - V_hat(s)`, which does not bias policy
    /// gradients.
    pub baseline_error: f64,
}

impl BiasRow {
    pub fn within(&self, k: f64, value: f64) -> bool {
        value.abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BiasReport {
    pub rows: Vec<BiasRow>,
}

impl BiasReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples `n_episodes` from uniformly random non-absorbing start states and
/// averages the estimated advantage at the first visit of each
/// `(state, action)` per episode, so samples are independent across
/// episodes. Accumulation is sequential in episode order.
pub fn bias_experiment(
    smdp: &TabularSmdp,
    policy: &TabularPolicy,
    values: &[f64],
    config: &EstimatorConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<BiasReport> {
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be at least 1".into()));
    }
    config.validate()?;
    let exact = exact_values(smdp, policy)?;
    let starts: Vec<usize> = (0..smdp.n_states).filter(|&s| !smdp.absorbing[s]).collect();
    let cells = smdp.n_states * smdp.n_actions;
    let mut count = vec![0u64; cells];
    let mut mean = vec![0.0; cells];
    let mut m2 = vec![0.0; cells];
    let mut seen = vec![false; cells];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..n_episodes {
        let start = starts[rng.gen_range(0..starts.len())];
        let ep = sample_episode(smdp, policy, start, &mut rng)?;
        let adv = egae_advantages(&ep.trajectory(values), config);
        seen.iter_mut().for_each(|x| *x = false);
        for (i, (&s, &a)) in ep.states.iter().zip(&ep.actions).enumerate() {
            let idx = s * smdp.n_actions + a;
            if seen[idx] {
                continue;
            }
            seen[idx] = true;
            // Welford update.
            count[idx] += 1;
            let delta = adv[i] - mean[idx];
            mean[idx] += delta / count[idx] as f64;
            m2[idx] += delta * (adv[i] - mean[idx]);
        }
    }

    let rows = (0..cells)
        .filter(|&idx| count[idx] > 0)
        .map(|idx| {
            let (s, a) = (idx / smdp.n_actions, idx % smdp.n_actions);
            let n = count[idx];
            let var = if n > 1 { m2[idx] / (n - 1) as f64 } else { 0.0 };
            let target = exact.q[s][a] - values[s];
            BiasRow {
                state: s,
                action: a,
                exact_a: exact.a[s][a],
                mean_estimate: mean[idx],
                std_error: (var / n as f64).sqrt(),
                n,
                error: mean[idx] - exact.a[s][a],
                baseline_error: mean[idx] - target,
            }
        })
        .collect();
    Ok(BiasReport { rows })
}
