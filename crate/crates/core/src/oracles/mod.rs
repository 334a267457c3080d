//! Best-response, positive-response and estimation oracles over tabular MDPs.
//!
//! Exact mode plans with value iteration and evaluates policies with a linear
//! solve. Sampled mode learns with tabular Q-learning and estimates
//! measurements from truncated rollouts.

mod cache;

pub use cache::{CacheEntry, Lookup, PolicyCache};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{check_dim, check_finite, dot, norm};
use crate::mdp::{StationaryPolicy, VectorMdp};
use crate::{Error, Result};

const ROLLOUT_CHUNK: usize = 256;
const WARM_BIAS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mode: OracleMode,
    /// Best-response suboptimality; in exact mode the value-iteration bound is used when larger.
    pub eps0: f64,
    /// Estimation error; in exact mode estimates are exact.
    pub eps1: f64,
    pub vi_tolerance: f64,
    pub trailing_n: usize,
    pub trailing_eps: f64,
    pub max_episodes: usize,
    /// Rollouts per sampled estimate.
    pub rollouts: usize,
    /// Rollout and episode length; defaults to the MDP's truncation horizon.
    pub horizon: Option<usize>,
    pub learning_rate: f64,
    pub exploration: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            mode: OracleMode::Exact,
            eps0: 0.0,
            eps1: 0.0,
            vi_tolerance: 1e-8,
            trailing_n: 50,
            trailing_eps: 0.05,
            max_episodes: 2000,
            rollouts: 1000,
            horizon: None,
            learning_rate: 0.1,
            exploration: 0.1,
        }
    }
}

impl OracleConfig {
    pub fn exact() -> Self {
        OracleConfig::default()
    }

    pub fn sampled() -> Self {
        OracleConfig {
            mode: OracleMode::Sampled,
            ..OracleConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        };
        nonneg("eps0", self.eps0)?;
        nonneg("eps1", self.eps1)?;
        nonneg("trailing_eps", self.trailing_eps)?;
        if !(self.vi_tolerance > 0.0 && self.vi_tolerance.is_finite()) {
            return Err(Error::Parameter("vi_tolerance must be positive".into()));
        }
        if self.mode == OracleMode::Sampled {
            if self.trailing_n == 0 || self.max_episodes == 0 || self.rollouts == 0 {
                return Err(Error::Parameter(
                    "sampled mode needs trailing_n, max_episodes and rollouts >= 1".into(),
                ));
            }
            if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
                return Err(Error::Parameter("learning_rate must be in (0, 1]".into()));
            }
            if !(0.0..=1.0).contains(&self.exploration) {
                return Err(Error::Parameter("exploration must be in [0, 1]".into()));
            }
        }
        if self.horizon == Some(0) {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Guaranteed suboptimality of the greedy policy after value iteration
    /// stops with Bellman residual `tol`: `2γ·tol/(1−γ)`.
    pub fn vi_bound(&self, gamma: f64) -> f64 {
        2.0 * gamma * self.vi_tolerance / (1.0 - gamma)
    }

    /// The ε0 the algorithms may rely on.
    pub fn effective_eps0(&self, gamma: f64) -> f64 {
        match self.mode {
            OracleMode::Exact => self.eps0.max(self.vi_bound(gamma)),
            OracleMode::Sampled => self.eps0,
        }
    }

    /// The ε1 the algorithms may rely on.
    pub fn effective_eps1(&self) -> f64 {
        match self.mode {
            OracleMode::Exact => 0.0,
            OracleMode::Sampled => self.eps1,
        }
    }

    pub fn horizon_for(&self, mdp: &VectorMdp) -> usize {
        self.horizon.unwrap_or_else(|| mdp.default_horizon())
    }
}

/// An oracle's answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub policy: StationaryPolicy,
    /// Exact `R(π) = −λ·z̄(π)` in exact mode; the trailing mean episode return in sampled mode.
    pub value: f64,
    /// Positive response only: whether the value reached the `−ε` threshold.
    pub reached: bool,
    pub episodes: usize,
}

/// Mixes a base seed with a stream index (SplitMix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_lambda(mdp: &VectorMdp, lambda: &[f64]) -> Result<()> {
    check_dim("lambda", lambda.len(), mdp.dim())?;
    check_finite("lambda", lambda)?;
    if norm(lambda) > 1.0 + 1e-9 {
        return Err(Error::Parameter(format!(
            "lambda norm {} exceeds 1",
            norm(lambda)
        )));
    }
    Ok(())
}

/// Policy maximising `R(π)` for the scalar reward `r = −λ·z`, up to ε0.
pub fn best_response(
    mdp: &VectorMdp,
    lambda: &[f64],
    cfg: &OracleConfig,
    warm: Option<&StationaryPolicy>,
    seed: u64,
) -> Result<Response> {
    check_lambda(mdp, lambda)?;
    let reward = mdp.scalarized_reward(lambda)?;
    match cfg.mode {
        OracleMode::Exact => {
            let policy = value_iteration(mdp, &reward, cfg.vi_tolerance, warm)?;
            let value = -dot(lambda, &mdp.long_term_measurement(&policy)?);
            Ok(Response {
                policy,
                value,
                reached: true,
                episodes: 0,
            })
        }
        OracleMode::Sampled => {
            let run = q_learning(mdp, &reward, cfg, warm, seed, None);
            Ok(Response {
                policy: run.policy,
                value: run.trailing_mean,
                reached: true,
                episodes: run.episodes,
            })
        }
    }
}

/// Policy with `R(π) ≥ −ε` whenever some policy has `R ≥ 0`; `reached` is
/// false when the threshold was not met.
pub fn positive_response(
    mdp: &VectorMdp,
    lambda: &[f64],
    cfg: &OracleConfig,
    warm: Option<&StationaryPolicy>,
    seed: u64,
) -> Result<Response> {
    match cfg.mode {
        OracleMode::Exact => {
            let mut r = best_response(mdp, lambda, cfg, warm, seed)?;
            r.reached = r.value >= -cfg.effective_eps0(mdp.gamma());
            Ok(r)
        }
        OracleMode::Sampled => {
            check_lambda(mdp, lambda)?;
            let reward = mdp.scalarized_reward(lambda)?;
            let run = q_learning(mdp, &reward, cfg, warm, seed, Some(-cfg.trailing_eps));
            Ok(Response {
                policy: run.policy,
                value: run.trailing_mean,
                reached: run.reached,
                episodes: run.episodes,
            })
        }
    }
}

/// Value iteration until the sup-norm Bellman residual is at most `tol`, then
/// the greedy policy (lowest action index on ties).
pub fn value_iteration(
    mdp: &VectorMdp,
    reward: &[f64],
    tol: f64,
    warm: Option<&StationaryPolicy>,
) -> Result<StationaryPolicy> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    check_dim("reward table", reward.len(), ns * na)?;
    let mut v = match warm {
        Some(p) => mdp.policy_values(p, reward)?,
        None => vec![0.0; ns],
    };
    let gamma = mdp.gamma();
    let q_row = |v: &[f64], s: usize, q: &mut [f64]| {
        for (a, qa) in q.iter_mut().enumerate() {
            *qa = reward[s * na + a] + gamma * dot(mdp.transition_row(s, a), v);
        }
    };
    let mut q = vec![0.0; na];
    let mut next = vec![0.0; ns];
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            q_row(&v, s, &mut q);
            next[s] = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if !residual.is_finite() {
            return Err(Error::NonFinite("value iteration diverged".into()));
        }
        if residual <= tol {
            break;
        }
    }
    let actions: Vec<usize> = (0..ns)
        .map(|s| {
            q_row(&v, s, &mut q);
            argmax_first(&q)
        })
        .collect();
    StationaryPolicy::deterministic(&actions, na)
}

fn argmax_first(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

struct QRun {
    policy: StationaryPolicy,
    trailing_mean: f64,
    reached: bool,
    episodes: usize,
}

/// ε-greedy tabular Q-learning on truncated episodes. With `stop_at`, stops
/// once the trailing mean of the last `n` episode returns is at least that level.
fn q_learning(
    mdp: &VectorMdp,
    reward: &[f64],
    cfg: &OracleConfig,
    warm: Option<&StationaryPolicy>,
    seed: u64,
    stop_at: Option<f64>,
) -> QRun {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let horizon = cfg.horizon_for(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![0.0; ns * na];
    if let Some(w) = warm {
        for s in 0..ns {
            for a in 0..na {
                q[s * na + a] += WARM_BIAS * w.prob(s, a);
            }
        }
    }
    let n = cfg.trailing_n;
    let mut window = std::collections::VecDeque::with_capacity(n);
    let mut window_sum = 0.0;
    let mut reached = false;
    let mut episodes = 0;
    while episodes < cfg.max_episodes {
        let mut s = mdp.initial_state(&mut rng);
        let mut disc = 1.0;
        let mut ret = 0.0;
        for _ in 0..horizon {
            let a = if rng.gen::<f64>() < cfg.exploration {
                rng.gen_range(0..na)
            } else {
                argmax_first(&q[s * na..(s + 1) * na])
            };
            let r = reward[s * na + a];
            let s2 = mdp.step(s, a, &mut rng);
            let target = r + gamma
                * q[s2 * na..(s2 + 1) * na]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
            let cell = &mut q[s * na + a];
            *cell += cfg.learning_rate * (target - *cell);
            ret += disc * r;
            disc *= gamma;
            s = s2;
        }
        episodes += 1;
        if window.len() == n {
            window_sum -= window.pop_front().unwrap_or(0.0);
        }
        window.push_back(ret);
        window_sum += ret;
        if let Some(level) = stop_at {
            if window.len() == n && window_sum / n as f64 >= level {
                reached = true;
                break;
            }
        }
    }
    let actions: Vec<usize> = (0..ns)
        .map(|s| argmax_first(&q[s * na..(s + 1) * na]))
        .collect();
    let policy = StationaryPolicy::deterministic(&actions, na).expect("actions in range");
    let trailing_mean = if window.is_empty() {
        f64::NAN
    } else {
        window_sum / window.len() as f64
    };
    QRun {
        policy,
        trailing_mean,
        reached,
        episodes,
    }
}

/// Estimate of `z̄(π)` with its error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub z_hat: Vec<f64>,
    pub eps1: f64,
    pub rollouts: usize,
}

/// Exact mode: the linear solve. Sampled mode: the mean of `m` truncated
/// rollouts, with `ε1 = γ^H·B/(1−γ)·√d + 3·√(tr Σ / m)`.
pub fn estimate(
    mdp: &VectorMdp,
    policy: &StationaryPolicy,
    cfg: &OracleConfig,
    seed: u64,
) -> Result<Estimate> {
    match cfg.mode {
        OracleMode::Exact => Ok(Estimate {
            z_hat: mdp.long_term_measurement(policy)?,
            eps1: 0.0,
            rollouts: 0,
        }),
        OracleMode::Sampled => {
            check_dim("policy states", policy.num_states(), mdp.num_states())?;
            check_dim("policy actions", policy.num_actions(), mdp.num_actions())?;
            let m = cfg.rollouts;
            let d = mdp.dim();
            let h = cfg.horizon_for(mdp);
            let chunks = m.div_ceil(ROLLOUT_CHUNK);
            let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
                    let count = ROLLOUT_CHUNK.min(m - c * ROLLOUT_CHUNK);
                    let mut sum = vec![0.0; d];
                    let mut sumsq = vec![0.0; d];
                    let mut one = vec![0.0; d];
                    for _ in 0..count {
                        one.iter_mut().for_each(|v| *v = 0.0);
                        mdp.rollout_into(policy, h, &mut rng, &mut one);
                        for k in 0..d {
                            sum[k] += one[k];
                            sumsq[k] += one[k] * one[k];
                        }
                    }
                    (sum, sumsq)
                })
                .collect();
            let mut sum = vec![0.0; d];
            let mut sumsq = vec![0.0; d];
            for (s, q) in &partial {
                for k in 0..d {
                    sum[k] += s[k];
                    sumsq[k] += q[k];
                }
            }
            let mf = m as f64;
            let z_hat: Vec<f64> = sum.iter().map(|s| s / mf).collect();
            let trace: f64 = if m > 1 {
                (0..d)
                    .map(|k| ((sumsq[k] - mf * z_hat[k] * z_hat[k]) / (mf - 1.0)).max(0.0))
                    .sum()
            } else {
                0.0
            };
            let bias = mdp.gamma().powi(h as i32) * mdp.long_term_bound() * (d as f64).sqrt();
            let eps1 = bias + 3.0 * (trace / mf).sqrt();
            Ok(Estimate {
                z_hat,
                eps1,
                rollouts: m,
            })
        }
    }
}
