//! Tabular MDPs that emit a `d`-dimensional measurement vector per step.
//!
//! The long-term measurement of a stationary policy `π` is
//! `z̄(π) = E[Σ_i γ^i z_i | π]`, computed exactly from the discounted state
//! occupancy `d = β + γ P_πᵀ d`. Mixed policies are finite convex combinations
//! of stationary policies executed by sampling one component per episode, so
//! their long-term measurement is the weighted sum of the components'.

mod io;

pub use io::{parse_mdp, read_mdp_file, write_mdp, write_measurements_csv};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{check_dim, dot, norm, solve_dense};
use crate::{Error, Result};

const PROB_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-9;
/// Above this many states the occupancy solve switches to fixed-point iteration.
pub const DENSE_SOLVE_LIMIT: usize = 500;

/// One atom of a finite-support measurement distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOutcome {
    pub prob: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorMdp {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    initial_dist: Vec<f64>,
    /// `[s][a][s']`, row-major.
    transition: Vec<f64>,
    /// `[s][a][k]`, row-major.
    measurement_mean: Vec<f64>,
    /// Per `(s, a)`; sampled `z` is i.i.d. across steps given `(s, a)`.
    noise: Option<Vec<Vec<NoiseOutcome>>>,
    gamma: f64,
    bound: f64,
}

fn check_prob_vector(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMdp(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidMdp(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl VectorMdp {
    /// Builds an MDP from nested tables `transition[s][a][s']` and
    /// `measurements[s][a][k]`. When `bound` is `None` the tightest valid
    /// bound (largest measurement norm) is used.
    pub fn new(
        initial_dist: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        measurements: Vec<Vec<Vec<f64>>>,
        gamma: f64,
        bound: Option<f64>,
    ) -> Result<Self> {
        let num_states = initial_dist.len();
        if num_states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        check_dim("transition rows", transition.len(), num_states)?;
        check_dim("measurement rows", measurements.len(), num_states)?;
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        let dim = measurements[0].first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidMdp("measurement dimension is zero".into()));
        }
        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        let mut flat_z = Vec::with_capacity(num_states * num_actions * dim);
        for s in 0..num_states {
            check_dim("actions in transition", transition[s].len(), num_actions)?;
            check_dim(
                "actions in measurements",
                measurements[s].len(),
                num_actions,
            )?;
            for a in 0..num_actions {
                check_dim(
                    "next-state distribution",
                    transition[s][a].len(),
                    num_states,
                )?;
                check_dim("measurement", measurements[s][a].len(), dim)?;
                flat_p.extend_from_slice(&transition[s][a]);
                flat_z.extend_from_slice(&measurements[s][a]);
            }
        }
        let mut mdp = VectorMdp {
            num_states,
            num_actions,
            dim,
            initial_dist,
            transition: flat_p,
            measurement_mean: flat_z,
            noise: None,
            gamma,
            bound: 0.0,
        };
        mdp.bound = bound.unwrap_or_else(|| mdp.max_measurement_norm());
        mdp.validate()?;
        Ok(mdp)
    }

    /// Attaches finite-support measurement noise, one distribution per `(s, a)`
    /// in row-major order. Each distribution's mean must equal the stored mean.
    pub fn with_noise(mut self, noise: Vec<Vec<NoiseOutcome>>) -> Result<Self> {
        check_dim(
            "noise table",
            noise.len(),
            self.num_states * self.num_actions,
        )?;
        for (i, atoms) in noise.iter().enumerate() {
            if atoms.is_empty() {
                return Err(Error::InvalidMdp(format!("noise for pair {i} is empty")));
            }
            let probs: Vec<f64> = atoms.iter().map(|o| o.prob).collect();
            check_prob_vector(&format!("noise for pair {i}"), &probs)?;
            let mut mean = vec![0.0; self.dim];
            for o in atoms {
                check_dim("noise outcome", o.z.len(), self.dim)?;
                for (m, z) in mean.iter_mut().zip(&o.z) {
                    *m += o.prob * z;
                }
            }
            let stored = &self.measurement_mean[i * self.dim..(i + 1) * self.dim];
            if mean.iter().zip(stored).any(|(a, b)| (a - b).abs() > 1e-9) {
                return Err(Error::InvalidMdp(format!(
                    "noise mean for pair {i} disagrees with the measurement mean"
                )));
            }
        }
        self.noise = Some(noise);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidMdp(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        check_prob_vector("initial distribution", &self.initial_dist)?;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                check_prob_vector(&format!("P[{s}][{a}]"), self.transition_row(s, a))?;
                let z = self.measurement(s, a);
                if z.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidMdp(format!("z[{s}][{a}] is not finite")));
                }
            }
        }
        if !(self.bound.is_finite() && self.bound >= 0.0) {
            return Err(Error::InvalidMdp(
                "bound must be finite and nonnegative".into(),
            ));
        }
        let m = self.max_measurement_norm();
        if m > self.bound * (1.0 + BOUND_TOL) + BOUND_TOL {
            return Err(Error::InvalidMdp(format!(
                "measurement norm {m} exceeds bound {}",
                self.bound
            )));
        }
        Ok(())
    }

    /// Largest norm over all measurement means and noise atoms.
    pub fn max_measurement_norm(&self) -> f64 {
        let mut m = self
            .measurement_mean
            .chunks(self.dim)
            .map(norm)
            .fold(0.0, f64::max);
        if let Some(noise) = &self.noise {
            for atoms in noise {
                for o in atoms {
                    m = m.max(norm(&o.z));
                }
            }
        }
        m
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn bound(&self) -> f64 {
        self.bound
    }
    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
    pub fn noise(&self) -> Option<&[Vec<NoiseOutcome>]> {
        self.noise.as_deref()
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let off = (s * self.num_actions + a) * n;
        &self.transition[off..off + n]
    }

    #[inline]
    pub fn measurement(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.num_actions + a) * self.dim;
        &self.measurement_mean[off..off + self.dim]
    }

    /// `B / (1 - γ)`, the bound on any long-term measurement norm.
    pub fn long_term_bound(&self) -> f64 {
        self.bound / (1.0 - self.gamma)
    }

    /// Smallest horizon `H` with `γ^H · B/(1-γ) ≤ tol`.
    pub fn horizon_for(&self, tol: f64) -> usize {
        let scale = self.long_term_bound();
        if scale <= tol {
            return 1;
        }
        let h = ((tol / scale).ln() / self.gamma.ln()).ceil();
        (h as usize).max(1)
    }

    /// Default truncation horizon: `γ^H · B/(1-γ) ≤ 1e-3`.
    pub fn default_horizon(&self) -> usize {
        self.horizon_for(1e-3)
    }

    /// Scalar reward table `r(s, a) = -λ·z(s, a)`.
    pub fn scalarized_reward(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        check_dim("lambda", lambda.len(), self.dim)?;
        Ok(self
            .measurement_mean
            .chunks(self.dim)
            .map(|z| -dot(lambda, z))
            .collect())
    }

    /// Same MDP with a constant coordinate `value` appended to every
    /// measurement (and noise atom). The bound is updated to stay valid.
    pub fn augment_constant(&self, value: f64) -> VectorMdp {
        let dim = self.dim + 1;
        let measurement_mean = self
            .measurement_mean
            .chunks(self.dim)
            .flat_map(|z| z.iter().copied().chain(std::iter::once(value)))
            .collect();
        let noise = self.noise.as_ref().map(|n| {
            n.iter()
                .map(|atoms| {
                    atoms
                        .iter()
                        .map(|o| NoiseOutcome {
                            prob: o.prob,
                            z: o.z.iter().copied().chain(std::iter::once(value)).collect(),
                        })
                        .collect()
                })
                .collect()
        });
        VectorMdp {
            dim,
            measurement_mean,
            noise,
            bound: (self.bound * self.bound + value * value).sqrt(),
            ..self.clone()
        }
    }

    fn check_policy(&self, policy: &StationaryPolicy) -> Result<()> {
        check_dim("policy states", policy.num_states(), self.num_states)?;
        check_dim("policy actions", policy.num_actions(), self.num_actions)
    }

    /// Discounted state occupancy: the solution of `d = β + γ P_πᵀ d`.
    pub fn occupancy(&self, policy: &StationaryPolicy) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let n = self.num_states;
        if n < DENSE_SOLVE_LIMIT {
            let p_pi = self.policy_transition(policy);
            // (I - γ P_πᵀ) d = β
            let a = DMatrix::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                id - self.gamma * p_pi[j * n + i]
            });
            solve_dense(a, &self.initial_dist)
        } else {
            Ok(self.occupancy_fixed_point(policy))
        }
    }

    /// Fixed-point iteration for the occupancy; stops once the remaining
    /// error bound `γ/(1-γ)·‖Δ‖₁` falls below 1e-12.
    fn occupancy_fixed_point(&self, policy: &StationaryPolicy) -> Vec<f64> {
        let n = self.num_states;
        let g = self.gamma;
        let mut d = self.initial_dist.clone();
        let mut next = vec![0.0; n];
        loop {
            next.copy_from_slice(&self.initial_dist);
            for s in 0..n {
                for a in 0..self.num_actions {
                    let w = g * d[s] * policy.prob(s, a);
                    if w == 0.0 {
                        continue;
                    }
                    for (t, p) in self.transition_row(s, a).iter().enumerate() {
                        next[t] += w * p;
                    }
                }
            }
            let delta: f64 = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut d, &mut next);
            if g / (1.0 - g) * delta <= 1e-12 {
                return d;
            }
        }
    }

    /// Row-major `P_π[s][s'] = Σ_a π(a|s) P(s'|s,a)`.
    fn policy_transition(&self, policy: &StationaryPolicy) -> Vec<f64> {
        let n = self.num_states;
        let mut p = vec![0.0; n * n];
        for s in 0..n {
            for a in 0..self.num_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (t, q) in self.transition_row(s, a).iter().enumerate() {
                    p[s * n + t] += w * q;
                }
            }
        }
        p
    }

    /// Exact long-term measurement `z̄(π)`.
    pub fn long_term_measurement(&self, policy: &StationaryPolicy) -> Result<Vec<f64>> {
        let occ = self.occupancy(policy)?;
        let mut z = vec![0.0; self.dim];
        for (s, &ds) in occ.iter().enumerate() {
            for a in 0..self.num_actions {
                let w = ds * policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (zk, mk) in z.iter_mut().zip(self.measurement(s, a)) {
                    *zk += w * mk;
                }
            }
        }
        Ok(z)
    }

    /// `z̄(μ) = Σ_k w_k z̄(π_k)`.
    pub fn mixed_measurement(&self, mixed: &MixedPolicy) -> Result<Vec<f64>> {
        let mut z = vec![0.0; self.dim];
        for (policy, w) in mixed.components() {
            let zk = self.long_term_measurement(policy)?;
            for (a, b) in z.iter_mut().zip(&zk) {
                *a += w * b;
            }
        }
        Ok(z)
    }

    /// State values `V^π` of a scalar reward table `r[s][a]` (row-major),
    /// from `(I - γ P_π) V = r_π`.
    pub fn policy_values(&self, policy: &StationaryPolicy, reward: &[f64]) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        check_dim(
            "reward table",
            reward.len(),
            self.num_states * self.num_actions,
        )?;
        let n = self.num_states;
        let na = self.num_actions;
        let r_pi: Vec<f64> = (0..n)
            .map(|s| {
                (0..na)
                    .map(|a| policy.prob(s, a) * reward[s * na + a])
                    .sum()
            })
            .collect();
        if n < DENSE_SOLVE_LIMIT {
            let p_pi = self.policy_transition(policy);
            let a = DMatrix::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                id - self.gamma * p_pi[i * n + j]
            });
            solve_dense(a, &r_pi)
        } else {
            let mut v = r_pi.clone();
            loop {
                let next: Vec<f64> = (0..n)
                    .map(|s| {
                        let ev: f64 = (0..na)
                            .map(|a| policy.prob(s, a) * dot(self.transition_row(s, a), &v))
                            .sum();
                        r_pi[s] + self.gamma * ev
                    })
                    .collect();
                let delta = next
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                v = next;
                if self.gamma / (1.0 - self.gamma) * delta <= 1e-12 {
                    return Ok(v);
                }
            }
        }
    }

    /// Expected discounted return `Σ_s β(s) V^π(s)` of a scalar reward table.
    pub fn policy_return(&self, policy: &StationaryPolicy, reward: &[f64]) -> Result<f64> {
        Ok(dot(
            &self.policy_values(policy, reward)?,
            &self.initial_dist,
        ))
    }

    fn sample_measurement<R: Rng>(&self, s: usize, a: usize, rng: &mut R, out: &mut [f64]) {
        match &self.noise {
            Some(noise) => {
                let atoms = &noise[s * self.num_actions + a];
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = atoms.len() - 1;
                for (i, o) in atoms.iter().enumerate() {
                    acc += o.prob;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                out.copy_from_slice(&atoms[pick].z);
            }
            None => out.copy_from_slice(self.measurement(s, a)),
        }
    }

    pub(crate) fn step<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(self.transition_row(s, a), rng.gen())
    }

    pub(crate) fn initial_state<R: Rng>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial_dist, rng.gen())
    }

    /// Discounted measurement sum of one rollout of length `horizon`, added
    /// into `acc`.
    pub(crate) fn rollout_into<R: Rng>(
        &self,
        policy: &StationaryPolicy,
        horizon: usize,
        rng: &mut R,
        acc: &mut [f64],
    ) {
        let mut z = vec![0.0; self.dim];
        let mut s = self.initial_state(rng);
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy.sample_action(s, rng);
            self.sample_measurement(s, a, rng, &mut z);
            for (x, zk) in acc.iter_mut().zip(&z) {
                *x += disc * zk;
            }
            s = self.step(s, a, rng);
            disc *= self.gamma;
        }
    }

    /// Samples one trajectory: `s_0 ~ β`, `a_i ~ π(·|s_i)`, `z_i ~ P_z`,
    /// `s_{i+1} ~ P_s`.
    pub fn sample_trajectory(
        &self,
        policy: &StationaryPolicy,
        horizon: usize,
        seed: u64,
    ) -> Result<Trajectory> {
        self.check_policy(policy)?;
        if horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut steps = Vec::with_capacity(horizon);
        let mut discounted_sum = vec![0.0; self.dim];
        let mut s = self.initial_state(&mut rng);
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy.sample_action(s, &mut rng);
            let mut z = vec![0.0; self.dim];
            self.sample_measurement(s, a, &mut rng, &mut z);
            for (x, zk) in discounted_sum.iter_mut().zip(&z) {
                *x += disc * zk;
            }
            steps.push(Step {
                state: s,
                action: a,
                measurement: z,
            });
            s = self.step(s, a, &mut rng);
            disc *= self.gamma;
        }
        Ok(Trajectory {
            steps,
            horizon,
            discounted_sum,
        })
    }
}

/// Inverse-CDF draw from a probability vector given `u ∈ [0, 1)`.
#[inline]
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum: take the last positive entry.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub measurement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub horizon: usize,
    pub discounted_sum: Vec<f64>,
}

/// Per-state action distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        if num_states == 0 {
            return Err(Error::InvalidPolicy("no states".into()));
        }
        let num_actions = rows[0].len();
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.iter().enumerate() {
            check_dim("policy row", row.len(), num_actions)?;
            check_prob_vector(&format!("π[{s}]"), row)
                .map_err(|e| Error::InvalidPolicy(e.to_string()))?;
            probs.extend_from_slice(row);
        }
        Ok(StationaryPolicy {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if actions.is_empty() || num_actions == 0 {
            return Err(Error::InvalidPolicy("empty policy".into()));
        }
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(StationaryPolicy {
            num_states: actions.len(),
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        StationaryPolicy {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// The action table if every row is a point mass.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        (0..self.num_states)
            .map(|s| self.row(s).iter().position(|&p| p == 1.0))
            .collect()
    }

    pub(crate) fn sample_action<R: Rng>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.row(s), rng.gen())
    }
}

/// Finite convex combination of stationary policies.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPolicy {
    components: Vec<(StationaryPolicy, f64)>,
}

impl MixedPolicy {
    pub fn new(components: Vec<(StationaryPolicy, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidPolicy(
                "mixed policy needs a component".into(),
            ));
        }
        if components.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(Error::InvalidPolicy("negative mixture weight".into()));
        }
        let total: f64 = components.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidPolicy(format!(
                "mixture weights sum to {total}"
            )));
        }
        let (s, a) = (components[0].0.num_states, components[0].0.num_actions);
        if components
            .iter()
            .any(|(p, _)| p.num_states != s || p.num_actions != a)
        {
            return Err(Error::Dimension(
                "mixture components differ in shape".into(),
            ));
        }
        Ok(MixedPolicy { components })
    }

    pub fn single(policy: StationaryPolicy) -> Self {
        MixedPolicy {
            components: vec![(policy, 1.0)],
        }
    }

    /// Uniform mixture over `policies`, merging identical action tables and
    /// summing their weights. Components keep first-appearance order.
    pub fn uniform_dedup<'a, I>(policies: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a StationaryPolicy>,
    {
        let mut counts: Vec<(StationaryPolicy, usize)> = Vec::new();
        let mut total = 0usize;
        for p in policies {
            total += 1;
            match counts.iter_mut().find(|(q, _)| q == p) {
                Some((_, c)) => *c += 1,
                None => counts.push((p.clone(), 1)),
            }
        }
        if total == 0 {
            return Err(Error::InvalidPolicy(
                "mixed policy needs a component".into(),
            ));
        }
        let components = counts
            .into_iter()
            .map(|(p, c)| (p, c as f64 / total as f64))
            .collect();
        MixedPolicy::new(components)
    }

    pub fn components(&self) -> impl Iterator<Item = (&StationaryPolicy, f64)> {
        self.components.iter().map(|(p, w)| (p, *w))
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Draws the component that governs one episode.
    pub fn sample_component<R: Rng>(&self, rng: &mut R) -> &StationaryPolicy {
        let w: Vec<f64> = self.components.iter().map(|(_, w)| *w).collect();
        &self.components[sample_index(&w, rng.gen())].0
    }
}
