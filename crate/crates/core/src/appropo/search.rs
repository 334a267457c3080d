//! Reward maximisation under constraints by bisection on a reward threshold,
//! reusing one policy cache across all bisection steps.

use crate::convex::{BoxSet, Halfspace, LiftedCone, Polytope, TargetSet};
use crate::mdp::{MixedPolicy, VectorMdp};
use crate::oracles::{derive_seed, OracleConfig, PolicyCache};
use crate::{Error, Result};

use super::run::{run_lifted, RunOptions, RunReport, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct MaximizeConfig {
    pub reward_coord: usize,
    pub lo: f64,
    pub hi: f64,
    /// Number of bisection steps.
    pub steps: usize,
    pub delta: f64,
    /// Explicit lifting constant instead of the one implied by `delta`.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub threshold: f64,
    pub feasible: bool,
    /// `false` when the constraint set itself was empty at this threshold.
    pub ran: bool,
    pub oracle_calls: usize,
    pub cache_hits: usize,
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaximizeOutcome {
    Found {
        threshold: f64,
        mixed: MixedPolicy,
    },
    /// Even the floor threshold `lo` was not found feasible.
    InfeasibleAtFloor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximizeResult {
    pub outcome: MaximizeOutcome,
    pub steps: Vec<SearchStep>,
    pub oracle_calls: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

impl MaximizeResult {
    pub fn threshold(&self) -> Option<f64> {
        match &self.outcome {
            MaximizeOutcome::Found { threshold, .. } => Some(*threshold),
            MaximizeOutcome::InfeasibleAtFloor => None,
        }
    }
}

fn with_floor(base: &TargetSet, coord: usize, b: f64) -> Result<Option<TargetSet>> {
    let (bounds, mut hs): (BoxSet, Vec<Halfspace>) = match base {
        TargetSet::Box(bx) => (bx.clone(), Vec::new()),
        TargetSet::Polytope(p) => (p.bounds().clone(), p.halfspaces().to_vec()),
        other => {
            return Err(Error::Unsupported {
                op: "maximize_reward",
                kind: other.kind_name(),
            })
        }
    };
    let mut normal = vec![0.0; bounds.dim()];
    normal[coord] = -1.0;
    hs.push(Halfspace::new(normal, -b)?);
    match Polytope::new(bounds, hs) {
        Ok(p) => Ok(Some(TargetSet::Polytope(p))),
        Err(Error::InvalidSet(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Bisects on `b` in `[lo, hi]`: each step runs the lifted feasibility
/// variant on `base ∩ {z_reward ≥ b}`. Returns the largest threshold found
/// feasible. With zero steps only `lo` is tried; `lo` is also tried when no
/// midpoint was feasible.
pub fn maximize_reward(
    mdp: &VectorMdp,
    base: &TargetSet,
    mc: &MaximizeConfig,
    cfg: &OracleConfig,
    opts: &RunOptions,
) -> Result<MaximizeResult> {
    maximize_reward_with_cache(mdp, base, mc, cfg, opts, &mut PolicyCache::new())
}

/// As [`maximize_reward`], with a caller-owned cache.
pub fn maximize_reward_with_cache(
    mdp: &VectorMdp,
    base: &TargetSet,
    mc: &MaximizeConfig,
    cfg: &OracleConfig,
    opts: &RunOptions,
    cache: &mut PolicyCache,
) -> Result<MaximizeResult> {
    if !(mc.lo <= mc.hi) || !mc.lo.is_finite() || !mc.hi.is_finite() {
        return Err(Error::Parameter(format!(
            "need lo <= hi, got [{}, {}]",
            mc.lo, mc.hi
        )));
    }
    if mc.reward_coord >= mdp.dim() {
        return Err(Error::Dimension(format!(
            "reward coordinate {} out of range {}",
            mc.reward_coord,
            mdp.dim()
        )));
    }
    let (hits0, misses0) = (cache.hits(), cache.misses());
    let mut steps = Vec::new();
    let mut best: Option<(f64, MixedPolicy)> = None;

    let attempt = |b: f64,
                   k: u64,
                   cache: &mut PolicyCache,
                   steps: &mut Vec<SearchStep>|
     -> Result<Option<MixedPolicy>> {
        let Some(target) = with_floor(base, mc.reward_coord, b)? else {
            steps.push(SearchStep {
                threshold: b,
                feasible: false,
                ran: false,
                oracle_calls: 0,
                cache_hits: 0,
                report: None,
            });
            return Ok(None);
        };
        let lifted = match mc.kappa {
            Some(kappa) => LiftedCone::with_kappa(target, kappa)?,
            None => LiftedCone::new(target, mc.delta)?,
        };
        let step_opts = RunOptions {
            seed: derive_seed(opts.seed, k),
            ..opts.clone()
        };
        let report = run_lifted(mdp, &lifted, cfg, &step_opts, Variant::Feasibility, cache)?;
        let mixed = report.mixed().cloned();
        steps.push(SearchStep {
            threshold: b,
            feasible: mixed.is_some(),
            ran: true,
            oracle_calls: report.trace.oracle_calls,
            cache_hits: report.trace.cache_hits,
            report: Some(report),
        });
        Ok(mixed)
    };

    let (mut a, mut c) = (mc.lo, mc.hi);
    for k in 0..mc.steps {
        let mid = 0.5 * (a + c);
        match attempt(mid, k as u64, cache, &mut steps)? {
            Some(m) => {
                best = Some((mid, m));
                a = mid;
            }
            None => c = mid,
        }
    }
    if best.is_none() {
        if let Some(m) = attempt(mc.lo, mc.steps as u64, cache, &mut steps)? {
            best = Some((mc.lo, m));
        }
    }
    let outcome = match best {
        Some((threshold, mixed)) => MaximizeOutcome::Found { threshold, mixed },
        None => MaximizeOutcome::InfeasibleAtFloor,
    };
    Ok(MaximizeResult {
        outcome,
        oracle_calls: steps.iter().map(|s| s.oracle_calls).sum(),
        cache_hits: cache.hits() - hits0,
        cache_misses: cache.misses() - misses0,
        steps,
    })
}
