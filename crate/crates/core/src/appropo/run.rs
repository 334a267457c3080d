//! The repeated game between the OGD λ-player and an RL oracle, for cone
//! targets directly and for compact targets through cone lifting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convex::{LambdaSet, LiftedCone, TargetSet};
use crate::learner::OgdState;
use crate::linalg::{check_dim, dot};
use crate::mdp::{MixedPolicy, VectorMdp};
use crate::oracles::{
    best_response, derive_seed, estimate, positive_response, CacheEntry, Lookup, OracleConfig,
    OracleMode, PolicyCache,
};
use crate::{Error, Result};

use super::bounds::{default_eta, distance_bound};
use super::trace::{RunTrace, TraceRecord};

const CACHE_INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub iterations: usize,
    /// Overrides the default step size.
    pub eta: Option<f64>,
    pub use_cache: bool,
    /// Random deterministic policies placed in an empty cache before the run.
    pub cache_init: usize,
    /// Stop once the running distance falls to this level.
    pub stop_at_distance: Option<f64>,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            iterations: 1000,
            eta: None,
            use_cache: true,
            cache_init: 5,
            stop_at_distance: None,
            seed: 0,
        }
    }
}

impl RunOptions {
    pub fn with_iterations(iterations: usize) -> Self {
        RunOptions {
            iterations,
            ..RunOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("T must be at least 1".into()));
        }
        if let Some(e) = self.eta {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Parameter(format!("eta must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Best-response oracle; minimises the distance to the target.
    Distance,
    /// Positive-response oracle with the infeasibility test.
    Feasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityOutcome {
    Feasible {
        mixed: MixedPolicy,
        /// Exact `dist(z̄(μ̄), C)`.
        distance: f64,
    },
    Infeasible {
        iteration: usize,
        /// The separating direction `λ_t`.
        witness: Vec<f64>,
        loss: f64,
        threshold: f64,
    },
    EmpiricallyInfeasible {
        iteration: usize,
        lambda: Vec<f64>,
        trailing_mean: f64,
        episodes: usize,
    },
}

impl FeasibilityOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            FeasibilityOutcome::Feasible { .. } => "feasible",
            FeasibilityOutcome::Infeasible { .. } => "infeasible",
            FeasibilityOutcome::EmpiricallyInfeasible { .. } => "empirically_infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftInfo {
    pub kappa: f64,
    pub delta: f64,
    /// `dist(z̄(μ̄) ⊕ κ, C̃)`; `None` when the run ended without a mixture.
    pub lifted_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub variant: Variant,
    pub outcome: FeasibilityOutcome,
    pub trace: RunTrace,
    pub eta: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// Guarantee on the distance beyond the best achievable one.
    pub bound_slack: f64,
    pub lift: Option<LiftInfo>,
}

impl RunReport {
    pub fn mixed(&self) -> Option<&MixedPolicy> {
        match &self.outcome {
            FeasibilityOutcome::Feasible { mixed, .. } => Some(mixed),
            _ => None,
        }
    }

    pub fn distance(&self) -> Option<f64> {
        match &self.outcome {
            FeasibilityOutcome::Feasible { distance, .. } => Some(*distance),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.outcome, FeasibilityOutcome::Feasible { .. })
    }
}

struct Problem<'a> {
    base: &'a VectorMdp,
    work: VectorMdp,
    cone: TargetSet,
    report: &'a TargetSet,
    lift: Option<(f64, f64)>,
}

/// Distance minimisation to a cone target with a best-response oracle.
pub fn run_appropo(
    mdp: &VectorMdp,
    cone: &TargetSet,
    cfg: &OracleConfig,
    opts: &RunOptions,
) -> Result<RunReport> {
    run_cone(
        mdp,
        cone,
        cfg,
        opts,
        Variant::Distance,
        &mut PolicyCache::new(),
    )
}

/// Feasibility search for a cone target with a positive-response oracle.
pub fn run_feasibility(
    mdp: &VectorMdp,
    cone: &TargetSet,
    cfg: &OracleConfig,
    opts: &RunOptions,
) -> Result<RunReport> {
    run_cone(
        mdp,
        cone,
        cfg,
        opts,
        Variant::Feasibility,
        &mut PolicyCache::new(),
    )
}

pub fn run_cone(
    mdp: &VectorMdp,
    cone: &TargetSet,
    cfg: &OracleConfig,
    opts: &RunOptions,
    variant: Variant,
    cache: &mut PolicyCache,
) -> Result<RunReport> {
    if !cone.is_cone() {
        return Err(Error::Unsupported {
            op: "cone run (use run_general)",
            kind: cone.kind_name(),
        });
    }
    check_dim("target dimension", cone.dim(), mdp.dim())?;
    let p = Problem {
        base: mdp,
        work: mdp.clone(),
        cone: cone.clone(),
        report: cone,
        lift: None,
    };
    run_core(&p, cfg, opts, variant, cache)
}

/// Compact target: lift to `cone(C × {κ})` with `κ = max‖x‖/√(2δ)`, append
/// the constant measurement `(1−γ)κ`, and run the chosen variant.
pub fn run_general(
    mdp: &VectorMdp,
    compact: &TargetSet,
    delta: f64,
    cfg: &OracleConfig,
    opts: &RunOptions,
    variant: Variant,
) -> Result<RunReport> {
    let lifted = LiftedCone::new(compact.clone(), delta)?;
    run_lifted(mdp, &lifted, cfg, opts, variant, &mut PolicyCache::new())
}

pub fn run_lifted(
    mdp: &VectorMdp,
    lifted: &LiftedCone,
    cfg: &OracleConfig,
    opts: &RunOptions,
    variant: Variant,
    cache: &mut PolicyCache,
) -> Result<RunReport> {
    check_dim("target dimension", lifted.base().dim(), mdp.dim())?;
    let kappa = lifted.kappa();
    let p = Problem {
        base: mdp,
        work: mdp.augment_constant((1.0 - mdp.gamma()) * kappa),
        cone: TargetSet::Lifted(lifted.clone()),
        report: lifted.base(),
        lift: Some((kappa, lifted.delta())),
    };
    run_core(&p, cfg, opts, variant, cache)
}

fn run_core(
    p: &Problem<'_>,
    cfg: &OracleConfig,
    opts: &RunOptions,
    variant: Variant,
    cache: &mut PolicyCache,
) -> Result<RunReport> {
    cfg.validate()?;
    opts.validate()?;
    let started = Instant::now();
    let mdp = p.base;
    let gamma = mdp.gamma();
    let kappa = p.lift.map(|(k, _)| k);
    let sampled = cfg.mode == OracleMode::Sampled;
    let eps0 = cfg.effective_eps0(gamma);
    let mut eps1 = cfg.effective_eps1();
    let t_max = opts.iterations;
    let eta = opts
        .eta
        .unwrap_or_else(|| default_eta(mdp.bound(), gamma, eps1, t_max, kappa));

    let lambda_set = LambdaSet::new(p.cone.clone())?;
    let mut ogd = OgdState::at_start(&lambda_set, eta)?;
    if opts.use_cache && cache.is_empty() && opts.cache_init > 0 {
        cache.init_random(
            mdp,
            opts.cache_init,
            cfg,
            derive_seed(opts.seed, CACHE_INIT_STREAM),
        )?;
    }
    let cache_threshold = match (cfg.mode, variant) {
        (OracleMode::Exact, _) => eps0,
        (OracleMode::Sampled, Variant::Feasibility) => cfg.trailing_eps,
        (OracleMode::Sampled, Variant::Distance) => cfg.eps0,
    };
    let to_work = |z: &[f64]| -> Vec<f64> {
        let mut w = z.to_vec();
        if let Some(k) = kappa {
            w.push(k);
        }
        w
    };

    let (hits0, misses0) = (cache.hits(), cache.misses());
    let mut trace = RunTrace::default();
    let mut played: Vec<usize> = Vec::with_capacity(t_max);
    let mut sum = vec![0.0; mdp.dim()];
    let mut early: Option<FeasibilityOutcome> = None;

    for t in 1..=t_max {
        let lambda = ogd.current().to_vec();
        let seed_t = derive_seed(opts.seed, t as u64);

        let looked_up = if opts.use_cache {
            let score = |e: &CacheEntry| -dot(&lambda, &to_work(&e.z_hat));
            match cache.lookup_by(score, cache_threshold) {
                Lookup::Hit(e) => Ok((e.id, e.z_hat.clone(), e.eps1)),
                Lookup::Miss(w) => Err(w.map(|e| e.policy.clone())),
            }
        } else {
            Err(None)
        };
        let (id, z_hat, e1, hit, not_reached) = match looked_up {
            Ok((id, z, e1)) => (id, z, e1, true, None),
            Err(warm) => {
                let resp = match variant {
                    Variant::Distance => {
                        best_response(&p.work, &lambda, cfg, warm.as_ref(), seed_t)?
                    }
                    Variant::Feasibility => {
                        positive_response(&p.work, &lambda, cfg, warm.as_ref(), seed_t)?
                    }
                };
                trace.oracle_calls += 1;
                trace.episodes += resp.episodes;
                let est = estimate(mdp, &resp.policy, cfg, derive_seed(seed_t, 1))?;
                let flag = (!resp.reached).then_some((resp.value, resp.episodes));
                let id = cache.insert(
                    resp.policy,
                    est.z_hat.clone(),
                    est.eps1,
                    Some(t),
                    lambda.clone(),
                );
                (id, est.z_hat, est.eps1, false, flag)
            }
        };
        if sampled {
            eps1 = eps1.max(e1);
        }

        let z_work = to_work(&z_hat);
        let loss = -dot(&lambda, &z_work);
        for (s, z) in sum.iter_mut().zip(&z_hat) {
            *s += z;
        }
        let running_mean: Vec<f64> = sum.iter().map(|s| s / t as f64).collect();
        let running_distance = p.report.distance(&running_mean)?;
        trace.records.push(TraceRecord {
            t,
            lambda: lambda.clone(),
            policy_id: id,
            z_hat,
            loss,
            running_mean,
            running_distance,
            cache_hit: hit,
        });
        played.push(id);

        if variant == Variant::Feasibility {
            let threshold = eps0 + if sampled { cfg.eps1.max(e1) } else { 0.0 };
            if loss < -threshold {
                early = Some(FeasibilityOutcome::Infeasible {
                    iteration: t,
                    witness: lambda,
                    loss,
                    threshold,
                });
                break;
            }
            if let (true, Some((mean, episodes))) = (sampled, not_reached) {
                early = Some(FeasibilityOutcome::EmpiricallyInfeasible {
                    iteration: t,
                    lambda,
                    trailing_mean: mean,
                    episodes,
                });
                break;
            }
        }

        let grad: Vec<f64> = z_work.iter().map(|z| -z).collect();
        ogd.ogd_step(&grad, &lambda_set)?;
        if opts.stop_at_distance.is_some_and(|s| running_distance <= s) {
            break;
        }
    }

    trace.cache_hits = cache.hits() - hits0;
    trace.cache_misses = cache.misses() - misses0;
    let t_run = trace.len();
    let bound_slack = distance_bound(mdp.bound(), gamma, eps0, eps1, t_run, p.lift)?;
    let mut lift = p.lift.map(|(kappa, delta)| LiftInfo {
        kappa,
        delta,
        lifted_distance: None,
    });

    let outcome = match early {
        Some(o) => o,
        None => {
            let mixed =
                MixedPolicy::uniform_dedup(played.iter().map(|id| &cache.entries()[*id].policy))?;
            let zbar = mdp.mixed_measurement(&mixed)?;
            let distance = p.report.distance(&zbar)?;
            if let Some(l) = lift.as_mut() {
                l.lifted_distance = Some(p.cone.distance(&to_work(&zbar))?);
            }
            FeasibilityOutcome::Feasible { mixed, distance }
        }
    };
    trace.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(RunReport {
        variant,
        outcome,
        trace,
        eta,
        eps0,
        eps1,
        bound_slack,
        lift,
    })
}
