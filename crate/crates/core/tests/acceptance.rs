//! Acceptance suite. Every criterion prints one PASS/FAIL line with its
//! runtime and budget; the process exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use appropo::appropo::{
    maximize_reward, run_appropo, run_feasibility, run_general, solve_game, FeasibilityOutcome,
    GameConfig, GameSet, MaximizeConfig, RunOptions, Variant,
};
use appropo::convex::{BoxSet, GeneratorCone, LambdaSet, LiftedCone, TargetSet};
use appropo::env::{gridworld, random_mdp, REWARD_COORD, UNSAFE_COORD};
use appropo::learner::{ogd_eta, Domain, OgdState, Simplex};
use appropo::mdp::{StationaryPolicy, VectorMdp};
use appropo::oracles::OracleConfig;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn lib<T>(r: appropo::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const GAMMA: f64 = 0.9;
/// Default value-iteration residual of the exact oracle.
const VI_TOL: f64 = 1e-8;

fn vi_eps0() -> f64 {
    2.0 * GAMMA * VI_TOL / (1.0 - GAMMA)
}

fn matvec(m: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, u)).collect()
}

/// Farthest distance from the projection of the origin to a box corner.
fn box_start_radius(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| {
            let c = 0f64.clamp(*l, *h);
            (c - l).abs().max((h - c).abs()).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn corners(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    (0..1usize << lo.len())
        .map(|mask| {
            (0..lo.len())
                .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                .collect()
        })
        .collect()
}

fn bilinear_games() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb111);
    let t = 2000;
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..20 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let (llo, lhi) = random_box(&mut rng, n);
        let (ulo, uhi) = random_box(&mut rng, m);
        let payoff: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut rng, m, -2.0, 2.0)).collect();
        let cfg = GameConfig {
            payoff: payoff.clone(),
            lambda_set: GameSet::Box(lib(BoxSet::new(llo.clone(), lhi.clone()))?),
            u_set: GameSet::Box(lib(BoxSet::new(ulo.clone(), uhi.clone()))?),
            rounds: t,
        };
        let sol = lib(solve_game(&cfg))?;
        ensure!(sol.rounds.len() == t, "game {k}: {} rounds", sol.rounds.len());

        let mut cum = 0.0;
        let mut gsum = vec![0.0; n];
        let mut lam_bar = vec![0.0; n];
        let mut u_bar = vec![0.0; m];
        for r in &sol.rounds {
            let mu = matvec(&payoff, &r.u);
            cum -= dot(&r.lambda, &mu);
            for i in 0..n {
                gsum[i] -= mu[i];
                lam_bar[i] += r.lambda[i] / t as f64;
            }
            for j in 0..m {
                u_bar[j] += r.u[j] / t as f64;
            }
        }
        let regret = cum - box_min(&gsum, &llo, &lhi);
        let delta = regret / t as f64;
        let v = bilinear_value(&payoff, &llo, &lhi, &ulo, &uhi);
        let mt_lam: Vec<f64> = (0..m).map(|j| (0..n).map(|i| payoff[i][j] * lam_bar[i]).sum()).collect();
        let lower = box_min(&mt_lam, &ulo, &uhi);
        let neg_mu: Vec<f64> = matvec(&payoff, &u_bar).iter().map(|x| -x).collect();
        let upper = -box_min(&neg_mu, &llo, &lhi);
        ensure!(
            lower >= v - delta - 1e-9,
            "game {k}: min_u g(λ̄,u) = {lower} < v − δ = {} (v = {v}, δ = {delta})",
            v - delta
        );
        ensure!(
            upper <= v + delta + 1e-9,
            "game {k}: max_λ g(λ,ū) = {upper} > v + δ = {}",
            v + delta
        );
        worst_gap = worst_gap.max((v - delta - lower).max(upper - v - delta));

        let d = box_start_radius(&llo, &lhi);
        let g = corners(&ulo, &uhi)
            .iter()
            .map(|u| norm(&matvec(&payoff, u)))
            .fold(0.0, f64::max);
        let bound = d * g * (t as f64).sqrt();
        ensure!(regret <= bound, "game {k}: regret {regret} > DG√T = {bound}");
        let c = &sol.certificate;
        ensure!(
            (c.realized_regret - regret).abs() <= 1e-9 * regret.abs().max(1.0),
            "game {k}: reported regret {} vs recomputed {regret}",
            c.realized_regret
        );
        ensure!(c.lower_ok && c.upper_ok, "game {k}: certificate flags not set");
        ensure!(
            (c.value - v).abs() <= 1e-6,
            "game {k}: library value {} vs conic {v}",
            c.value
        );
        worst_ratio = worst_ratio.max(regret / bound);
    }
    Ok(format!(
        "worst gap excess {worst_gap:.2e}, worst regret/DG√T {worst_ratio:.3}"
    ))
}

fn random_generators(rng: &mut ChaCha8Rng, d: usize, count: std::ops::RangeInclusive<usize>) -> Vec<Vec<f64>> {
    let k = rng.gen_range(count);
    (0..k).map(|_| uniform_vec(rng, d, -1.0, 1.0)).collect()
}

/// Random dense MDP whose measurements lie in `[0.1, 1]^d`.
fn positive_mdp(rng: &mut ChaCha8Rng, ns: usize, na: usize, d: usize) -> VectorMdp {
    let mut dist = |n: usize| {
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let beta = dist(ns);
    let p = (0..ns).map(|_| (0..na).map(|_| dist(ns)).collect()).collect();
    let z = (0..ns)
        .map(|_| (0..na).map(|_| uniform_vec(rng, d, 0.1, 1.0)).collect())
        .collect();
    VectorMdp::new(beta, p, z, GAMMA, None).unwrap()
}

fn distance_runs() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd157);
    let t = 2000;
    let mut min_margin = f64::INFINITY;
    let mut positive = 0;
    for k in 0..10 {
        let (ns, na, d) = (rng.gen_range(5..=20), rng.gen_range(2..=4), rng.gen_range(2..=4));
        let (mdp, gens) = if k % 2 == 0 {
            let mdp = positive_mdp(&mut rng, ns, na, d);
            let gens = (0..rng.gen_range(1..=d))
                .map(|_| uniform_vec(&mut rng, d, -1.0, 0.3))
                .collect();
            (mdp, gens)
        } else {
            let mdp = lib(random_mdp(rng.gen(), ns, na, d, GAMMA))?;
            let gens = random_generators(&mut rng, d, 1..=d);
            (mdp, gens)
        };
        let cone: TargetSet = lib(GeneratorCone::new(d, gens.clone()))?.into();
        let opts = RunOptions {
            iterations: t,
            seed: k,
            ..RunOptions::default()
        };
        let rep = lib(run_appropo(&mdp, &cone, &OracleConfig::exact(), &opts))?;
        let mixed = rep.mixed().ok_or("distance run ended without a mixture")?;
        let zbar = mixture_zbar(&mdp, mixed);
        let dist = set_distance(&Target::Cone(gens.clone()), &zbar);
        let reported = rep.distance().unwrap();
        ensure!(
            (dist - reported).abs() <= 1e-6,
            "mdp {k}: reported distance {reported} vs conic {dist}"
        );
        let min = min_distance(&mdp, &Target::Cone(gens));
        let b = measurement_bound(&mdp);
        let rhs = min + b / (1.0 - GAMMA) / (t as f64).sqrt() + vi_eps0();
        ensure!(
            dist <= rhs,
            "mdp {k} (|S|={ns}, |A|={na}, d={d}): distance {dist} > {rhs} (min-dist {min})"
        );
        if min > 1e-6 {
            positive += 1;
        }
        min_margin = min_margin.min(rhs - dist);
    }
    Ok(format!(
        "{positive}/10 with positive min-dist, smallest margin {min_margin:.3e}"
    ))
}

fn feasibility_runs() -> Check {
    let one = VectorMdp::new(vec![1.0], vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], GAMMA, None);
    let one = lib(one)?;
    let cfg = OracleConfig::exact();
    let neg: TargetSet = GeneratorCone::nonpositive_orthant(1).into();
    let rep = lib(run_feasibility(&one, &neg, &cfg, &RunOptions::with_iterations(50)))?;
    let detected = match rep.outcome {
        FeasibilityOutcome::Infeasible {
            iteration,
            witness,
            loss,
            threshold,
        } => {
            ensure!(iteration <= 50, "detected only at iteration {iteration}");
            ensure!(
                loss < -(rep.eps0 + rep.eps1) && threshold >= rep.eps0 + rep.eps1,
                "witness loss {loss} not below −(ε0+ε1)"
            );
            ensure!(
                witness[0] > 0.0 && witness[0] <= 1.0,
                "witness {witness:?} outside Λ"
            );
            iteration
        }
        other => return Err(format!("1-d construction reported {}", other.label())),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0xfea5);
    let t = 1000;
    let mut min_margin = f64::INFINITY;
    for k in 0..10 {
        let (ns, na, d) = (rng.gen_range(3..=12), rng.gen_range(2..=4), rng.gen_range(1..=3));
        let mdp = lib(random_mdp(rng.gen(), ns, na, d, GAMMA))?;
        let pi0 = random_policy(&mut rng, ns, na);
        let mut gens = vec![exact_zbar(&mdp, &pi0)];
        gens.extend(random_generators(&mut rng, d, k % 3..=k % 3));
        let cone: TargetSet = lib(GeneratorCone::new(d, gens.clone()))?.into();
        let opts = RunOptions {
            iterations: t,
            seed: 100 + k as u64,
            ..RunOptions::default()
        };
        let rep = lib(run_feasibility(&mdp, &cone, &cfg, &opts))?;
        let threshold = vi_eps0();
        for rec in &rep.trace.records {
            ensure!(
                rec.loss >= -threshold,
                "feasible instance {k}: loss {} below −ε0 at t = {}",
                rec.loss,
                rec.t
            );
        }
        let Some(mixed) = rep.mixed() else {
            return Err(format!(
                "feasible instance {k} reported {}",
                rep.outcome.label()
            ));
        };
        let dist = set_distance(&Target::Cone(gens), &mixture_zbar(&mdp, mixed));
        let b = measurement_bound(&mdp);
        let rhs = b / (1.0 - GAMMA) / (t as f64).sqrt() + threshold;
        ensure!(dist <= rhs, "feasible instance {k}: distance {dist} > {rhs}");
        min_margin = min_margin.min(rhs - dist);
    }
    Ok(format!(
        "infeasible flagged at t = {detected}; 10 feasible, smallest margin {min_margin:.3e}"
    ))
}

fn random_cone(rng: &mut ChaCha8Rng) -> (usize, Vec<Vec<f64>>) {
    let d = rng.gen_range(1..=5);
    let gens = match rng.gen_range(0..6) {
        0 => (0..d).map(|i| unit(d, i, -1.0)).collect(),
        1 => (0..d).map(|i| unit(d, i, 1.0)).collect(),
        2 => (0..d).flat_map(|i| [unit(d, i, 1.0), unit(d, i, -1.0)]).collect(),
        _ => random_generators(rng, d, 1..=6),
    };
    (d, gens)
}

fn unit(d: usize, i: usize, s: f64) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = s;
    e
}

fn moreau_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3013);
    let mut worst = [0f64; 4];
    let mut spec_form_short = 0;
    for k in 0..1000 {
        let (d, gens) = random_cone(&mut rng);
        let cone: TargetSet = lib(GeneratorCone::new(d, gens.clone()))?.into();
        let x = uniform_vec(&mut rng, d, -3.0, 3.0);
        let p = lib(cone.project(&x))?;
        let q = lib(cone.project_polar(&x))?;
        let decomp = (0..d).map(|i| (x[i] - p[i] - q[i]).abs()).fold(0.0, f64::max);
        let ortho = dot(&p, &q).abs();
        let polar = gens
            .iter()
            .map(|g| dot(g, &q) / norm(g))
            .fold(f64::NEG_INFINITY, f64::max);
        let dist = norm(&q);
        let conic = set_distance(&Target::Cone(gens.clone()), &x);
        ensure!(decomp <= 1e-8, "pair {k}: x − p − q = {decomp}");
        ensure!(ortho <= 1e-8, "pair {k}: p·q = {ortho}");
        ensure!(polar <= 1e-8, "pair {k}: polar part violates a generator by {polar}");
        ensure!(
            (dist - conic).abs() <= 1e-6,
            "pair {k}: ‖x − p‖ = {dist}, conic program gives {conic}"
        );
        ensure!(
            set_distance(&Target::Cone(gens.clone()), &p) <= 1e-7,
            "pair {k}: projection outside the cone"
        );
        let (attained, lam) = lib(cone.lambda_maximizer(&x))?;
        ensure!(
            (dot(&lam, &x) - dist).abs() <= 1e-9 && (attained - dist).abs() <= 1e-9,
            "pair {k}: λ*·x = {} vs dist {dist}",
            dot(&lam, &x)
        );
        if dist > 0.0 && dist < 1.0 && (dot(&q, &x) / dist.max(1.0) - dist).abs() > 1e-9 {
            spec_form_short += 1;
        }
        let lset = lib(LambdaSet::new(cone.clone()))?;
        for _ in 0..5 {
            let v = uniform_vec(&mut rng, d, -2.0, 2.0);
            let l = lib(Domain::project(&lset, &v))?;
            ensure!(
                norm(&l) <= 1.0 + 1e-12
                    && gens.iter().all(|g| dot(g, &l) <= 1e-9 * norm(g)),
                "pair {k}: sampled λ {l:?} outside Λ"
            );
            ensure!(
                dot(&l, &x) <= dist + 1e-9,
                "pair {k}: λ·x = {} exceeds dist {dist}",
                dot(&l, &x)
            );
        }
        let alpha = rng.gen_range(0.0..3.0);
        let ax: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let homog = (lib(cone.distance(&ax))? - alpha * dist).abs();
        ensure!(homog <= 1e-8, "pair {k}: dist(αx) − α·dist(x) = {homog}");
        for (w, v) in worst.iter_mut().zip([decomp, ortho, polar, (dist - conic).abs()]) {
            *w = w.max(v);
        }
    }
    Ok(format!(
        "max residuals: decomposition {:.1e}, orthogonality {:.1e}, polar {:.1e}, conic cross-check {:.1e}; r/max(1,‖r‖) short of dist on {spec_form_short} pairs",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn box_distance(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (l, h))| (v - v.clamp(*l, *h)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn box_max_norm(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| (l * l).max(h * h))
        .sum::<f64>()
        .sqrt()
}

fn lifting_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11f7);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    for delta in [0.05, 0.1, 0.5, 1.0] {
        for k in 0..100 {
            let d = rng.gen_range(1..=4);
            let (lo, hi) = random_box(&mut rng, d);
            let x = uniform_vec(&mut rng, d, -4.0, 4.0);
            let base: TargetSet = lib(BoxSet::new(lo.clone(), hi.clone()))?.into();
            let lifted = lib(LiftedCone::new(base, delta))?;
            let kappa = box_max_norm(&lo, &hi) / (2.0 * delta).sqrt();
            ensure!(
                (lifted.kappa() - kappa).abs() <= 1e-12 * kappa,
                "δ={delta} box {k}: κ = {} expected {kappa}",
                lifted.kappa()
            );
            let mut xk = x.clone();
            xk.push(kappa);
            let dl = lib(TargetSet::Lifted(lifted).distance(&xk))?;
            let dc = box_distance(&lo, &hi, &x);
            ensure!(
                dc <= (1.0 + delta) * dl + 1e-8,
                "δ={delta} box {k}: dist {dc} > (1+δ)·{dl}"
            );
            ensure!(dl <= dc + 1e-9, "δ={delta} box {k}: lifted {dl} > plain {dc}");
            let conic = lifted_box_distance(&lo, &hi, kappa, &x);
            ensure!(
                (conic - dl).abs() <= 1e-6,
                "δ={delta} box {k}: lifted distance {dl} vs conic program {conic}"
            );
            worst_cross = worst_cross.max((conic - dl).abs());
            if dl > 1e-9 {
                worst_ratio = worst_ratio.max(dc / dl - 1.0);
            }
        }
    }

    let t = 2000;
    let delta = 0.5;
    let mut min_margin = f64::INFINITY;
    for k in 0..5 {
        let (ns, na, d) = (rng.gen_range(4..=10), rng.gen_range(2..=3), rng.gen_range(1..=3));
        let mdp = lib(random_mdp(rng.gen(), ns, na, d, GAMMA))?;
        let (lo, hi) = random_box(&mut rng, d);
        let base: TargetSet = lib(BoxSet::new(lo.clone(), hi.clone()))?.into();
        let opts = RunOptions {
            iterations: t,
            seed: k,
            ..RunOptions::default()
        };
        let rep = lib(run_general(
            &mdp,
            &base,
            delta,
            &OracleConfig::exact(),
            &opts,
            Variant::Distance,
        ))?;
        let mixed = rep.mixed().ok_or("general run ended without a mixture")?;
        let zbar = mixture_zbar(&mdp, mixed);
        let dist = box_distance(&lo, &hi, &zbar);
        let kappa = box_max_norm(&lo, &hi) / (2.0 * delta).sqrt();
        let mut zk = zbar.clone();
        zk.push(kappa);
        let dl = lifted_box_distance(&lo, &hi, kappa, &zbar);
        ensure!(
            dist <= (1.0 + delta) * dl + 1e-8,
            "general {k}: stripped {dist} > (1+δ)·lifted {dl}"
        );
        let min = min_distance(&mdp, &Target::Box(lo, hi));
        let b = measurement_bound(&mdp);
        let rhs = (1.0 + delta)
            * (min + (b + kappa) / (1.0 - GAMMA) / (t as f64).sqrt() + vi_eps0());
        ensure!(dist <= rhs, "general {k}: distance {dist} > {rhs} (min-dist {min})");
        min_margin = min_margin.min(rhs - dist);
    }
    Ok(format!(
        "largest dist/lifted − 1 = {worst_ratio:.3}, conic cross-check {worst_cross:.1e}; 5 general runs, smallest margin {min_margin:.3e}"
    ))
}

enum Arena {
    Lambda(LambdaSet, Vec<Vec<f64>>),
    Box(BoxSet, Vec<f64>, Vec<f64>),
    Simplex(Simplex, usize),
}

impl Arena {
    fn domain(&self) -> &dyn Domain {
        match self {
            Arena::Lambda(l, _) => l,
            Arena::Box(b, _, _) => b,
            Arena::Simplex(s, _) => s,
        }
    }

    fn radius(&self) -> f64 {
        match self {
            Arena::Lambda(..) => 1.0,
            Arena::Box(_, lo, hi) => box_start_radius(lo, hi),
            Arena::Simplex(_, n) => ((*n as f64 - 1.0) / *n as f64).sqrt(),
        }
    }

    /// `min_{λ} s·λ` over the domain.
    fn comparator(&self, s: &[f64]) -> f64 {
        match self {
            Arena::Lambda(_, gens) => {
                let neg: Vec<f64> = s.iter().map(|v| -v).collect();
                -set_distance(&Target::Cone(gens.clone()), &neg)
            }
            Arena::Box(_, lo, hi) => box_min(s, lo, hi),
            Arena::Simplex(..) => s.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn contains(&self, l: &[f64]) -> bool {
        match self {
            Arena::Lambda(_, gens) => {
                norm(l) <= 1.0 + 1e-12 && gens.iter().all(|g| dot(g, l) <= 1e-9 * norm(g))
            }
            Arena::Box(_, lo, hi) => {
                l.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - 1e-12 && *v <= b + 1e-12)
            }
            Arena::Simplex(..) => {
                l.iter().all(|v| *v >= -1e-12) && (l.iter().sum::<f64>() - 1.0).abs() <= 1e-9
            }
        }
    }
}

fn ogd_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0cd0);
    let mut worst_ratio: f64 = 0.0;
    for k in 0..50 {
        let d0 = rng.gen_range(1..=4);
        let arena = match k % 3 {
            0 => {
                let gens = random_generators(&mut rng, d0, 1..=4);
                let cone: TargetSet = lib(GeneratorCone::new(d0, gens.clone()))?.into();
                Arena::Lambda(lib(LambdaSet::new(cone))?, gens)
            }
            1 => {
                let (lo, hi) = random_box(&mut rng, d0);
                Arena::Box(lib(BoxSet::new(lo.clone(), hi.clone()))?, lo, hi)
            }
            _ => {
                let n = d0.max(2);
                Arena::Simplex(lib(Simplex::new(n))?, n)
            }
        };
        let t = rng.gen_range(200..=2000);
        let g_max = rng.gen_range(0.5..10.0);
        let dom = arena.domain();
        let d = dom.dim();
        let radius = arena.radius();
        let eta = radius / (g_max * (t as f64).sqrt());
        ensure!(
            (lib(ogd_eta(radius, g_max, t))? - eta).abs() <= 1e-15 * eta,
            "sequence {k}: step size mismatch"
        );
        ensure!(
            (dom.start_radius() - radius).abs() <= 1e-12,
            "sequence {k}: start radius {} vs {radius}",
            dom.start_radius()
        );
        let mut ogd = lib(OgdState::at_start(dom, eta))?;
        let mut cum = 0.0;
        let mut sum = vec![0.0; d];
        let fixed = uniform_vec(&mut rng, d, -1.0, 1.0);
        for step in 0..t {
            let cur = ogd.current().to_vec();
            ensure!(arena.contains(&cur), "sequence {k}: iterate {cur:?} left the domain");
            let raw: Vec<f64> = match k % 5 {
                0 => uniform_vec(&mut rng, d, -1.0, 1.0),
                1 => cur.iter().map(|v| -v).chain(std::iter::empty()).collect(),
                2 => fixed.iter().map(|v| if step % 2 == 0 { *v } else { -v }).collect(),
                3 => fixed.iter().map(|v| if (step / 50) % 2 == 0 { *v } else { -v }).collect(),
                _ => cur.iter().zip(&fixed).map(|(c, f)| c - f).collect(),
            };
            let n = norm(&raw);
            let g: Vec<f64> = if n > 0.0 {
                raw.iter().map(|v| v * g_max / n).collect()
            } else {
                fixed.iter().map(|v| v * g_max / norm(&fixed).max(1e-300)).collect()
            };
            cum += dot(&g, &cur);
            for (s, v) in sum.iter_mut().zip(&g) {
                *s += v;
            }
            lib(ogd.ogd_step(&g, dom))?;
        }
        let regret = cum - arena.comparator(&sum);
        let bound = radius * g_max * (t as f64).sqrt();
        ensure!(
            regret <= bound + 1e-6,
            "sequence {k}: regret {regret} > DG√T = {bound}"
        );
        let reported = lib(ogd.realized_regret(dom))?;
        ensure!(
            (reported - regret).abs() <= 1e-6,
            "sequence {k}: library regret {reported} vs {regret}"
        );
        let avg = ogd.average_iterate().unwrap();
        ensure!(arena.contains(&avg), "sequence {k}: average iterate outside the domain");
        worst_ratio = worst_ratio.max(regret / bound);
    }
    Ok(format!("worst regret/DG√T {worst_ratio:.3}"))
}

/// Largest `reward` over the convex hull of `(unsafe, reward)` points subject
/// to `unsafe ≤ cap`; `None` when no point reaches the cap.
fn hull_optimum(points: &[(f64, f64)], cap: f64) -> Option<f64> {
    let mut front: Vec<(f64, f64)> = Vec::new();
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    for p in sorted {
        if front.last().map_or(true, |q| p.1 > q.1) {
            front.push(p);
        }
    }
    let mut best: Option<f64> = None;
    for (i, a) in front.iter().enumerate() {
        if a.0 > cap {
            break;
        }
        best = Some(best.map_or(a.1, |b: f64| b.max(a.1)));
        for b in &front[i + 1..] {
            if b.0 > cap {
                let w = (cap - a.0) / (b.0 - a.0);
                best = Some(best.unwrap().max(a.1 + w * (b.1 - a.1)));
            }
        }
    }
    best
}

fn bisection_gridworld() -> Check {
    let g = lib(gridworld(3, 3, GAMMA, 0.1))?;
    let mdp = &g.mdp;
    let thr = 0.5;
    let (lo, hi, steps, t) = (0.0, 10.0, 6, 2000);
    let points: Vec<(f64, f64)> = all_deterministic(9, 4)
        .map(|acts| {
            let z = exact_zbar(mdp, &StationaryPolicy::deterministic(&acts, 4).unwrap());
            (z[UNSAFE_COORD], z[REWARD_COORD])
        })
        .collect();
    let b_opt = hull_optimum(&points, thr).ok_or("no policy meets the safety cap")?;

    let target = lib(g.safety_preset(thr))?;
    let mc = MaximizeConfig {
        reward_coord: REWARD_COORD,
        lo,
        hi,
        steps,
        delta: 0.5,
        kappa: None,
    };
    let opts = RunOptions {
        iterations: t,
        seed: 7,
        ..RunOptions::default()
    };
    let res = lib(maximize_reward(mdp, &target, &mc, &OracleConfig::exact(), &opts))?;
    let b_star = res.threshold().ok_or("bisection found nothing feasible")?;
    let accepted = res
        .steps
        .iter()
        .filter(|s| s.feasible && s.threshold == b_star)
        .find_map(|s| s.report.as_ref())
        .ok_or("accepted step has no report")?;
    let slack = accepted.bound_slack;
    let width = (hi - lo) * 0.5f64.powi(steps as i32);

    ensure!(
        b_star >= b_opt - width,
        "threshold {b_star} below optimum {b_opt} − width {width}"
    );
    ensure!(
        b_star <= b_opt + width + slack,
        "threshold {b_star} above optimum {b_opt} + width {width} + slack {slack}"
    );
    let relaxed = hull_optimum(&points, thr + slack).unwrap();
    ensure!(
        b_star <= relaxed + slack,
        "threshold {b_star} above relaxed optimum {relaxed} + slack {slack}"
    );
    let calls_cap = steps * t;
    ensure!(
        res.oracle_calls <= calls_cap,
        "{} oracle calls > K·T = {calls_cap}",
        res.oracle_calls
    );
    ensure!(res.cache_hits > 0, "no cache hits across bisection steps");
    Ok(format!(
        "b* = {b_star}, optimum {b_opt:.4}, width {width}, slack {slack:.3}, oracle calls {}, cache hits {}",
        res.oracle_calls, res.cache_hits
    ))
}

const CLI_CONFIGS: [(&str, &str); 6] = [
    (
        "appropo",
        r#"seed = 11
algorithm = "appropo"
iterations = 300

[mdp]
source = "random"
states = 6
actions = 3
dim = 2
gamma = 0.9

[target]
kind = "cone"
generators = [[1.0, -0.5], [-1.0, -1.0]]
"#,
    ),
    (
        "feasibility",
        r#"seed = 12
algorithm = "feasibility"
iterations = 200

[mdp]
source = "random"
states = 5
actions = 2
dim = 1
gamma = 0.9

[target]
kind = "nonpositive_orthant"
"#,
    ),
    (
        "general",
        r#"seed = 13
algorithm = "general"
iterations = 200
delta = 0.5

[mdp]
source = "random"
states = 5
actions = 2
dim = 2
gamma = 0.9

[target]
kind = "box"
lower = [-1.0, -1.0]
upper = [0.5, 0.5]
"#,
    ),
    (
        "maximize",
        r#"seed = 14
algorithm = "maximize_reward"
iterations = 150

[mdp]
source = "gridworld"
width = 3
height = 3
gamma = 0.9
slip = 0.1

[target]
kind = "safety"
threshold = 0.5

[maximize]
lo = 0.0
hi = 10.0
steps = 3
"#,
    ),
    (
        "sampled",
        r#"seed = 15
algorithm = "appropo"
iterations = 25

[mdp]
source = "random"
states = 4
actions = 2
dim = 2
gamma = 0.8

[target]
kind = "nonpositive_orthant"

[oracle]
mode = "sampled"
rollouts = 300
max_episodes = 200
"#,
    ),
    (
        "game",
        r#"seed = 16
algorithm = "solve_game"
iterations = 500

[game]
payoff = [[1.0, -2.0], [0.5, 1.5]]

[game.lambda_set]
kind = "box"
lower = [-1.0, 0.0]
upper = [1.0, 2.0]

[game.u_set]
kind = "simplex"
n = 2
"#,
    ),
];

fn cli_trace(config: &Path, out: &Path, threads: Option<usize>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_appropo"));
    if let Some(n) = threads {
        cmd.arg("--threads").arg(n.to_string());
    }
    let status = cmd
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let code = status.status.code().unwrap_or(-1);
    if !(0..=3).contains(&code) {
        return Err(format!(
            "{} exited {code}: {}",
            config.display(),
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    std::fs::read(out.join("trace.csv")).map_err(|e| e.to_string())
}

fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (name, text) in CLI_CONFIGS {
        let cfg = dir.path().join(format!("{name}.toml"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let first = cli_trace(&cfg, &dir.path().join(format!("{name}-a")), None)?;
        let second = cli_trace(&cfg, &dir.path().join(format!("{name}-b")), None)?;
        ensure!(!first.is_empty(), "{name}: empty trace");
        ensure!(first == second, "{name}: trace.csv differs between invocations");
        compared += 1;
        if name == "sampled" {
            let one = cli_trace(&cfg, &dir.path().join("sampled-t1"), Some(1))?;
            let three = cli_trace(&cfg, &dir.path().join("sampled-t3"), Some(3))?;
            ensure!(
                one == first && three == first,
                "sampled: trace.csv depends on the thread count"
            );
            compared += 2;
        }
    }
    Ok(format!("{compared} repeated invocations byte-identical"))
}

fn main() {
    let criteria: [(&str, Option<u64>, fn() -> Check); 8] = [
        ("bilinear game gaps and regret", Some(5), bilinear_games),
        ("distance guarantee on random MDPs", Some(60), distance_runs),
        ("infeasibility detection and soundness", Some(20), feasibility_runs),
        ("Moreau decomposition and polar attainment", Some(5), moreau_suite),
        ("cone lifting distortion", Some(30), lifting_suite),
        ("OGD regret", Some(2), ogd_suite),
        ("bisection reward maximisation", Some(120), bisection_gridworld),
        ("CLI trace determinism", None, cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(panic_text(p.as_ref())));
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > Duration::from_secs(b));
        let ok = result.is_ok() && !over;
        if !ok {
            failed += 1;
        }
        let budget_text = budget.map_or("no budget".to_string(), |b| format!("budget {b} s"));
        let detail = match &result {
            Ok(s) if over => format!("{s}; over time budget"),
            Ok(s) => s.clone(),
            Err(e) => e.clone(),
        };
        println!(
            "criterion {} {name}: {} ({:.2} s, {budget_text}) {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .map_or("panicked".into(), |s| format!("panicked: {s}"))
}
