//! Independent oracles for the integration tests: a small second-order-cone
//! program builder on top of clarabel, occupancy-measure distance programs,
//! and exact long-term measurements from a direct linear solve.

#![allow(dead_code)]

use appropo::mdp::{MixedPolicy, StationaryPolicy, VectorMdp};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Row = Vec<(usize, f64)>;

/// `min c·x` subject to equalities, `a·x ≤ b` rows and at most one
/// `‖(a_i·x + b_i)_i‖ ≤ x_t` constraint.
#[derive(Default, Clone)]
pub struct Socp {
    pub n: usize,
    pub cost: Vec<(usize, f64)>,
    pub eq: Vec<(Row, f64)>,
    pub le: Vec<(Row, f64)>,
    pub norm: Option<(usize, Vec<(Row, f64)>)>,
}

impl Socp {
    pub fn var(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    pub fn vars(&mut self, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.var()).collect()
    }

    pub fn solve(&self) -> (f64, Vec<f64>) {
        let mut ri = Vec::new();
        let mut ci = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0;
        let mut push = |r: &Row, scale: f64, rhs: f64, row: &mut usize, b: &mut Vec<f64>| {
            for (j, v) in r {
                ri.push(*row);
                ci.push(*j);
                vals.push(scale * v);
            }
            b.push(rhs);
            *row += 1;
        };
        for (r, rhs) in &self.eq {
            push(r, 1.0, *rhs, &mut row, &mut b);
        }
        if !self.eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.eq.len()));
        }
        for (r, rhs) in &self.le {
            push(r, 1.0, *rhs, &mut row, &mut b);
        }
        if !self.le.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(self.le.len()));
        }
        if let Some((t, entries)) = &self.norm {
            push(&vec![(*t, 1.0)], -1.0, 0.0, &mut row, &mut b);
            for (r, c) in entries {
                push(r, -1.0, *c, &mut row, &mut b);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + entries.len()));
        }
        let a = CscMatrix::new_from_triplets(row, self.n, ri, ci, vals);
        let p = CscMatrix::new_from_triplets(self.n, self.n, vec![], vec![], vec![]);
        let mut q = vec![0.0; self.n];
        for (j, v) in &self.cost {
            q[*j] += v;
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(1e-10)
            .tol_gap_rel(1e-10)
            .tol_feas(1e-10)
            .max_iter(400)
            .build()
            .unwrap();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).unwrap();
        solver.solve();
        let s = &solver.solution;
        assert!(
            matches!(s.status, SolverStatus::Solved | SolverStatus::AlmostSolved),
            "conic solver status {:?}",
            s.status
        );
        (s.obj_val, s.x.clone())
    }
}

/// A target set described for the test oracles.
#[derive(Debug, Clone)]
pub enum Target {
    Cone(Vec<Vec<f64>>),
    Box(Vec<f64>, Vec<f64>),
    /// Box with extra rows `normal·y ≤ offset`.
    Polytope(Vec<f64>, Vec<f64>, Vec<(Vec<f64>, f64)>),
}

/// Adds `y ∈ target` for a fresh `d`-vector of variables expressed through
/// returned linear rows (one per coordinate).
fn target_point(p: &mut Socp, target: &Target, d: usize) -> Vec<Row> {
    match target {
        Target::Cone(gens) => {
            let w = p.vars(gens.len());
            for &j in &w {
                p.le.push((vec![(j, -1.0)], 0.0));
            }
            (0..d).map(|i| w.iter().zip(gens).map(|(&j, g)| (j, g[i])).collect()).collect()
        }
        Target::Box(lo, hi) | Target::Polytope(lo, hi, _) => {
            let y = p.vars(d);
            for i in 0..d {
                p.le.push((vec![(y[i], -1.0)], -lo[i]));
                p.le.push((vec![(y[i], 1.0)], hi[i]));
            }
            if let Target::Polytope(_, _, rows) = target {
                for (n, off) in rows {
                    p.le.push((y.iter().zip(n).map(|(&j, v)| (j, *v)).collect(), *off));
                }
            }
            y.iter().map(|&j| vec![(j, 1.0)]).collect()
        }
    }
}

/// `dist(x, target)` as a second-order-cone program.
pub fn set_distance(target: &Target, x: &[f64]) -> f64 {
    let d = x.len();
    let mut p = Socp::default();
    let y = target_point(&mut p, target, d);
    let t = p.var();
    p.cost.push((t, 1.0));
    let entries = (0..d).map(|i| (y[i].iter().map(|(j, v)| (*j, -v)).collect(), x[i])).collect();
    p.norm = Some((t, entries));
    p.solve().0.max(0.0)
}

/// `dist(x ⊕ κ, cone(B × {κ}))` for a box `B = [lo, hi]`, written as the
/// convex program over `(α, y)` with `α·lo ≤ y ≤ α·hi`, `α ≥ 0`.
pub fn lifted_box_distance(lo: &[f64], hi: &[f64], kappa: f64, x: &[f64]) -> f64 {
    let d = x.len();
    let mut p = Socp::default();
    let alpha = p.var();
    let y = p.vars(d);
    p.le.push((vec![(alpha, -1.0)], 0.0));
    for i in 0..d {
        p.le.push((vec![(y[i], -1.0), (alpha, lo[i])], 0.0));
        p.le.push((vec![(y[i], 1.0), (alpha, -hi[i])], 0.0));
    }
    let t = p.var();
    p.cost.push((t, 1.0));
    let mut entries: Vec<(Row, f64)> = (0..d).map(|i| (vec![(y[i], -1.0)], x[i])).collect();
    entries.push((vec![(alpha, -kappa)], kappa));
    p.norm = Some((t, entries));
    p.solve().0.max(0.0)
}

/// `min_μ dist(z̄(μ), target)` over occupancy measures
/// `d ≥ 0, Σ_a d(s',a) − γ Σ_{s,a} P(s'|s,a) d(s,a) = β(s')`.
pub fn min_distance(mdp: &VectorMdp, target: &Target) -> f64 {
    let (ns, na, dim) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    let mut p = Socp::default();
    let occ: Vec<usize> = p.vars(ns * na);
    for &j in &occ {
        p.le.push((vec![(j, -1.0)], 0.0));
    }
    for sp in 0..ns {
        let mut r: Row = (0..na).map(|a| (occ[sp * na + a], 1.0)).collect();
        for s in 0..ns {
            for a in 0..na {
                let pr = mdp.transition_row(s, a)[sp];
                if pr != 0.0 {
                    r.push((occ[s * na + a], -mdp.gamma() * pr));
                }
            }
        }
        p.eq.push((r, mdp.initial_dist()[sp]));
    }
    let y = target_point(&mut p, target, dim);
    let t = p.var();
    p.cost.push((t, 1.0));
    let entries = (0..dim)
        .map(|i| {
            let mut r: Row = (0..ns * na).map(|k| (occ[k], mdp.measurement(k / na, k % na)[i])).collect();
            r.extend(y[i].iter().map(|(j, v)| (*j, -v)));
            (r, 0.0)
        })
        .collect();
    p.norm = Some((t, entries));
    p.solve().0.max(0.0)
}

/// `z̄(π)` from `(I − γ P_πᵀ) ν = β` solved with a dense LU factorisation.
pub fn exact_zbar(mdp: &VectorMdp, pi: &StationaryPolicy) -> Vec<f64> {
    let (ns, na, dim) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    let mut m = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (sp, pr) in mdp.transition_row(s, a).iter().enumerate() {
                m[(sp, s)] -= mdp.gamma() * w * pr;
            }
        }
    }
    let nu = m.lu().solve(&DVector::from_column_slice(mdp.initial_dist())).expect("nonsingular");
    let mut z = vec![0.0; dim];
    for s in 0..ns {
        for a in 0..na {
            let w = nu[s] * pi.prob(s, a);
            for (zi, v) in z.iter_mut().zip(mdp.measurement(s, a)) {
                *zi += w * v;
            }
        }
    }
    z
}

/// All `|A|^|S|` deterministic action tables in lexicographic order.
pub fn all_deterministic(ns: usize, na: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = na.pow(ns as u32);
    (0..total).map(move |mut k| {
        (0..ns)
            .map(|_| {
                let a = k % na;
                k /= na;
                a
            })
            .collect()
    })
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn uniform_vec<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random box with side lengths in `[0.2, 2]` and lower corner in `[−2, 1]^d`.
pub fn random_box<R: Rng>(rng: &mut R, d: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = uniform_vec(rng, d, -2.0, 1.0);
    let hi = lo.iter().map(|l| l + rng.gen_range(0.2..2.0)).collect();
    (lo, hi)
}

/// `max_π` of a scalar reward by enumerating deterministic policies.
pub fn best_deterministic_return(mdp: &VectorMdp, reward: &[f64]) -> f64 {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    all_deterministic(ns, na)
        .map(|acts| {
            let pi = StationaryPolicy::deterministic(&acts, na).unwrap();
            scalar_return(mdp, &pi, reward)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `E[Σ γ^t r(s_t, a_t)]` by the same direct solve as [`exact_zbar`].
pub fn scalar_return(mdp: &VectorMdp, pi: &StationaryPolicy, reward: &[f64]) -> f64 {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let mut m = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            let w = pi.prob(s, a);
            for (sp, pr) in mdp.transition_row(s, a).iter().enumerate() {
                m[(sp, s)] -= mdp.gamma() * w * pr;
            }
        }
    }
    let nu = m.lu().solve(&DVector::from_column_slice(mdp.initial_dist())).unwrap();
    (0..ns).map(|s| (0..na).map(|a| nu[s] * pi.prob(s, a) * reward[s * na + a]).sum::<f64>()).sum()
}

/// Random fully stochastic policy (every action has positive probability).
pub fn random_policy<R: Rng>(rng: &mut R, ns: usize, na: usize) -> StationaryPolicy {
    let rows = (0..ns)
        .map(|_| {
            let w: Vec<f64> = (0..na).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    StationaryPolicy::new(rows).unwrap()
}

/// `max_{s,a} ‖z(s,a)‖`, the tightest measurement bound.
pub fn measurement_bound(mdp: &VectorMdp) -> f64 {
    let mut b: f64 = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            b = b.max(norm(mdp.measurement(s, a)));
        }
    }
    b
}

/// `z̄` of a mixture recomputed component by component with the test's own solve.
pub fn mixture_zbar(mdp: &VectorMdp, mixed: &MixedPolicy) -> Vec<f64> {
    let mut z = vec![0.0; mdp.dim()];
    for (pi, w) in mixed.components() {
        for (zi, v) in z.iter_mut().zip(exact_zbar(mdp, pi)) {
            *zi += w * v;
        }
    }
    z
}

/// `min_{u∈[lo,hi]} g·u`.
pub fn box_min(g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    g.iter()
        .zip(lo.iter().zip(hi))
        .map(|(gi, (l, h))| (gi * l).min(gi * h))
        .sum()
}

/// `max_{λ∈[llo,lhi]} min_{u∈[ulo,uhi]} λᵀMu` as a linear program in `(λ, w)`.
pub fn bilinear_value(m: &[Vec<f64>], llo: &[f64], lhi: &[f64], ulo: &[f64], uhi: &[f64]) -> f64 {
    let mut p = Socp::default();
    let lam = p.vars(llo.len());
    let w = p.vars(ulo.len());
    for i in 0..lam.len() {
        p.le.push((vec![(lam[i], -1.0)], -llo[i]));
        p.le.push((vec![(lam[i], 1.0)], lhi[i]));
    }
    for j in 0..w.len() {
        p.cost.push((w[j], -1.0));
        for bound in [ulo[j], uhi[j]] {
            let mut r = vec![(w[j], 1.0)];
            r.extend((0..lam.len()).map(|i| (lam[i], -bound * m[i][j])));
            p.le.push((r, 0.0));
        }
    }
    -p.solve().0
}

