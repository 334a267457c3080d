//! Repeated play for bilinear games `g(λ, u) = λᵀ M u`: OGD for the
//! maximising λ-player against exact best responses for the u-player.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::convex::BoxSet;
use crate::learner::{ogd_eta, Domain, OgdState, Simplex};
use crate::linalg::{check_dim, dot, norm};
use crate::{Error, Result};

/// Tolerance of the two gap checks.
pub const GAP_TOL: f64 = 1e-9;
const MAX_BOX_CORNER_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum GameSet {
    Box(BoxSet),
    Simplex(Simplex),
}

impl GameSet {
    fn domain(&self) -> &dyn Domain {
        match self {
            GameSet::Box(b) => b,
            GameSet::Simplex(s) => s,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    /// Vertices of the set (box corners or simplex vertices).
    fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            GameSet::Simplex(s) => {
                let n = s.dim();
                Ok((0..n)
                    .map(|i| {
                        let mut e = vec![0.0; n];
                        e[i] = 1.0;
                        e
                    })
                    .collect())
            }
            GameSet::Box(b) => {
                let n = b.dim();
                if n > MAX_BOX_CORNER_DIM {
                    return Err(Error::Unsupported {
                        op: "corner enumeration above 20 dimensions",
                        kind: "box",
                    });
                }
                Ok((0..1usize << n)
                    .map(|mask| {
                        (0..n)
                            .map(|i| {
                                if mask >> i & 1 == 1 {
                                    b.upper()[i]
                                } else {
                                    b.lower()[i]
                                }
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    /// `M`, one row per λ coordinate.
    pub payoff: Vec<Vec<f64>>,
    pub lambda_set: GameSet,
    pub u_set: GameSet,
    pub rounds: usize,
}

impl GameConfig {
    fn validate(&self) -> Result<()> {
        check_dim("payoff rows", self.payoff.len(), self.lambda_set.dim())?;
        for row in &self.payoff {
            check_dim("payoff columns", row.len(), self.u_set.dim())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("payoff matrix".into()));
            }
        }
        if self.rounds == 0 {
            return Err(Error::Parameter("T must be at least 1".into()));
        }
        Ok(())
    }

    pub fn payoff(&self, lambda: &[f64], u: &[f64]) -> f64 {
        dot(lambda, &self.mu(u))
    }

    /// `M u`.
    fn mu(&self, u: &[f64]) -> Vec<f64> {
        self.payoff.iter().map(|row| dot(row, u)).collect()
    }

    /// `Mᵀ λ`.
    fn mt_lambda(&self, lambda: &[f64]) -> Vec<f64> {
        let m = self.u_set.dim();
        (0..m)
            .map(|j| {
                self.payoff
                    .iter()
                    .zip(lambda)
                    .map(|(row, l)| row[j] * l)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub realized_regret: f64,
    /// `realized_regret / T`.
    pub delta: f64,
    /// `min_u g(λ̄, u)`.
    pub lower: f64,
    /// `max_λ g(λ, ū)`.
    pub upper: f64,
    /// Value of the game from a linear program.
    pub value: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// `D` (distance from the start to the farthest point of Λ), `G` and `DG√T`.
    pub diameter: f64,
    pub gradient_bound: f64,
    pub regret_bound: f64,
    pub eta: f64,
}

/// One round of play.
#[derive(Debug, Clone, PartialEq)]
pub struct GameRound {
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    pub lambda_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub certificate: Certificate,
    pub rounds: Vec<GameRound>,
}

pub fn solve_game(cfg: &GameConfig) -> Result<GameSolution> {
    cfg.validate()?;
    let lam = cfg.lambda_set.domain();
    let uset = cfg.u_set.domain();
    let t_max = cfg.rounds;
    let d = lam.start_radius();
    let g = cfg
        .u_set
        .vertices()?
        .iter()
        .map(|u| norm(&cfg.mu(u)))
        .fold(0.0, f64::max);
    let eta = if d > 0.0 && g > 0.0 {
        ogd_eta(d, g, t_max)?
    } else {
        1.0
    };

    let mut ogd = OgdState::at_start(lam, eta)?;
    let mut u_sum = vec![0.0; uset.dim()];
    let mut rounds = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        let (_, u) = uset.minimize_linear(&cfg.mt_lambda(ogd.current()))?;
        for (s, v) in u_sum.iter_mut().zip(&u) {
            *s += v;
        }
        let mu = cfg.mu(&u);
        rounds.push(GameRound {
            lambda: ogd.current().to_vec(),
            payoff: dot(ogd.current(), &mu),
            u,
        });
        let grad: Vec<f64> = mu.iter().map(|v| -v).collect();
        ogd.ogd_step(&grad, lam)?;
    }
    let lambda_bar = ogd.average_iterate().expect("at least one round");
    let u_bar: Vec<f64> = u_sum.iter().map(|s| s / t_max as f64).collect();
    let realized_regret = ogd.realized_regret(lam)?;
    let delta = realized_regret / t_max as f64;
    let lower = uset.minimize_linear(&cfg.mt_lambda(&lambda_bar))?.0;
    let neg_mu: Vec<f64> = cfg.mu(&u_bar).iter().map(|v| -v).collect();
    let upper = -lam.minimize_linear(&neg_mu)?.0;
    let value = game_value(cfg)?;
    let certificate = Certificate {
        realized_regret,
        delta,
        lower,
        upper,
        value,
        lower_ok: lower >= value - delta - GAP_TOL,
        upper_ok: upper <= value + delta + GAP_TOL,
        diameter: d,
        gradient_bound: g,
        regret_bound: d * g * (t_max as f64).sqrt(),
        eta,
    };
    Ok(GameSolution {
        lambda_bar,
        u_bar,
        certificate,
        rounds,
    })
}

/// `max_{λ∈Λ} min_{u∈U} λᵀMu` as a linear program: the inner minimum of a
/// linear function over a box is a sum of per-coordinate minima, over a
/// simplex the minimum coefficient.
pub fn game_value(cfg: &GameConfig) -> Result<f64> {
    cfg.validate()?;
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let lam: Vec<Variable> = match &cfg.lambda_set {
        GameSet::Box(b) => (0..b.dim())
            .map(|i| lp.add_var(0.0, (b.lower()[i], b.upper()[i])))
            .collect(),
        GameSet::Simplex(s) => {
            let v: Vec<Variable> = (0..s.dim())
                .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
                .collect();
            let expr: Vec<(Variable, f64)> = v.iter().map(|x| (*x, 1.0)).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, 1.0);
            v
        }
    };
    let column = |j: usize| -> Vec<(Variable, f64)> {
        lam.iter()
            .zip(&cfg.payoff)
            .map(|(v, row)| (*v, row[j]))
            .collect()
    };
    match &cfg.u_set {
        GameSet::Simplex(s) => {
            let t = lp.add_var(1.0, free);
            for j in 0..s.dim() {
                // t ≤ (Mᵀλ)_j
                let mut expr = column(j);
                for e in expr.iter_mut() {
                    e.1 = -e.1;
                }
                expr.push((t, 1.0));
                lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 0.0);
            }
        }
        GameSet::Box(b) => {
            for j in 0..b.dim() {
                let s = lp.add_var(1.0, free);
                for bound in [b.lower()[j], b.upper()[j]] {
                    // s_j ≤ bound · (Mᵀλ)_j
                    let mut expr: Vec<(Variable, f64)> = column(j)
                        .into_iter()
                        .map(|(v, c)| (v, -c * bound))
                        .collect();
                    expr.push((s, 1.0));
                    lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 0.0);
                }
            }
        }
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::LinearProgram(e.to_string()))?
        .into_solution()
        .map_err(|_| Error::LinearProgram("interrupted".into()))?;
    Ok(sol.objective())
}
