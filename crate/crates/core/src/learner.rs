//! Online gradient descent over a compact convex domain with exact regret
//! accounting for linear losses `ℓ_t(λ) = g_t·λ`.

use crate::convex::{BoxSet, LambdaSet};
use crate::linalg::{check_dim, check_finite, dist, dot, norm};
use crate::{Error, Result};

/// A compact convex decision set with a projection and a linear minimiser.
pub trait Domain {
    fn dim(&self) -> usize;
    fn project(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `min_{λ} g·λ` and a minimiser.
    fn minimize_linear(&self, g: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn contains(&self, x: &[f64], tol: f64) -> Result<bool>;
    fn initial_point(&self) -> Vec<f64>;
    /// Largest distance from `initial_point` to any point of the domain.
    fn start_radius(&self) -> f64;
    fn diameter(&self) -> f64;
}

impl Domain for LambdaSet {
    fn dim(&self) -> usize {
        LambdaSet::dim(self)
    }
    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        LambdaSet::project(self, x)
    }
    fn minimize_linear(&self, g: &[f64]) -> Result<(f64, Vec<f64>)> {
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let (v, lam) = self.maximize_linear(&neg)?;
        Ok((-v, lam))
    }
    fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        LambdaSet::contains(self, x, tol)
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; LambdaSet::dim(self)]
    }
    fn start_radius(&self) -> f64 {
        1.0
    }
    fn diameter(&self) -> f64 {
        2.0
    }
}

impl Domain for BoxSet {
    fn dim(&self) -> usize {
        BoxSet::dim(self)
    }
    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", x.len(), BoxSet::dim(self))?;
        Ok(BoxSet::project(self, x))
    }
    /// Ties (zero coefficients) go to the lower bound.
    fn minimize_linear(&self, g: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim("gradient", g.len(), BoxSet::dim(self))?;
        let x: Vec<f64> = g
            .iter()
            .zip(self.lower().iter().zip(self.upper()))
            .map(|(gi, (l, u))| if *gi < 0.0 { *u } else { *l })
            .collect();
        Ok((dot(g, &x), x))
    }
    fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(self.violation(x) <= tol)
    }
    fn initial_point(&self) -> Vec<f64> {
        BoxSet::project(self, &vec![0.0; BoxSet::dim(self)])
    }
    fn start_radius(&self) -> f64 {
        let c = self.initial_point();
        c.iter()
            .zip(self.lower().iter().zip(self.upper()))
            .map(|(ci, (l, u))| (ci - l).abs().max((u - ci).abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
    fn diameter(&self) -> f64 {
        dist(self.lower(), self.upper())
    }
}

/// The probability simplex in `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Simplex {
    n: usize,
}

impl Simplex {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSet("simplex of dimension zero".into()));
        }
        Ok(Simplex { n })
    }
}

impl Domain for Simplex {
    fn dim(&self) -> usize {
        self.n
    }
    /// Sort-based Euclidean projection.
    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", x.len(), self.n)?;
        let mut u = x.to_vec();
        u.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (j, uj) in u.iter().enumerate() {
            cum += uj;
            let t = (cum - 1.0) / (j + 1) as f64;
            if uj - t > 0.0 {
                theta = t;
            }
        }
        Ok(x.iter().map(|v| (v - theta).max(0.0)).collect())
    }
    /// The vertex with the smallest coefficient; ties go to the lowest index.
    fn minimize_linear(&self, g: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim("gradient", g.len(), self.n)?;
        let mut best = 0;
        for i in 1..self.n {
            if g[i] < g[best] {
                best = i;
            }
        }
        let mut e = vec![0.0; self.n];
        e[best] = 1.0;
        Ok((g[best], e))
    }
    fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(x.iter().all(|v| *v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol)
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![1.0 / self.n as f64; self.n]
    }
    fn start_radius(&self) -> f64 {
        ((self.n - 1) as f64 / self.n as f64).sqrt()
    }
    fn diameter(&self) -> f64 {
        if self.n > 1 {
            2f64.sqrt()
        } else {
            0.0
        }
    }
}

/// `η = D / (G √T)`.
pub fn ogd_eta(d: f64, g: f64, t: usize) -> Result<f64> {
    if !(d > 0.0 && g > 0.0 && d.is_finite() && g.is_finite()) || t == 0 {
        return Err(Error::Parameter(format!(
            "eta needs D, G > 0 and T >= 1 (got {d}, {g}, {t})"
        )));
    }
    Ok(d / (g * (t as f64).sqrt()))
}

/// Constant-step OGD iterate with its loss ledger.
#[derive(Debug, Clone)]
pub struct OgdState {
    current: Vec<f64>,
    eta: f64,
    t: usize,
    cumulative_loss: f64,
    loss_history: Vec<Vec<f64>>,
    gradient_sum: Vec<f64>,
    iterate_sum: Vec<f64>,
}

impl OgdState {
    pub fn new(start: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Parameter(format!("eta must be positive, got {eta}")));
        }
        check_finite("start point", &start)?;
        let d = start.len();
        Ok(OgdState {
            current: start,
            eta,
            t: 0,
            cumulative_loss: 0.0,
            loss_history: Vec::new(),
            gradient_sum: vec![0.0; d],
            iterate_sum: vec![0.0; d],
        })
    }

    pub fn at_start<D: Domain + ?Sized>(domain: &D, eta: f64) -> Result<Self> {
        OgdState::new(domain.initial_point(), eta)
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    /// Number of completed steps.
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }
    pub fn loss_history(&self) -> &[Vec<f64>] {
        &self.loss_history
    }
    pub fn gradient_sum(&self) -> &[f64] {
        &self.gradient_sum
    }

    /// Average of the iterates that were played, `(1/T) Σ λ_t`.
    pub fn average_iterate(&self) -> Option<Vec<f64>> {
        (self.t > 0).then(|| self.iterate_sum.iter().map(|v| v / self.t as f64).collect())
    }

    /// Charges `g·λ_t` and moves to `project(λ_t − η g)`.
    pub fn ogd_step<D: Domain + ?Sized>(&mut self, gradient: &[f64], domain: &D) -> Result<()> {
        check_dim("gradient", gradient.len(), self.current.len())?;
        check_finite("gradient", gradient)?;
        self.cumulative_loss += dot(gradient, &self.current);
        for (s, v) in self.iterate_sum.iter_mut().zip(&self.current) {
            *s += v;
        }
        for (s, g) in self.gradient_sum.iter_mut().zip(gradient) {
            *s += g;
        }
        self.loss_history.push(gradient.to_vec());
        let moved: Vec<f64> = self
            .current
            .iter()
            .zip(gradient)
            .map(|(l, g)| l - self.eta * g)
            .collect();
        self.current = domain.project(&moved)?;
        self.t += 1;
        Ok(())
    }

    /// `Σ ℓ_t(λ_t) − min_λ Σ ℓ_t(λ)`, with the comparator computed exactly.
    pub fn realized_regret<D: Domain + ?Sized>(&self, domain: &D) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::Parameter("regret of an empty loss history".into()));
        }
        let (best, _) = domain.minimize_linear(&self.gradient_sum)?;
        Ok(self.cumulative_loss - best)
    }
}

/// Largest gradient norm in a loss history; useful for checking `G`.
pub fn max_gradient_norm(history: &[Vec<f64>]) -> f64 {
    history.iter().map(|g| norm(g)).fold(0.0, f64::max)
}
