//! Finitely generated convex cones `{ Σ w_j g_j : w ≥ 0 }`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{check_dim, dot, norm};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCone {
    dim: usize,
    generators: Vec<Vec<f64>>,
}

impl GeneratorCone {
    /// Zero generators are dropped; an empty list gives the cone `{0}`.
    pub fn new(dim: usize, generators: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("cone of dimension zero".into()));
        }
        let mut kept = Vec::with_capacity(generators.len());
        for g in generators {
            check_dim("cone generator", g.len(), dim)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("cone generator".into()));
            }
            if norm(&g) > 0.0 {
                kept.push(g);
            }
        }
        Ok(GeneratorCone {
            dim,
            generators: kept,
        })
    }

    pub fn nonpositive_orthant(dim: usize) -> Self {
        let gens = (0..dim).map(|i| unit(dim, i, -1.0)).collect();
        GeneratorCone::new(dim, gens).expect("valid generators")
    }

    pub fn nonnegative_orthant(dim: usize) -> Self {
        let gens = (0..dim).map(|i| unit(dim, i, 1.0)).collect();
        GeneratorCone::new(dim, gens).expect("valid generators")
    }

    pub fn whole_space(dim: usize) -> Self {
        let gens = (0..dim)
            .flat_map(|i| [unit(dim, i, 1.0), unit(dim, i, -1.0)])
            .collect();
        GeneratorCone::new(dim, gens).expect("valid generators")
    }

    pub fn ray(direction: Vec<f64>) -> Result<Self> {
        let d = direction.len();
        GeneratorCone::new(d, vec![direction])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// Projection onto the cone via nonnegative least squares on the generator weights.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", x.len(), self.dim)?;
        let w = nnls(&self.generators, x)?;
        let mut p = vec![0.0; self.dim];
        for (g, wj) in self.generators.iter().zip(&w) {
            for (pk, gk) in p.iter_mut().zip(g) {
                *pk += wj * gk;
            }
        }
        Ok(p)
    }

    /// `λ ∈ C°` iff `λ·g ≤ 0` for every generator.
    pub fn polar_contains(&self, lambda: &[f64], tol: f64) -> bool {
        self.generators
            .iter()
            .all(|g| dot(g, lambda) <= tol * norm(g).max(1.0))
    }
}

fn unit(dim: usize, i: usize, s: f64) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = s;
    e
}

/// Lawson–Hanson active-set solver for `min ‖Σ w_j g_j − x‖, w ≥ 0`.
pub(crate) fn nnls(gens: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    let k = gens.len();
    let d = x.len();
    let mut w = vec![0.0; k];
    if k == 0 {
        return Ok(w);
    }
    let scale = gens.iter().map(|g| norm(g)).fold(0.0, f64::max) * (1.0 + norm(x));
    let tol = 1e-13 * scale.max(1.0);
    let mut passive = vec![false; k];
    let mut blocked = vec![false; k];

    let residual = |w: &[f64]| -> Vec<f64> {
        let mut r = x.to_vec();
        for (g, wj) in gens.iter().zip(w) {
            if *wj != 0.0 {
                for (rk, gk) in r.iter_mut().zip(g) {
                    *rk -= wj * gk;
                }
            }
        }
        r
    };
    let solve_passive = |passive: &[bool]| -> Vec<f64> {
        let idx: Vec<usize> = (0..k).filter(|j| passive[*j]).collect();
        let a = DMatrix::from_fn(d, idx.len(), |r, c| gens[idx[c]][r]);
        let b = DVector::from_column_slice(x);
        let s = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = vec![0.0; k];
        for (c, j) in idx.iter().enumerate() {
            full[*j] = s[c];
        }
        full
    };

    for _ in 0..(30 * k + 30) {
        let r = residual(&w);
        let cand = (0..k)
            .filter(|j| !passive[*j] && !blocked[*j])
            .map(|j| (j, dot(&gens[j], &r)))
            .filter(|(_, g)| *g > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = cand else {
            return Ok(w);
        };
        passive[j] = true;
        let mut first = true;
        loop {
            let s = solve_passive(&passive);
            if (0..k).filter(|i| passive[*i]).all(|i| s[i] > 0.0) {
                w = s;
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            if first && s[j] <= 0.0 {
                // Numerically dependent column; exclude it until progress is made.
                passive[j] = false;
                blocked[j] = true;
                break;
            }
            first = false;
            let mut alpha = f64::INFINITY;
            for i in (0..k).filter(|i| passive[*i] && s[*i] <= 0.0) {
                alpha = alpha.min(w[i] / (w[i] - s[i]));
            }
            for i in 0..k {
                if passive[i] {
                    w[i] += alpha * (s[i] - w[i]);
                    if w[i] <= tol * 1e-3 {
                        w[i] = 0.0;
                        passive[i] = false;
                    }
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    Err(Error::Projection(
        "nonnegative least squares did not converge".into(),
    ))
}
