//! The cone `cone(C × {κ})` generated by a compact convex set lifted one level up.

use crate::linalg::{check_dim, dot, norm};
use crate::{Error, Result};

use super::TargetSet;

const SCAN_POINTS: usize = 64;
const GOLDEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedCone {
    base: Box<TargetSet>,
    kappa: f64,
    delta: f64,
    base_norm: f64,
}

impl LiftedCone {
    /// Lift with `κ = max_{x∈C} ‖x‖ / √(2δ)`.
    pub fn new(base: TargetSet, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Parameter(format!(
                "delta must be positive, got {delta}"
            )));
        }
        let base_norm = base_norm(&base)?;
        if base_norm == 0.0 {
            return Err(Error::InvalidSet(
                "base set is {0}; choose kappa explicitly with LiftedCone::with_kappa".into(),
            ));
        }
        let kappa = base_norm / (2.0 * delta).sqrt();
        Ok(LiftedCone {
            base: Box::new(base),
            kappa,
            delta,
            base_norm,
        })
    }

    /// Lift with an explicit `κ`; the implied `δ = max‖x‖² / (2κ²)`.
    pub fn with_kappa(base: TargetSet, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Parameter(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        let base_norm = base_norm(&base)?;
        let delta = base_norm * base_norm / (2.0 * kappa * kappa);
        Ok(LiftedCone {
            base: Box::new(base),
            kappa,
            delta,
            base_norm,
        })
    }

    pub fn base(&self) -> &TargetSet {
        &self.base
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn base_max_norm(&self) -> f64 {
        self.base_norm
    }
    pub fn dim(&self) -> usize {
        self.base.dim() + 1
    }

    /// Projects `(x, t)` onto the lifted cone by minimising the convex function
    /// `f(α) = ‖x − α Γ_C(x/α)‖² + (t − ακ)²` over `α ≥ 0`.
    pub fn project(&self, xt: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", xt.len(), self.dim())?;
        let d = self.base.dim();
        let (x, t) = (&xt[..d], xt[d]);
        let kappa = self.kappa;
        let eval = |alpha: f64| -> Result<(f64, Vec<f64>)> {
            if alpha <= 0.0 {
                return Ok((dot(x, x) + t * t, vec![0.0; d]));
            }
            let scaled: Vec<f64> = x.iter().map(|v| v / alpha).collect();
            let c = self.base.project(&scaled)?;
            let f = x
                .iter()
                .zip(&c)
                .map(|(xi, ci)| (xi - alpha * ci).powi(2))
                .sum::<f64>()
                + (t - alpha * kappa).powi(2);
            Ok((f, c))
        };

        let alpha_max = norm(xt) / kappa + self.base_norm;
        if alpha_max == 0.0 {
            return Ok(vec![0.0; d + 1]);
        }
        let grid: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| alpha_max * i as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        let mut vals = Vec::with_capacity(SCAN_POINTS);
        for &a in &grid {
            vals.push(eval(a)?.0);
        }
        let best = (0..SCAN_POINTS)
            .min_by(|a, b| vals[*a].total_cmp(&vals[*b]))
            .unwrap();
        let fmax = vals.iter().cloned().fold(0.0, f64::max);
        let slack = 1e-9 * (1.0 + fmax);
        let unimodal = (0..best).all(|i| vals[i] + slack >= vals[i + 1])
            && (best..SCAN_POINTS - 1).all(|i| vals[i + 1] + slack >= vals[i]);
        if !unimodal {
            return Err(Error::Projection(format!(
                "lifted projection: f(α) is not unimodal on [0, {alpha_max}]; scan values {vals:?}"
            )));
        }

        let mut lo = grid[best.saturating_sub(1)];
        let mut hi = grid[(best + 1).min(SCAN_POINTS - 1)];
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut a = hi - inv_phi * (hi - lo);
        let mut b = lo + inv_phi * (hi - lo);
        let mut fa = eval(a)?.0;
        let mut fb = eval(b)?.0;
        while hi - lo > GOLDEN_TOL * (1.0 + alpha_max) {
            if fa <= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - inv_phi * (hi - lo);
                fa = eval(a)?.0;
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + inv_phi * (hi - lo);
                fb = eval(b)?.0;
            }
        }

        // Refine on the sign of f'(α) = −2[(x − αc)·c + (t − ακ)κ].
        let deriv = |alpha: f64| -> Result<f64> {
            let (_, c) = eval(alpha)?;
            let r: f64 = x
                .iter()
                .zip(&c)
                .map(|(xi, ci)| (xi - alpha * ci) * ci)
                .sum();
            Ok(-2.0 * (r + (t - alpha * kappa) * kappa))
        };
        let width = hi - lo;
        let floor = 1e-12 * (1.0 + alpha_max);
        let (mut l, mut h) = ((lo - width).max(floor), hi + width);
        let mut candidates = vec![lo, hi, 0.5 * (lo + hi)];
        if l < h && deriv(l)? < 0.0 && deriv(h)? > 0.0 {
            for _ in 0..100 {
                let m = 0.5 * (l + h);
                if m <= l || m >= h {
                    break;
                }
                if deriv(m)? > 0.0 {
                    h = m;
                } else {
                    l = m;
                }
            }
            candidates.push(0.5 * (l + h));
        }
        candidates.push(0.0);
        let mut best_alpha = 0.0;
        let mut best_f = f64::INFINITY;
        let mut best_c = vec![0.0; d];
        for alpha in candidates {
            let (f, c) = eval(alpha)?;
            if f < best_f {
                best_f = f;
                best_alpha = alpha;
                best_c = c;
            }
        }
        let mut p: Vec<f64> = best_c.iter().map(|c| best_alpha * c).collect();
        p.push(best_alpha * kappa);
        Ok(p)
    }

    /// `(μ, ν) ∈ C̃°` iff `σ_C(μ) + νκ ≤ 0`.
    pub fn polar_contains(&self, lambda: &[f64], tol: f64) -> Result<bool> {
        check_dim("lambda", lambda.len(), self.dim())?;
        let d = self.base.dim();
        let s = self.base.support(&lambda[..d])? + lambda[d] * self.kappa;
        Ok(s <= tol * (1.0 + self.base_norm + self.kappa))
    }
}

fn base_norm(base: &TargetSet) -> Result<f64> {
    if !base.is_compact() {
        return Err(Error::Unsupported {
            op: "lift",
            kind: base.kind_name(),
        });
    }
    base.max_norm()
}
