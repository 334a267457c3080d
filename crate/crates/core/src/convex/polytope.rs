//! Compact sets: boxes, balls and polytopes (a box cut by halfspaces).

use std::collections::HashSet;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{check_dim, dist, dot, norm};
use crate::{Error, Result};

/// Dykstra stops once a sweep moves the iterate and every correction term by
/// less than this (relative).
pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;
/// Maximum number of vertices reported by enumeration.
pub const MAX_VERTICES: usize = 1 << 16;
const MAX_VERTEX_CANDIDATES: u128 = 1 << 23;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box bounds", upper.len(), lower.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidSet("box of dimension zero".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(Error::InvalidSet(format!(
                    "box coordinate {i}: [{l}, {u}] is empty"
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Farthest point from the origin is a corner; pick the larger magnitude per axis.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn support(&self, dir: &[f64]) -> f64 {
        dir.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(d, (l, u))| (d * l).max(d * u))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidSet("ball of dimension zero".into()));
        }
        if !(radius >= 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSet(
                "ball needs a finite center and radius >= 0".into(),
            ));
        }
        Ok(Ball { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let r = dist(x, &self.center);
        if r <= self.radius {
            return x.to_vec();
        }
        let s = self.radius / r;
        x.iter()
            .zip(&self.center)
            .map(|(v, c)| c + s * (v - c))
            .collect()
    }

    pub fn max_norm(&self) -> f64 {
        norm(&self.center) + self.radius
    }

    pub fn support(&self, dir: &[f64]) -> f64 {
        dot(dir, &self.center) + self.radius * norm(dir)
    }
}

/// `normal · x ≤ offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if norm(&normal) == 0.0 || !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSet(
                "halfspace needs a finite nonzero normal".into(),
            ));
        }
        Ok(Halfspace { normal, offset })
    }

    #[inline]
    fn project_into(&self, x: &mut [f64], nn: f64) {
        let excess = dot(&self.normal, x) - self.offset;
        if excess > 0.0 {
            let s = excess / nn;
            for (v, a) in x.iter_mut().zip(&self.normal) {
                *v -= s * a;
            }
        }
    }
}

/// Intersection of a bounding box with finitely many halfspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    bounds: BoxSet,
    halfspaces: Vec<Halfspace>,
    sq_norms: Vec<f64>,
}

impl Polytope {
    /// Rejects empty intersections (checked with a linear program).
    pub fn new(bounds: BoxSet, halfspaces: Vec<Halfspace>) -> Result<Self> {
        for h in &halfspaces {
            check_dim("halfspace normal", h.normal.len(), bounds.dim())?;
        }
        let sq_norms = halfspaces
            .iter()
            .map(|h| dot(&h.normal, &h.normal))
            .collect();
        let p = Polytope {
            bounds,
            halfspaces,
            sq_norms,
        };
        if !p.halfspaces.is_empty() {
            p.linear_max(&vec![0.0; p.dim()]).map_err(|e| match e {
                Error::LinearProgram(_) => Error::InvalidSet("polytope is empty".into()),
                other => other,
            })?;
        }
        Ok(p)
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }
    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn with_halfspace(&self, h: Halfspace) -> Result<Polytope> {
        let mut hs = self.halfspaces.clone();
        hs.push(h);
        Polytope::new(self.bounds.clone(), hs)
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .zip(&self.sq_norms)
            .map(|(h, nn)| ((dot(&h.normal, x) - h.offset) / nn.sqrt()).max(0.0))
            .fold(self.bounds.violation(x), f64::max)
    }

    /// Euclidean projection by Dykstra's alternating projections over the
    /// halfspaces and the box (box last, so the result is always inside it).
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.violation(x) == 0.0 {
            return Ok(x.to_vec());
        }
        if self.halfspaces.is_empty() {
            return Ok(self.bounds.project(x));
        }
        let d = x.len();
        let m = self.halfspaces.len() + 1;
        let mut y = x.to_vec();
        let mut incr = vec![vec![0.0; d]; m];
        let mut z = vec![0.0; d];
        let mut prev = vec![0.0; d];
        for _ in 0..DYKSTRA_MAX_SWEEPS {
            prev.copy_from_slice(&y);
            let mut inc_moved: f64 = 0.0;
            for (i, inc) in incr.iter_mut().enumerate() {
                for ((zk, yk), ik) in z.iter_mut().zip(&y).zip(inc.iter()) {
                    *zk = yk + ik;
                }
                y.copy_from_slice(&z);
                if i < m - 1 {
                    self.halfspaces[i].project_into(&mut y, self.sq_norms[i]);
                } else {
                    y = self.bounds.project(&y);
                }
                for ((ik, zk), yk) in inc.iter_mut().zip(&z).zip(&y) {
                    inc_moved = inc_moved.max((zk - yk - *ik).abs());
                    *ik = zk - yk;
                }
            }
            if dist(&prev, &y) <= DYKSTRA_TOL * (1.0 + norm(&y))
                && inc_moved <= DYKSTRA_TOL * (1.0 + norm(x))
                && self.violation(&y) <= DYKSTRA_TOL
            {
                return Ok(self.polish(x).unwrap_or(y));
            }
        }
        if let Some(p) = self.polish(x) {
            Ok(p)
        } else if self.violation(&y) <= 1e-9 {
            Ok(y)
        } else {
            Err(Error::Projection(format!(
                "Dykstra stopped after {DYKSTRA_MAX_SWEEPS} sweeps with violation {}",
                self.violation(&y)
            )))
        }
    }

    /// Exact projection as the least-distance program `min ‖u‖` subject to
    /// `a_i·(x + u) ≤ b_i`, solved through nonnegative least squares in
    /// coordinates centred on the box and scaled to unit size.
    fn polish(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = x.len();
        let center: Vec<f64> = self
            .bounds
            .lower
            .iter()
            .zip(&self.bounds.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect();
        let s = dist(x, &center).max(1.0);
        let xs: Vec<f64> = x.iter().zip(&center).map(|(v, c)| (v - c) / s).collect();
        let mut rows: Vec<(Vec<f64>, f64)> = self
            .halfspaces
            .iter()
            .map(|h| (h.normal.clone(), (h.offset - dot(&h.normal, &center)) / s))
            .collect();
        for i in 0..d {
            let half = 0.5 * (self.bounds.upper[i] - self.bounds.lower[i]) / s;
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            rows.push((e.clone(), half));
            e[i] = -1.0;
            rows.push((e, half));
        }
        let cols: Vec<Vec<f64>> = rows
            .iter()
            .map(|(a, b)| {
                let nn = norm(a);
                let mut c: Vec<f64> = a.iter().map(|v| -v / nn).collect();
                c.push((dot(a, &xs) - b) / nn);
                c
            })
            .collect();
        let mut target = vec![0.0; d + 1];
        target[d] = 1.0;
        let w = super::cone::nnls(&cols, &target).ok()?;
        let mut r: Vec<f64> = target.iter().map(|t| -t).collect();
        for (c, wj) in cols.iter().zip(&w) {
            for (rk, ck) in r.iter_mut().zip(c) {
                *rk += wj * ck;
            }
        }
        if r[d].abs() < 1e-12 {
            return None;
        }
        let p: Vec<f64> = (0..d)
            .map(|i| center[i] + s * (xs[i] - r[i] / r[d]))
            .collect();
        let p = self.bounds.project(&p);
        (self.violation(&p) <= 1e-12 * s).then_some(p)
    }

    /// `max dir·x` over the polytope and a maximiser, via a linear program.
    pub fn linear_max(&self, dir: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..self.dim())
            .map(|i| lp.add_var(dir[i], (self.bounds.lower[i], self.bounds.upper[i])))
            .collect();
        for h in &self.halfspaces {
            let expr: Vec<_> = vars.iter().copied().zip(h.normal.iter().copied()).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, h.offset);
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::LinearProgram(e.to_string()))?
            .into_solution()
            .map_err(|_| Error::LinearProgram("interrupted".into()))?;
        let x: Vec<f64> = vars.iter().map(|v| sol.var_value(*v)).collect();
        Ok((sol.objective(), x))
    }

    pub fn support(&self, dir: &[f64]) -> Result<f64> {
        if self.halfspaces.is_empty() {
            return Ok(self.bounds.support(dir));
        }
        self.linear_max(dir).map(|(v, _)| v)
    }

    /// Enumerates vertices. Every vertex has `d` independent active
    /// constraints: `h` halfspaces plus box faces on `d - h` distinct
    /// coordinates; the `h` remaining coordinates are solved for.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        self.for_each_vertex(|v| {
            let key: Vec<i64> = v.iter().map(|x| (x * 1e9).round() as i64).collect();
            if seen.insert(key) {
                out.push(v.to_vec());
            }
            out.len() <= MAX_VERTICES
        })?;
        if out.len() > MAX_VERTICES {
            return Err(Error::Unsupported {
                op: "vertex enumeration (> 2^16 vertices)",
                kind: "polytope",
            });
        }
        Ok(out)
    }

    /// Largest Euclidean norm over the polytope (attained at a vertex).
    pub fn max_norm(&self) -> Result<f64> {
        if self.halfspaces.is_empty() {
            return Ok(self.bounds.max_norm());
        }
        let mut best: f64 = 0.0;
        self.for_each_vertex(|v| {
            best = best.max(norm(v));
            true
        })?;
        Ok(best)
    }

    fn candidate_count(&self) -> u128 {
        let d = self.dim() as u128;
        let k = self.halfspaces.len() as u128;
        let binom = |n: u128, r: u128| -> u128 {
            if r > n {
                return 0;
            }
            (0..r).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
        };
        (0..=k.min(d))
            .map(|h| {
                binom(k, h)
                    .saturating_mul(binom(d, h))
                    .saturating_mul(1u128 << (d - h).min(100))
            })
            .fold(0u128, |a, b| a.saturating_add(b))
    }

    fn for_each_vertex<F: FnMut(&[f64]) -> bool>(&self, mut visit: F) -> Result<()> {
        if self.candidate_count() > MAX_VERTEX_CANDIDATES {
            return Err(Error::Unsupported {
                op: "vertex enumeration (too many candidates)",
                kind: "polytope",
            });
        }
        let d = self.dim();
        let k = self.halfspaces.len();
        let lo = &self.bounds.lower;
        let hi = &self.bounds.upper;
        let mut x = vec![0.0; d];
        for h in 0..=k.min(d) {
            for hs in combinations(k, h) {
                for free in combinations(d, h) {
                    let mut is_free = vec![false; d];
                    for &f in &free {
                        is_free[f] = true;
                    }
                    let fixed: Vec<usize> = (0..d).filter(|i| !is_free[*i]).collect();
                    let n_assign = 1u64 << fixed.len();
                    for mask in 0..n_assign {
                        // Skip duplicate assignments on degenerate axes.
                        if fixed
                            .iter()
                            .enumerate()
                            .any(|(bit, &i)| lo[i] == hi[i] && mask >> bit & 1 == 1)
                        {
                            continue;
                        }
                        for (bit, &i) in fixed.iter().enumerate() {
                            x[i] = if mask >> bit & 1 == 1 { hi[i] } else { lo[i] };
                        }
                        if h > 0 {
                            let a = DMatrix::from_fn(h, h, |r, c| {
                                self.halfspaces[hs[r]].normal[free[c]]
                            });
                            let b = DVector::from_fn(h, |r, _| {
                                let hsp = &self.halfspaces[hs[r]];
                                hsp.offset
                                    - fixed.iter().map(|&i| hsp.normal[i] * x[i]).sum::<f64>()
                            });
                            let Some(sol) = a.lu().solve(&b) else {
                                continue;
                            };
                            if sol.iter().any(|v| !v.is_finite()) {
                                continue;
                            }
                            for (c, &f) in free.iter().enumerate() {
                                x[f] = sol[c];
                            }
                        }
                        if self.violation(&x) <= 1e-9 * (1.0 + norm(&x)) && !visit(&x) {
                            return Ok(());
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// All `r`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if r > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let mut i = r;
        while i > 0 && idx[i - 1] == n - r + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
