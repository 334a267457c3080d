//! Closed convex target sets, their projections, and polar-cone geometry.
//!
//! Compact sets (boxes, balls, polytopes) support distance and support-function
//! queries. Cones additionally expose the polar cone `C°` and the set
//! `Λ = C° ∩ B` of dual directions used by the learner.

mod cone;
mod lifted;
mod polytope;

pub use cone::GeneratorCone;
pub use lifted::LiftedCone;
pub use polytope::{
    Ball, BoxSet, Halfspace, Polytope, DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL, MAX_VERTICES,
};

use crate::linalg::{check_dim, dist, norm, sub};
use crate::{Error, Result};

/// Polar residuals below this multiple of `1 + ‖x‖` are treated as zero.
const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSet {
    Box(BoxSet),
    Ball(Ball),
    Polytope(Polytope),
    Cone(GeneratorCone),
    Lifted(LiftedCone),
}

impl From<BoxSet> for TargetSet {
    fn from(s: BoxSet) -> Self {
        TargetSet::Box(s)
    }
}
impl From<Ball> for TargetSet {
    fn from(s: Ball) -> Self {
        TargetSet::Ball(s)
    }
}
impl From<Polytope> for TargetSet {
    fn from(s: Polytope) -> Self {
        TargetSet::Polytope(s)
    }
}
impl From<GeneratorCone> for TargetSet {
    fn from(s: GeneratorCone) -> Self {
        TargetSet::Cone(s)
    }
}
impl From<LiftedCone> for TargetSet {
    fn from(s: LiftedCone) -> Self {
        TargetSet::Lifted(s)
    }
}

/// Lifts a compact set to `cone(C × {κ})` with `κ = max‖x‖/√(2δ)`.
pub fn lift(base: TargetSet, delta: f64) -> Result<TargetSet> {
    LiftedCone::new(base, delta).map(TargetSet::Lifted)
}

impl TargetSet {
    pub fn dim(&self) -> usize {
        match self {
            TargetSet::Box(s) => s.dim(),
            TargetSet::Ball(s) => s.center().len(),
            TargetSet::Polytope(s) => s.dim(),
            TargetSet::Cone(s) => s.dim(),
            TargetSet::Lifted(s) => s.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TargetSet::Box(_) => "box",
            TargetSet::Ball(_) => "ball",
            TargetSet::Polytope(_) => "polytope",
            TargetSet::Cone(_) => "cone",
            TargetSet::Lifted(_) => "lifted cone",
        }
    }

    pub fn is_cone(&self) -> bool {
        matches!(self, TargetSet::Cone(_) | TargetSet::Lifted(_))
    }

    pub fn is_compact(&self) -> bool {
        matches!(
            self,
            TargetSet::Box(_) | TargetSet::Ball(_) | TargetSet::Polytope(_)
        )
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point", x.len(), self.dim())?;
        match self {
            TargetSet::Box(s) => Ok(s.project(x)),
            TargetSet::Ball(s) => Ok(s.project(x)),
            TargetSet::Polytope(s) => s.project(x),
            TargetSet::Cone(s) => s.project(x),
            TargetSet::Lifted(s) => s.project(x),
        }
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        Ok(dist(x, &self.project(x)?))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        check_dim("point", x.len(), self.dim())?;
        match self {
            TargetSet::Box(s) => Ok(s.violation(x) <= tol),
            TargetSet::Ball(s) => Ok(dist(x, s.center()) <= s.radius() + tol),
            TargetSet::Polytope(s) => Ok(s.violation(x) <= tol),
            _ => Ok(self.distance(x)? <= tol),
        }
    }

    /// Largest norm of a point in the set; compact sets only.
    pub fn max_norm(&self) -> Result<f64> {
        match self {
            TargetSet::Box(s) => Ok(s.max_norm()),
            TargetSet::Ball(s) => Ok(s.max_norm()),
            TargetSet::Polytope(s) => s.max_norm(),
            _ => Err(Error::Unsupported {
                op: "max_norm",
                kind: self.kind_name(),
            }),
        }
    }

    /// Support function `σ(d) = max_{x∈C} d·x`; compact sets only.
    pub fn support(&self, dir: &[f64]) -> Result<f64> {
        check_dim("direction", dir.len(), self.dim())?;
        match self {
            TargetSet::Box(s) => Ok(s.support(dir)),
            TargetSet::Ball(s) => Ok(s.support(dir)),
            TargetSet::Polytope(s) => s.support(dir),
            _ => Err(Error::Unsupported {
                op: "support",
                kind: self.kind_name(),
            }),
        }
    }

    fn require_cone(&self, op: &'static str) -> Result<()> {
        if self.is_cone() {
            Ok(())
        } else {
            Err(Error::Unsupported {
                op,
                kind: self.kind_name(),
            })
        }
    }

    /// Projection onto the polar cone, `x − Γ_C(x)`.
    pub fn project_polar(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_cone("project_polar")?;
        Ok(sub(x, &self.project(x)?))
    }

    /// Projection onto `Λ = C° ∩ B`: the polar projection clipped to the unit ball.
    pub fn project_lambda(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.project_polar(x)?;
        let s = norm(&r).max(1.0);
        Ok(r.into_iter().map(|v| v / s).collect())
    }

    pub fn polar_contains(&self, lambda: &[f64], tol: f64) -> Result<bool> {
        check_dim("lambda", lambda.len(), self.dim())?;
        match self {
            TargetSet::Cone(c) => Ok(c.polar_contains(lambda, tol)),
            TargetSet::Lifted(c) => c.polar_contains(lambda, tol),
            _ => Err(Error::Unsupported {
                op: "polar_contains",
                kind: self.kind_name(),
            }),
        }
    }

    /// `dist(x, C)` together with a maximiser of `λ·x` over `Λ`: `r/‖r‖` for
    /// `r = x − Γ_C(x)`, or zero when `x ∈ C` up to round-off.
    pub fn lambda_maximizer(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.project_polar(x)?;
        let n = norm(&r);
        if n <= RESIDUAL_TOL * (1.0 + norm(x)) {
            return Ok((0.0, vec![0.0; x.len()]));
        }
        Ok((n, r.into_iter().map(|v| v / n).collect()))
    }
}

/// `Λ = C° ∩ B` for a cone `C`: the learner's decision set.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSet {
    cone: TargetSet,
}

impl LambdaSet {
    pub fn new(cone: TargetSet) -> Result<Self> {
        cone.require_cone("LambdaSet")?;
        Ok(LambdaSet { cone })
    }

    pub fn cone(&self) -> &TargetSet {
        &self.cone
    }

    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.cone.project_lambda(x)
    }

    pub fn contains(&self, lambda: &[f64], tol: f64) -> Result<bool> {
        Ok(norm(lambda) <= 1.0 + tol && self.cone.polar_contains(lambda, tol)?)
    }

    /// `max_{λ∈Λ} λ·x`, which equals `dist(x, C)`, and its maximiser.
    pub fn maximize_linear(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.cone.lambda_maximizer(x)
    }
}
