//! Closed-form guarantees on the distance achieved by the mixed policy.

use crate::{Error, Result};

/// Slack term of the distance guarantee:
/// `(B/(1−γ) + ε1)/√T + ε0 + 2ε1`, or with `lift = Some((κ, δ))`,
/// `(1+δ)(((B+κ)/(1−γ) + ε1)/√T + ε0 + 2ε1)`.
pub fn distance_bound(
    b: f64,
    gamma: f64,
    eps0: f64,
    eps1: f64,
    t: usize,
    lift: Option<(f64, f64)>,
) -> Result<f64> {
    distance_rhs(0.0, b, gamma, eps0, eps1, t, lift)
}

/// Full right-hand side given the best achievable distance `min_dist`.
pub fn distance_rhs(
    min_dist: f64,
    b: f64,
    gamma: f64,
    eps0: f64,
    eps1: f64,
    t: usize,
    lift: Option<(f64, f64)>,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if t == 0 {
        return Err(Error::Parameter("T must be at least 1".into()));
    }
    if [b, eps0, eps1, min_dist]
        .iter()
        .any(|v| !(*v >= 0.0 && v.is_finite()))
    {
        return Err(Error::Parameter(
            "B, eps0, eps1 and min_dist must be finite and >= 0".into(),
        ));
    }
    let root_t = (t as f64).sqrt();
    match lift {
        None => Ok(min_dist + (b / (1.0 - gamma) + eps1) / root_t + eps0 + 2.0 * eps1),
        Some((kappa, delta)) => {
            if !(kappa > 0.0 && delta >= 0.0) {
                return Err(Error::Parameter(
                    "lifted bound needs kappa > 0 and delta >= 0".into(),
                ));
            }
            let inner = ((b + kappa) / (1.0 - gamma) + eps1) / root_t + eps0 + 2.0 * eps1;
            Ok((1.0 + delta) * (min_dist + inner))
        }
    }
}

/// Default step size `((B[+κ])/(1−γ) + ε1)^{-1} T^{-1/2}`.
pub fn default_eta(b: f64, gamma: f64, eps1: f64, t: usize, kappa: Option<f64>) -> f64 {
    let g = (b + kappa.unwrap_or(0.0)) / (1.0 - gamma) + eps1;
    1.0 / (g * (t as f64).sqrt())
}
