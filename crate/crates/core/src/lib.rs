//! Constrained reinforcement learning on vector-measurement MDPs.
//!
//! A policy is sought whose long-term (discounted) measurement vector lies in,
//! or as close as possible to, a convex target set. The problem is reduced to
//! a repeated zero-sum game: an online-gradient-descent player picks a
//! direction `λ` in the polar cone of the target, and a best-response (or
//! positive-response) RL oracle answers with a policy for the scalar reward
//! `r = -λ·z`. The uniform mixture of the oracle's answers approaches the
//! target at rate `O(T^{-1/2})`.
//!
//! Modules:
//! - [`mdp`]: vector-measurement MDPs, stationary and mixed policies, exact
//!   and sampled long-term measurements.
//! - [`convex`]: target sets, projections, polar cones and cone lifting.
//! - [`learner`]: online gradient descent with exact regret accounting.
//! - [`oracles`]: best/positive response, estimation and the policy cache.
//! - [`appropo`]: the game solver, distance minimisation, feasibility,
//!   lifted (non-cone) targets and binary-search reward maximisation.
//! - [`env`]: benchmark environment generators.
//! - [`cli`]: experiment configuration and the runner behind the binary.

pub mod appropo;
pub mod cli;
pub mod convex;
pub mod env;
mod error;
pub mod learner;
pub(crate) mod linalg;
pub mod mdp;
pub mod oracles;

pub use error::{Error, Result};
