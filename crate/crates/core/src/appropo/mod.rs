//! Top-level algorithms: the bilinear game solver, distance minimisation and
//! feasibility for cone targets, lifted runs for compact targets, and reward
//! maximisation by bisection.

mod bounds;
mod game;
mod run;
mod search;
mod trace;

pub use bounds::{default_eta, distance_bound, distance_rhs};
pub use game::{
    game_value, solve_game, Certificate, GameConfig, GameRound, GameSet, GameSolution, GAP_TOL,
};
pub use run::{
    run_appropo, run_cone, run_feasibility, run_general, run_lifted, FeasibilityOutcome, LiftInfo,
    RunOptions, RunReport, Variant,
};
pub use search::{
    maximize_reward, maximize_reward_with_cache, MaximizeConfig, MaximizeOutcome, MaximizeResult,
    SearchStep,
};
pub use trace::{RunTrace, TraceRecord};
