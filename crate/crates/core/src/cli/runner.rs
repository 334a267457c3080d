//! Executes an experiment config and writes its artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::appropo::{
    maximize_reward_with_cache, run_cone, run_lifted, solve_game, FeasibilityOutcome, GameSolution,
    MaximizeConfig, MaximizeOutcome, MaximizeResult, RunOptions, RunReport, RunTrace, Variant,
};
use crate::convex::LiftedCone;
use crate::mdp::{MixedPolicy, VectorMdp};
use crate::oracles::PolicyCache;
use crate::{Error, Result};

use super::config::{Algorithm, LoadedConfig};
use super::plot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_EMPIRICALLY_INFEASIBLE: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CACHE_FILE: &str = "cache.csv";

/// What an experiment produced before anything is written.
#[derive(Debug)]
pub enum Execution {
    Run {
        report: RunReport,
        mdp: VectorMdp,
        cache: PolicyCache,
    },
    Maximize {
        result: MaximizeResult,
        mdp: VectorMdp,
        cache: PolicyCache,
    },
    Game {
        solution: GameSolution,
    },
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        match self {
            Execution::Run { report, .. } => match report.outcome {
                FeasibilityOutcome::Feasible { .. } => EXIT_OK,
                FeasibilityOutcome::Infeasible { .. } => EXIT_INFEASIBLE,
                FeasibilityOutcome::EmpiricallyInfeasible { .. } => EXIT_EMPIRICALLY_INFEASIBLE,
            },
            Execution::Maximize { result, .. } => match result.outcome {
                MaximizeOutcome::Found { .. } => EXIT_OK,
                MaximizeOutcome::InfeasibleAtFloor => EXIT_INFEASIBLE,
            },
            Execution::Game { .. } => EXIT_OK,
        }
    }

    pub fn cache(&self) -> Option<&PolicyCache> {
        match self {
            Execution::Run { cache, .. } | Execution::Maximize { cache, .. } => Some(cache),
            Execution::Game { .. } => None,
        }
    }
}

/// Failure while preparing (exit 64) or while running (exit 1).
#[derive(Debug)]
pub enum RunError {
    Config(Error),
    Run(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Run(_) => EXIT_FAILURE,
        }
    }
    pub fn error(&self) -> &Error {
        match self {
            RunError::Config(e) | RunError::Run(e) => e,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error().fmt(f)
    }
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub out_dir: PathBuf,
    pub trace: PathBuf,
    pub summary: PathBuf,
    /// `None` when plotting failed.
    pub plot: Option<PathBuf>,
    pub exit_code: i32,
    pub summary_json: Value,
}

fn run_options(loaded: &LoadedConfig) -> RunOptions {
    let c = &loaded.config;
    RunOptions {
        iterations: c.iterations,
        eta: c.eta,
        use_cache: c.cache.enabled,
        cache_init: c.cache.init,
        stop_at_distance: c.stop_at_distance,
        seed: c.seed,
    }
}

/// Builds the environment and target, then runs the configured algorithm.
pub fn execute(loaded: &LoadedConfig) -> std::result::Result<Execution, RunError> {
    let c = &loaded.config;
    if c.algorithm == Algorithm::SolveGame {
        let cfg = loaded.game_config().map_err(RunError::Config)?;
        let solution = solve_game(&cfg).map_err(RunError::Run)?;
        return Ok(Execution::Game { solution });
    }
    let built = loaded.build_mdp().map_err(RunError::Config)?;
    let target = loaded.build_target(&built).map_err(RunError::Config)?;
    let lifted = || -> Result<LiftedCone> {
        match c.kappa {
            Some(k) => LiftedCone::with_kappa(target.clone(), k),
            None => LiftedCone::new(target.clone(), loaded.config.lift_delta()),
        }
    };
    let opts = run_options(loaded);
    let mdp = built.mdp;
    let mut cache = PolicyCache::new();
    match c.algorithm {
        Algorithm::Appropo | Algorithm::Feasibility => {
            let variant = if c.algorithm == Algorithm::Appropo {
                Variant::Distance
            } else {
                Variant::Feasibility
            };
            let report = run_cone(&mdp, &target, &c.oracle, &opts, variant, &mut cache)
                .map_err(RunError::Run)?;
            Ok(Execution::Run { report, mdp, cache })
        }
        Algorithm::General => {
            let lifted = lifted().map_err(|e| RunError::Config(loaded.error_at("target", e)))?;
            let variant = c.variant.unwrap_or(Variant::Distance);
            let report = run_lifted(&mdp, &lifted, &c.oracle, &opts, variant, &mut cache)
                .map_err(RunError::Run)?;
            Ok(Execution::Run { report, mdp, cache })
        }
        Algorithm::MaximizeReward => {
            let m = c.maximize.as_ref().expect("validated");
            if m.reward_coord >= mdp.dim() {
                return Err(RunError::Config(loaded.error_at(
                    "maximize",
                    format!("reward_coord {} out of range {}", m.reward_coord, mdp.dim()),
                )));
            }
            let mc = MaximizeConfig {
                reward_coord: m.reward_coord,
                lo: m.lo,
                hi: m.hi,
                steps: m.steps,
                delta: loaded.config.lift_delta(),
                kappa: c.kappa,
            };
            let result =
                maximize_reward_with_cache(&mdp, &target, &mc, &c.oracle, &opts, &mut cache)
                    .map_err(RunError::Run)?;
            Ok(Execution::Maximize { result, mdp, cache })
        }
        Algorithm::SolveGame => unreachable!(),
    }
}

/// Runs the experiment and writes `trace.csv`, `summary.json` and a plot into `out_dir`.
pub fn run_experiment(
    loaded: &LoadedConfig,
    out_dir: &Path,
) -> std::result::Result<Artifacts, RunError> {
    let exec = execute(loaded)?;
    write_artifacts(loaded, &exec, out_dir).map_err(RunError::Run)
}

pub fn write_artifacts(
    loaded: &LoadedConfig,
    exec: &Execution,
    out_dir: &Path,
) -> Result<Artifacts> {
    std::fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join(TRACE_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    let mut w = BufWriter::new(File::create(&trace_path)?);
    let (summary, plot_result) = match exec {
        Execution::Run { report, mdp, .. } => {
            report.trace.write_csv(&mut w)?;
            (
                run_summary(loaded, report, mdp)?,
                plot_distance(&report.trace, out_dir),
            )
        }
        Execution::Maximize { result, mdp, .. } => {
            let shown = shown_step(result);
            let empty = RunTrace::default();
            let trace = shown.map_or(&empty, |r| &r.trace);
            trace.write_csv(&mut w)?;
            (
                maximize_summary(loaded, result, mdp, shown)?,
                plot_distance(trace, out_dir),
            )
        }
        Execution::Game { solution } => {
            write_game_csv(solution, &mut w)?;
            (
                game_summary(loaded, solution),
                plot_payoff(solution, out_dir),
            )
        }
    };
    w.flush()?;
    let plot = match plot_result {
        Ok(p) => Some(p),
        Err(e) => {
            log::warn!("plot not written ({e}); CSV output is unaffected");
            None
        }
    };
    let mut s = BufWriter::new(File::create(&summary_path)?);
    serde_json::to_writer_pretty(&mut s, &summary).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(s)?;
    s.flush()?;
    Ok(Artifacts {
        out_dir: out_dir.to_path_buf(),
        trace: trace_path,
        summary: summary_path,
        plot,
        exit_code: exec.exit_code(),
        summary_json: summary,
    })
}

/// The bisection step whose trace is written: the accepted threshold, else the last step that ran.
fn shown_step(result: &MaximizeResult) -> Option<&RunReport> {
    let accepted = result.threshold();
    result
        .steps
        .iter()
        .rev()
        .find(|s| s.feasible && Some(s.threshold) == accepted)
        .or_else(|| result.steps.iter().rev().find(|s| s.ran))
        .and_then(|s| s.report.as_ref())
}

fn plot_distance(trace: &RunTrace, out_dir: &Path) -> std::result::Result<PathBuf, String> {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .map(|r| (r.t as f64, r.running_distance))
        .collect();
    let path = out_dir.join("distance.svg");
    plot::line_svg(&path, "running distance to target", "distance", &pts, None)?;
    Ok(path)
}

fn plot_payoff(sol: &GameSolution, out_dir: &Path) -> std::result::Result<PathBuf, String> {
    let mut sum = 0.0;
    let pts: Vec<(f64, f64)> = sol
        .rounds
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += r.payoff;
            ((i + 1) as f64, sum / (i + 1) as f64)
        })
        .collect();
    let path = out_dir.join("payoff.svg");
    plot::line_svg(
        &path,
        "average payoff",
        "payoff",
        &pts,
        Some(sol.certificate.value),
    )?;
    Ok(path)
}

fn write_game_csv<W: Write>(sol: &GameSolution, mut w: W) -> Result<()> {
    let (ld, ud) = sol
        .rounds
        .first()
        .map_or((0, 0), |r| (r.lambda.len(), r.u.len()));
    let mut header = vec!["t".to_string()];
    header.extend((0..ld).map(|i| format!("lambda_{i}")));
    header.extend((0..ud).map(|i| format!("u_{i}")));
    header.push("payoff".into());
    writeln!(w, "{}", header.join(","))?;
    for (t, r) in sol.rounds.iter().enumerate() {
        let mut line = (t + 1).to_string();
        for v in r.lambda.iter().chain(&r.u).chain([&r.payoff]) {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn mixture_json(mdp: &VectorMdp, mixed: &MixedPolicy) -> Result<Value> {
    let components: Vec<Value> = mixed
        .components()
        .map(|(p, w)| match p.as_deterministic() {
            Some(a) => json!({ "weight": w, "actions": a }),
            None => {
                let rows: Vec<&[f64]> = (0..p.num_states()).map(|s| p.row(s)).collect();
                json!({ "weight": w, "probabilities": rows })
            }
        })
        .collect();
    Ok(json!({ "z_bar": mdp.mixed_measurement(mixed)?, "components": components }))
}

fn report_json(report: &RunReport, mdp: &VectorMdp) -> Result<Value> {
    let t = &report.trace;
    let mut v = json!({
        "variant": report.variant,
        "outcome": report.outcome.label(),
        "iterations_run": t.len(),
        "distance": report.distance(),
        "bound_slack": report.bound_slack,
        "eta": report.eta,
        "eps0": report.eps0,
        "eps1": report.eps1,
        "oracle_calls": t.oracle_calls,
        "cache_hits": t.cache_hits,
        "cache_misses": t.cache_misses,
        "episodes": t.episodes,
        "wall_clock_secs": t.wall_clock_secs,
    });
    let o = v.as_object_mut().expect("object");
    match &report.outcome {
        FeasibilityOutcome::Feasible { mixed, .. } => {
            o.insert("mixture".into(), mixture_json(mdp, mixed)?);
        }
        FeasibilityOutcome::Infeasible {
            iteration,
            witness,
            loss,
            threshold,
        } => {
            o.insert(
                "witness".into(),
                json!({ "iteration": iteration, "lambda": witness, "loss": loss, "threshold": threshold }),
            );
        }
        FeasibilityOutcome::EmpiricallyInfeasible {
            iteration,
            lambda,
            trailing_mean,
            episodes,
        } => {
            o.insert(
                "empirical".into(),
                json!({ "iteration": iteration, "lambda": lambda, "trailing_mean": trailing_mean, "episodes": episodes }),
            );
        }
    }
    if let Some(l) = &report.lift {
        o.insert(
            "lift".into(),
            json!({ "kappa": l.kappa, "delta": l.delta, "lifted_distance": l.lifted_distance }),
        );
    }
    Ok(v)
}

fn header(loaded: &LoadedConfig, exit_code: i32) -> Value {
    let c = &loaded.config;
    json!({
        "config": loaded.path,
        "algorithm": c.algorithm.name(),
        "seed": c.seed,
        "iterations": c.iterations,
        "exit_code": exit_code,
    })
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(x), Value::Object(y)) = (a.as_object_mut(), b) {
        x.extend(y);
    }
    a
}

fn run_summary(loaded: &LoadedConfig, report: &RunReport, mdp: &VectorMdp) -> Result<Value> {
    let code = match report.outcome {
        FeasibilityOutcome::Feasible { .. } => EXIT_OK,
        FeasibilityOutcome::Infeasible { .. } => EXIT_INFEASIBLE,
        FeasibilityOutcome::EmpiricallyInfeasible { .. } => EXIT_EMPIRICALLY_INFEASIBLE,
    };
    Ok(merge(header(loaded, code), report_json(report, mdp)?))
}

fn maximize_summary(
    loaded: &LoadedConfig,
    result: &MaximizeResult,
    mdp: &VectorMdp,
    shown: Option<&RunReport>,
) -> Result<Value> {
    let (code, label, mixture) = match &result.outcome {
        MaximizeOutcome::Found { mixed, .. } => (EXIT_OK, "found", Some(mixture_json(mdp, mixed)?)),
        MaximizeOutcome::InfeasibleAtFloor => (EXIT_INFEASIBLE, "infeasible_at_floor", None),
    };
    let steps: Vec<Value> = result
        .steps
        .iter()
        .map(|s| {
            json!({
                "threshold": s.threshold,
                "feasible": s.feasible,
                "ran": s.ran,
                "oracle_calls": s.oracle_calls,
                "cache_hits": s.cache_hits,
                "outcome": s.report.as_ref().map(|r| r.outcome.label()),
            })
        })
        .collect();
    let body = json!({
        "outcome": label,
        "threshold": result.threshold(),
        "mixture": mixture,
        "oracle_calls": result.oracle_calls,
        "cache_hits": result.cache_hits,
        "cache_misses": result.cache_misses,
        "bisection": steps,
        "trace_step": shown.map(|r| report_json(r, mdp)).transpose()?,
    });
    Ok(merge(header(loaded, code), body))
}

fn game_summary(loaded: &LoadedConfig, sol: &GameSolution) -> Value {
    let c = &sol.certificate;
    let body = json!({
        "outcome": "complete",
        "lambda_bar": sol.lambda_bar,
        "u_bar": sol.u_bar,
        "certificate": {
            "realized_regret": c.realized_regret,
            "delta": c.delta,
            "lower": c.lower,
            "upper": c.upper,
            "value": c.value,
            "lower_ok": c.lower_ok,
            "upper_ok": c.upper_ok,
            "start_radius": c.diameter,
            "gradient_bound": c.gradient_bound,
            "regret_bound": c.regret_bound,
            "eta": c.eta,
        },
    });
    merge(header(loaded, EXIT_OK), body)
}
