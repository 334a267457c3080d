//! The `appropo` command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | feasible / complete |
//! | 1    | runtime failure |
//! | 2    | infeasible (or infeasible at the bisection floor) |
//! | 3    | empirically infeasible |
//! | 64   | usage or config error |

pub mod config;
mod plot;
pub mod runner;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::appropo::distance_bound;
use crate::env;
use crate::mdp::write_mdp;
use crate::Error;

pub use config::{
    Algorithm, CacheSettings, ExperimentConfig, GameDef, GameSetDef, LoadedConfig, MaximizeDef,
    MdpSource, TargetDef,
};
pub use runner::{
    execute, run_experiment, Artifacts, Execution, RunError, EXIT_CONFIG,
    EXIT_EMPIRICALLY_INFEASIBLE, EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_OK,
};

const EXIT_HELP: &str = "\
Exit codes:
  0   feasible / complete
  1   runtime failure
  2   infeasible (witness iteration in summary.json)
  3   empirically infeasible
  64  usage or config error";

#[derive(Debug, Parser)]
#[command(name = "appropo", version, about = "Constrained RL on vector-measurement MDPs", after_help = EXIT_HELP)]
pub struct Cli {
    /// Worker threads for sampled estimation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Generate a benchmark environment and its target presets.
    GenEnv(GenEnvArgs),
    /// Print the distance guarantee for the given parameters.
    Bounds(BoundsArgs),
    /// Run an experiment and write its policy cache as CSV.
    CacheDump(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnvName {
    Random,
    Gridworld,
}

#[derive(Debug, Args)]
pub struct GenEnvArgs {
    #[arg(long, value_enum)]
    pub name: EnvName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub states: usize,
    #[arg(long, default_value_t = 2)]
    pub actions: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, default_value_t = 3)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub height: usize,
    #[arg(long, default_value_t = 0.0)]
    pub slip: f64,
    /// Cap on the long-term unsafe measurement in the safety preset.
    #[arg(long, default_value_t = 1.0)]
    pub safety_threshold: f64,
    #[arg(long, default_value_t = 0.0)]
    pub visit_lo: f64,
    /// Defaults to `1/(1−γ)`.
    #[arg(long)]
    pub visit_hi: Option<f64>,
    /// Directory for `env.mdp` (and `presets.toml`); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Bound `B` on the measurement norm.
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps1: f64,
    /// Iterations `T`.
    #[arg(long)]
    pub t: usize,
    /// Lifting constant; requires `--delta`.
    #[arg(long, requires = "delta")]
    pub kappa: Option<f64>,
    #[arg(long, requires = "kappa")]
    pub delta: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Presets {
    safety: TargetDef,
    visitation_box: TargetDef,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("thread pool not configured: {e}");
        }
    }
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::CacheDump(a) => cmd_cache_dump(&a),
        Command::GenEnv(a) => cmd_gen_env(&a),
        Command::Bounds(a) => cmd_bounds(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(a: &RunArgs) -> Result<LoadedConfig, RunError> {
    let mut loaded = LoadedConfig::read(&a.config).map_err(RunError::Config)?;
    if let Some(s) = a.seed {
        loaded.config.seed = s;
    }
    Ok(loaded)
}

fn cmd_run(a: &RunArgs) -> Result<i32, RunError> {
    let loaded = load(a)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| loaded.config.output_dir.clone());
    let art = run_experiment(&loaded, &out)?;
    let summary = &art.summary_json;
    println!(
        "{}: {} (exit {})",
        loaded.config.algorithm.name(),
        summary["outcome"].as_str().unwrap_or("?"),
        art.exit_code
    );
    if let Some(d) = summary.get("distance").and_then(|d| d.as_f64()) {
        println!("distance: {d:.6e}");
    }
    if let Some(t) = summary.get("witness").and_then(|w| w.get("iteration")) {
        println!("infeasibility witness at iteration {t}");
    }
    println!("artifacts in {}", art.out_dir.display());
    Ok(art.exit_code)
}

fn cmd_cache_dump(a: &RunArgs) -> Result<i32, RunError> {
    let loaded = load(a)?;
    let exec = execute(&loaded)?;
    let Some(cache) = exec.cache() else {
        return Err(RunError::Config(
            loaded.error_at("algorithm", "solve_game has no policy cache"),
        ));
    };
    let io = |e: std::io::Error| RunError::Run(Error::Io(e));
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io)?;
            let f = std::fs::File::create(dir.join(runner::CACHE_FILE)).map_err(io)?;
            cache
                .write_csv(std::io::BufWriter::new(f))
                .map_err(RunError::Run)?;
        }
        None => cache
            .write_csv(std::io::stdout().lock())
            .map_err(RunError::Run)?,
    }
    Ok(exec.exit_code())
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Run(Error::Io(e));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join(name), text).map_err(io)
}

fn cmd_gen_env(a: &GenEnvArgs) -> Result<i32, RunError> {
    let (mdp_text, presets): (String, Option<String>) = match a.name {
        EnvName::Random => {
            let mdp = env::random_mdp(a.seed, a.states, a.actions, a.dim, a.gamma)
                .map_err(RunError::Config)?;
            (write_mdp(&mdp), None)
        }
        EnvName::Gridworld => {
            let g = env::gridworld(a.width, a.height, a.gamma, a.slip).map_err(RunError::Config)?;
            let hi = a.visit_hi.unwrap_or(1.0 / (1.0 - a.gamma));
            let safety = g
                .safety_preset(a.safety_threshold)
                .map_err(RunError::Config)?;
            let visit = g
                .visitation_box_preset(a.visit_lo, hi)
                .map_err(RunError::Config)?;
            let presets = Presets {
                safety: TargetDef::from_set(&safety).expect("polytope preset"),
                visitation_box: TargetDef::from_set(&visit).expect("box preset"),
            };
            let text = toml::to_string(&presets)
                .map_err(|e| RunError::Run(Error::Config(e.to_string())))?;
            (write_mdp(&g.mdp), Some(text))
        }
    };
    match &a.out {
        Some(dir) => {
            write_file(dir, "env.mdp", &mdp_text)?;
            if let Some(p) = &presets {
                write_file(dir, "presets.toml", p)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(mdp_text.as_bytes());
            if let Some(p) = &presets {
                let _ = writeln!(
                    out,
                    "\n# presets\n{}",
                    p.lines()
                        .map(|l| format!("# {l}"))
                        .collect::<Vec<_>>()
                        .join("\n")
                );
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<i32, RunError> {
    let lift = a.kappa.zip(a.delta);
    let v = distance_bound(a.b, a.gamma, a.eps0, a.eps1, a.t, lift).map_err(RunError::Config)?;
    println!("{v}");
    Ok(EXIT_OK)
}
