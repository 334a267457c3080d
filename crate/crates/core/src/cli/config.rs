//! Experiment configuration: one TOML file per experiment.
//!
//! ```toml
//! seed = 7
//! algorithm = "appropo"
//! iterations = 500
//!
//! [mdp]
//! source = "random"
//! states = 6
//! actions = 2
//! dim = 2
//! gamma = 0.9
//!
//! [target]
//! kind = "nonpositive_orthant"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::appropo::{GameConfig, GameSet, Variant};
use crate::convex::{Ball, BoxSet, GeneratorCone, Halfspace, Polytope, TargetSet};
use crate::env::{self, Gridworld};
use crate::learner::Simplex;
use crate::mdp::{parse_mdp, read_mdp_file, VectorMdp};
use crate::oracles::{derive_seed, OracleConfig};
use crate::{Error, Result};

const MDP_SEED_STREAM: u64 = 0x6d64_7000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Appropo,
    Feasibility,
    General,
    MaximizeReward,
    SolveGame,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Appropo => "appropo",
            Algorithm::Feasibility => "feasibility",
            Algorithm::General => "general",
            Algorithm::MaximizeReward => "maximize_reward",
            Algorithm::SolveGame => "solve_game",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// The MDP text format embedded in the config.
    Inline { text: String },
    /// Path to an MDP file, relative to the config file.
    File { path: PathBuf },
    Random {
        states: usize,
        actions: usize,
        dim: usize,
        gamma: f64,
        /// Defaults to a stream derived from the experiment seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Gridworld {
        width: usize,
        height: usize,
        gamma: f64,
        #[serde(default)]
        slip: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetDef {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Polytope {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default)]
        halfspaces: Vec<Halfspace>,
    },
    Cone {
        generators: Vec<Vec<f64>>,
    },
    NonpositiveOrthant,
    NonnegativeOrthant,
    WholeSpace,
    /// Gridworld only: long-term unsafe measurement at most `threshold`.
    Safety {
        threshold: f64,
    },
    /// Gridworld only: per-cell long-term visitation in `[lo, hi]`.
    VisitationBox {
        lo: f64,
        hi: f64,
    },
}

impl TargetDef {
    pub fn is_cone(&self) -> bool {
        matches!(
            self,
            TargetDef::Cone { .. }
                | TargetDef::NonpositiveOrthant
                | TargetDef::NonnegativeOrthant
                | TargetDef::WholeSpace
        )
    }

    fn kind(&self) -> &'static str {
        match self {
            TargetDef::Box { .. } => "box",
            TargetDef::Ball { .. } => "ball",
            TargetDef::Polytope { .. } => "polytope",
            TargetDef::Cone { .. } => "cone",
            TargetDef::NonpositiveOrthant => "nonpositive_orthant",
            TargetDef::NonnegativeOrthant => "nonnegative_orthant",
            TargetDef::WholeSpace => "whole_space",
            TargetDef::Safety { .. } => "safety",
            TargetDef::VisitationBox { .. } => "visitation_box",
        }
    }

    pub fn build(&self, dim: usize, grid: Option<&Gridworld>) -> Result<TargetSet> {
        let need_grid = || {
            grid.ok_or_else(|| {
                Error::Config(format!("target `{}` needs a gridworld MDP", self.kind()))
            })
        };
        let set: TargetSet = match self {
            TargetDef::Box { lower, upper } => BoxSet::new(lower.clone(), upper.clone())?.into(),
            TargetDef::Ball { center, radius } => Ball::new(center.clone(), *radius)?.into(),
            TargetDef::Polytope {
                lower,
                upper,
                halfspaces,
            } => {
                let hs = halfspaces
                    .iter()
                    .map(|h| Halfspace::new(h.normal.clone(), h.offset))
                    .collect::<Result<Vec<_>>>()?;
                Polytope::new(BoxSet::new(lower.clone(), upper.clone())?, hs)?.into()
            }
            TargetDef::Cone { generators } => GeneratorCone::new(dim, generators.clone())?.into(),
            TargetDef::NonpositiveOrthant => GeneratorCone::nonpositive_orthant(dim).into(),
            TargetDef::NonnegativeOrthant => GeneratorCone::nonnegative_orthant(dim).into(),
            TargetDef::WholeSpace => GeneratorCone::whole_space(dim).into(),
            TargetDef::Safety { threshold } => need_grid()?.safety_preset(*threshold)?,
            TargetDef::VisitationBox { lo, hi } => need_grid()?.visitation_box_preset(*lo, *hi)?,
        };
        if set.dim() != dim {
            return Err(Error::Dimension(format!(
                "target has dimension {}, MDP has {dim}",
                set.dim()
            )));
        }
        Ok(set)
    }

    /// Explicit form of a box or polytope set.
    pub fn from_set(set: &TargetSet) -> Option<TargetDef> {
        match set {
            TargetSet::Box(b) => Some(TargetDef::Box {
                lower: b.lower().to_vec(),
                upper: b.upper().to_vec(),
            }),
            TargetSet::Polytope(p) => Some(TargetDef::Polytope {
                lower: p.bounds().lower().to_vec(),
                upper: p.bounds().upper().to_vec(),
                halfspaces: p.halfspaces().to_vec(),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSettings {
    pub enabled: bool,
    /// Random deterministic policies placed in the cache before the first iteration.
    pub init: usize,
}

impl Default for CacheSettings {
    fn default() -> Self {
        CacheSettings {
            enabled: true,
            init: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaximizeDef {
    #[serde(default)]
    pub reward_coord: usize,
    pub lo: f64,
    pub hi: f64,
    /// Bisection steps `K`.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSetDef {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Simplex { n: usize },
}

impl GameSetDef {
    fn build(&self) -> Result<GameSet> {
        Ok(match self {
            GameSetDef::Box { lower, upper } => {
                GameSet::Box(BoxSet::new(lower.clone(), upper.clone())?)
            }
            GameSetDef::Simplex { n } => GameSet::Simplex(Simplex::new(*n)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDef {
    /// Row `i` holds the coefficients of `λ_i`.
    pub payoff: Vec<Vec<f64>>,
    pub lambda_set: GameSetDef,
    pub u_set: GameSetDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Distance or feasibility mode for `general`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_distance: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetDef>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub cache: CacheSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximize: Option<MaximizeDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameDef>,
}

fn default_iterations() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

pub const DEFAULT_DELTA: f64 = 0.5;

/// A parsed config together with where it came from, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: String,
    pub base_dir: PathBuf,
    text: String,
}

/// An MDP built from a config, with the gridworld structure when there is one.
#[derive(Debug, Clone)]
pub struct BuiltMdp {
    pub mdp: VectorMdp,
    pub grid: Option<Gridworld>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn lift_delta(&self) -> f64 {
        self.delta.unwrap_or(DEFAULT_DELTA)
    }
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: cannot read config: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), base_dir)
    }

    pub fn parse(text: &str, path: &str, base_dir: PathBuf) -> Result<Self> {
        let config = ExperimentConfig::from_toml(text).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of_offset(text, s.start));
            Error::Parse {
                path: path.to_string(),
                line,
                msg: e.message().to_string(),
            }
        })?;
        let loaded = LoadedConfig {
            config,
            path: path.to_string(),
            base_dir,
            text: text.to_string(),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    /// Error located at the line where `key` (a table or top-level key) appears.
    pub fn error_at(&self, key: &str, msg: impl std::fmt::Display) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: locate(&self.text, key),
            msg: msg.to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.iterations == 0 {
            return Err(self.error_at("iterations", "iterations must be at least 1"));
        }
        for (key, v) in [("eta", c.eta), ("delta", c.delta), ("kappa", c.kappa)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(self.error_at(key, format!("{key} must be positive, got {v}")));
                }
            }
        }
        c.oracle
            .validate()
            .map_err(|e| self.error_at("oracle", e))?;
        let is_game = c.algorithm == Algorithm::SolveGame;
        if is_game {
            let Some(g) = &c.game else {
                return Err(self.error_at("algorithm", "solve_game needs a [game] table"));
            };
            self.game_config_of(g)?;
            return Ok(());
        }
        let Some(mdp) = &c.mdp else {
            return Err(self.error_at(
                "algorithm",
                format!("{} needs an [mdp] table", c.algorithm.name()),
            ));
        };
        self.check_mdp_source(mdp)?;
        let Some(target) = &c.target else {
            return Err(self.error_at(
                "algorithm",
                format!("{} needs a [target] table", c.algorithm.name()),
            ));
        };
        match c.algorithm {
            Algorithm::Appropo | Algorithm::Feasibility if !target.is_cone() => {
                return Err(self.error_at(
                    "target",
                    format!(
                        "{} needs a cone target, got `{}`",
                        c.algorithm.name(),
                        target.kind()
                    ),
                ));
            }
            Algorithm::General | Algorithm::MaximizeReward if target.is_cone() => {
                return Err(self.error_at(
                    "target",
                    format!(
                        "{} needs a compact target, got `{}`",
                        c.algorithm.name(),
                        target.kind()
                    ),
                ));
            }
            _ => {}
        }
        let grid_only = matches!(
            target,
            TargetDef::Safety { .. } | TargetDef::VisitationBox { .. }
        );
        if grid_only && !matches!(mdp, MdpSource::Gridworld { .. }) {
            return Err(self.error_at(
                "target",
                format!("target `{}` needs a gridworld MDP", target.kind()),
            ));
        }
        if c.algorithm == Algorithm::MaximizeReward {
            let Some(m) = &c.maximize else {
                return Err(self.error_at("algorithm", "maximize_reward needs a [maximize] table"));
            };
            if !(m.lo <= m.hi) || !m.lo.is_finite() || !m.hi.is_finite() {
                return Err(self.error_at(
                    "maximize",
                    format!("need lo <= hi, got [{}, {}]", m.lo, m.hi),
                ));
            }
            if matches!(target, TargetDef::Ball { .. }) {
                return Err(
                    self.error_at("target", "maximize_reward needs a box or polytope base set")
                );
            }
        }
        if let Some(s) = c.stop_at_distance {
            if !(s >= 0.0) {
                return Err(self.error_at("stop_at_distance", "stop_at_distance must be >= 0"));
            }
        }
        Ok(())
    }

    fn check_mdp_source(&self, src: &MdpSource) -> Result<()> {
        match src {
            MdpSource::File { path } => {
                let p = self.base_dir.join(path);
                if !p.is_file() {
                    return Err(
                        self.error_at("mdp", format!("MDP file {} does not exist", p.display()))
                    );
                }
            }
            MdpSource::Random {
                states,
                actions,
                dim,
                ..
            } => {
                let ok = (1..=env::MAX_STATES).contains(states)
                    && (1..=env::MAX_ACTIONS).contains(actions)
                    && (1..=env::MAX_DIM).contains(dim);
                if !ok {
                    return Err(self.error_at(
                        "mdp",
                        format!(
                            "random MDP sizes must satisfy states <= {}, actions <= {}, dim <= {} (all >= 1)",
                            env::MAX_STATES,
                            env::MAX_ACTIONS,
                            env::MAX_DIM
                        ),
                    ));
                }
            }
            MdpSource::Gridworld { width, height, .. } => {
                let n = width * height;
                if n < 2 || n > env::MAX_STATES || env::VISIT_OFFSET + n > env::MAX_DIM {
                    return Err(self.error_at(
                        "mdp",
                        format!(
                            "gridworld needs 2 to {} cells",
                            env::MAX_DIM - env::VISIT_OFFSET
                        ),
                    ));
                }
            }
            MdpSource::Inline { .. } => {}
        }
        Ok(())
    }

    pub fn build_mdp(&self) -> Result<BuiltMdp> {
        let c = &self.config;
        let src = c
            .mdp
            .as_ref()
            .ok_or_else(|| self.error_at("algorithm", "no [mdp] table"))?;
        let at = |e: Error| self.error_at("mdp", e);
        match src {
            MdpSource::Inline { text } => {
                let offset = locate_in_table(&self.text, "mdp", "text");
                let mdp = parse_mdp(text, &self.path).map_err(|e| match e {
                    Error::Parse { path, line, msg } => Error::Parse {
                        path,
                        line: line + offset,
                        msg,
                    },
                    other => at(other),
                })?;
                Ok(BuiltMdp { mdp, grid: None })
            }
            MdpSource::File { path } => {
                let mdp = read_mdp_file(&self.base_dir.join(path)).map_err(|e| match e {
                    e @ Error::Parse { .. } => e,
                    other => at(other),
                })?;
                Ok(BuiltMdp { mdp, grid: None })
            }
            MdpSource::Random {
                states,
                actions,
                dim,
                gamma,
                seed,
            } => {
                let seed = seed.unwrap_or_else(|| derive_seed(c.seed, MDP_SEED_STREAM));
                let mdp = env::random_mdp(seed, *states, *actions, *dim, *gamma).map_err(at)?;
                Ok(BuiltMdp { mdp, grid: None })
            }
            MdpSource::Gridworld {
                width,
                height,
                gamma,
                slip,
            } => {
                let g = env::gridworld(*width, *height, *gamma, *slip).map_err(at)?;
                Ok(BuiltMdp {
                    mdp: g.mdp.clone(),
                    grid: Some(g),
                })
            }
        }
    }

    pub fn build_target(&self, built: &BuiltMdp) -> Result<TargetSet> {
        let def = self
            .config
            .target
            .as_ref()
            .ok_or_else(|| self.error_at("algorithm", "no [target] table"))?;
        def.build(built.mdp.dim(), built.grid.as_ref())
            .map_err(|e| self.error_at("target", e))
    }

    pub fn game_config(&self) -> Result<GameConfig> {
        let g = self
            .config
            .game
            .as_ref()
            .ok_or_else(|| self.error_at("algorithm", "no [game] table"))?;
        self.game_config_of(g)
    }

    fn game_config_of(&self, g: &GameDef) -> Result<GameConfig> {
        let lambda_set = g.lambda_set.build().map_err(|e| self.error_at("game", e))?;
        let u_set = g.u_set.build().map_err(|e| self.error_at("game", e))?;
        if g.payoff.len() != lambda_set.dim() || g.payoff.iter().any(|r| r.len() != u_set.dim()) {
            return Err(self.error_at(
                "game",
                format!("payoff must be {} x {}", lambda_set.dim(), u_set.dim()),
            ));
        }
        Ok(GameConfig {
            payoff: g.payoff.clone(),
            lambda_set,
            u_set,
            rounds: self.config.iterations,
        })
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of a `[table]` header, a `key =` assignment or a dotted
/// `table.key =` assignment; 1 when absent.
fn locate(text: &str, key: &str) -> usize {
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t == format!("[{key}]") {
            return i + 1;
        }
        if let Some(rest) = t.strip_prefix(key) {
            let rest = rest.trim_start();
            if rest.starts_with('=') || rest.starts_with('.') {
                return i + 1;
            }
        }
    }
    1
}

/// Line of `key =` inside `[table]`; 0 when absent.
fn locate_in_table(text: &str, table: &str, key: &str) -> usize {
    let mut inside = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = t == format!("[{table}]");
            continue;
        }
        if inside {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return i + 1;
                }
            }
        }
    }
    0
}
