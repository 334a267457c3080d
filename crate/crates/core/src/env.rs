//! Benchmark environments: random tabular MDPs and a slippery gridworld with
//! safety and visitation measurements.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::convex::{BoxSet, Halfspace, Polytope, TargetSet};
use crate::mdp::VectorMdp;
use crate::{Error, Result};

pub const MAX_STATES: usize = 10_000;
pub const MAX_ACTIONS: usize = 64;
pub const MAX_DIM: usize = 128;

/// Gridworld measurement layout: `(reward, unsafe, one-hot cell)`.
pub const REWARD_COORD: usize = 0;
pub const UNSAFE_COORD: usize = 1;
pub const VISIT_OFFSET: usize = 2;

fn check_sizes(states: usize, actions: usize, dim: usize) -> Result<()> {
    if !(1..=MAX_STATES).contains(&states)
        || !(1..=MAX_ACTIONS).contains(&actions)
        || !(1..=MAX_DIM).contains(&dim)
    {
        return Err(Error::Parameter(format!(
            "sizes out of range: states {states} (1..={MAX_STATES}), actions {actions} (1..={MAX_ACTIONS}), dim {dim} (1..={MAX_DIM})"
        )));
    }
    Ok(())
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Dense random MDP: Dirichlet-like rows, measurements uniform in `[−1, 1]^d`.
pub fn random_mdp(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    dim: usize,
    gamma: f64,
) -> Result<VectorMdp> {
    check_sizes(num_states, num_actions, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = random_distribution(&mut rng, num_states);
    let p = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| random_distribution(&mut rng, num_states))
                .collect()
        })
        .collect();
    let z = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect()
        })
        .collect();
    VectorMdp::new(beta, p, z, gamma, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    pub mdp: VectorMdp,
    pub width: usize,
    pub height: usize,
    pub start: usize,
    pub goal: usize,
    pub unsafe_cells: Vec<usize>,
}

/// `width × height` grid, start top-left, absorbing goal bottom-right paying
/// 1 per step. Cells on the anti-diagonal `r + c = ⌊(w + h − 2)/2⌋` (other
/// than start and goal) are unsafe. Actions up/right/down/left; with
/// probability `slip` the move is replaced by a uniformly random one.
pub fn gridworld(width: usize, height: usize, gamma: f64, slip: f64) -> Result<Gridworld> {
    let n = width * height;
    if width == 0 || height == 0 || n < 2 {
        return Err(Error::Parameter(
            "gridworld needs at least two cells".into(),
        ));
    }
    check_sizes(n, 4, VISIT_OFFSET + n)?;
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::Parameter(format!(
            "slip must be in [0, 1], got {slip}"
        )));
    }
    let idx = |r: usize, c: usize| r * width + c;
    let start = 0;
    let goal = n - 1;
    let diag = (width + height - 2) / 2;
    let unsafe_cells: Vec<usize> = (0..n)
        .filter(|&s| s != start && s != goal && s / width + s % width == diag)
        .collect();
    let moves = |s: usize| -> [usize; 4] {
        let (r, c) = (s / width, s % width);
        [
            idx(r.saturating_sub(1), c),
            idx(r, (c + 1).min(width - 1)),
            idx((r + 1).min(height - 1), c),
            idx(r, c.saturating_sub(1)),
        ]
    };
    let mut p = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for s in 0..n {
        let mut meas = vec![0.0; VISIT_OFFSET + n];
        meas[REWARD_COORD] = if s == goal { 1.0 } else { 0.0 };
        meas[UNSAFE_COORD] = if unsafe_cells.contains(&s) { 1.0 } else { 0.0 };
        meas[VISIT_OFFSET + s] = 1.0;
        let targets = moves(s);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|a| {
                let mut row = vec![0.0; n];
                if s == goal {
                    row[s] = 1.0;
                } else {
                    row[targets[a]] += 1.0 - slip;
                    for t in targets {
                        row[t] += slip / 4.0;
                    }
                }
                row
            })
            .collect();
        p.push(rows);
        z.push(vec![meas; 4]);
    }
    let mut beta = vec![0.0; n];
    beta[start] = 1.0;
    let mdp = VectorMdp::new(beta, p, z, gamma, None)?;
    Ok(Gridworld {
        mdp,
        width,
        height,
        start,
        goal,
        unsafe_cells,
    })
}

impl Gridworld {
    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    fn horizon_mass(&self) -> f64 {
        1.0 / (1.0 - self.mdp.gamma())
    }

    /// Every coordinate in `[0, 1/(1−γ)]`, long-term unsafe measurement at
    /// most `threshold`, total visitation at most `1/(1−γ)`.
    pub fn safety_preset(&self, threshold: f64) -> Result<TargetSet> {
        let d = self.mdp.dim();
        let h = self.horizon_mass();
        let bounds = BoxSet::new(vec![0.0; d], vec![h; d])?;
        let mut unsafe_normal = vec![0.0; d];
        unsafe_normal[UNSAFE_COORD] = 1.0;
        let mut visit_normal = vec![0.0; d];
        for v in visit_normal.iter_mut().skip(VISIT_OFFSET) {
            *v = 1.0;
        }
        let hs = vec![
            Halfspace::new(unsafe_normal, threshold)?,
            Halfspace::new(visit_normal, h)?,
        ];
        Ok(TargetSet::Polytope(Polytope::new(bounds, hs)?))
    }

    /// Per-cell long-term visitation in `[lo, hi]`; reward and unsafe coordinates free in `[0, 1/(1−γ)]`.
    pub fn visitation_box_preset(&self, lo: f64, hi: f64) -> Result<TargetSet> {
        let d = self.mdp.dim();
        let h = self.horizon_mass();
        let mut lower = vec![0.0; d];
        let mut upper = vec![h; d];
        for k in VISIT_OFFSET..d {
            lower[k] = lo;
            upper[k] = hi;
        }
        Ok(TargetSet::Box(BoxSet::new(lower, upper)?))
    }
}
