//! Store of previously returned policies with their measurement estimates.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::dot;
use crate::mdp::{StationaryPolicy, VectorMdp};
use crate::Result;

use super::{derive_seed, estimate, OracleConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub id: usize,
    pub policy: StationaryPolicy,
    pub z_hat: Vec<f64>,
    pub eps1: f64,
    /// Iteration that produced the policy; `None` for seeded random policies.
    pub iteration: Option<usize>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookup<'a> {
    Hit(&'a CacheEntry),
    /// The best-scoring entry, for warm starts; `None` when the cache is empty.
    Miss(Option<&'a CacheEntry>),
}

#[derive(Debug, Clone, Default)]
pub struct PolicyCache {
    entries: Vec<CacheEntry>,
    hits: usize,
    misses: usize,
}

impl PolicyCache {
    pub fn new() -> Self {
        PolicyCache::default()
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn hits(&self) -> usize {
        self.hits
    }
    pub fn misses(&self) -> usize {
        self.misses
    }
    pub fn get(&self, id: usize) -> Option<&CacheEntry> {
        self.entries.get(id)
    }

    /// Appends a policy and returns its id. A policy already present keeps
    /// its original entry and id.
    pub fn insert(
        &mut self,
        policy: StationaryPolicy,
        z_hat: Vec<f64>,
        eps1: f64,
        iteration: Option<usize>,
        lambda: Vec<f64>,
    ) -> usize {
        if let Some(e) = self.entries.iter().find(|e| e.policy == policy) {
            return e.id;
        }
        let id = self.entries.len();
        self.entries.push(CacheEntry {
            id,
            policy,
            z_hat,
            eps1,
            iteration,
            lambda,
        });
        id
    }

    /// Hit on the first entry with `−λ·ẑ ≥ −eps`; otherwise a miss carrying
    /// the entry that maximises `−λ·ẑ`.
    pub fn lookup(&mut self, lambda: &[f64], eps: f64) -> Lookup<'_> {
        self.lookup_by(|e| -dot(lambda, &e.z_hat), eps)
    }

    /// As [`lookup`](Self::lookup) with an arbitrary score for each entry.
    pub fn lookup_by<F: Fn(&CacheEntry) -> f64>(&mut self, score: F, eps: f64) -> Lookup<'_> {
        let mut best: Option<(usize, f64)> = None;
        let mut hit = None;
        for (i, e) in self.entries.iter().enumerate() {
            let s = score(e);
            if s >= -eps {
                hit = Some(i);
                break;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        match hit {
            Some(i) => {
                self.hits += 1;
                Lookup::Hit(&self.entries[i])
            }
            None => {
                self.misses += 1;
                Lookup::Miss(best.map(|(i, _)| &self.entries[i]))
            }
        }
    }

    /// Seeds the cache with `k` uniformly random deterministic policies.
    pub fn init_random(
        &mut self,
        mdp: &VectorMdp,
        k: usize,
        cfg: &OracleConfig,
        seed: u64,
    ) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..k {
            let actions: Vec<usize> = (0..mdp.num_states())
                .map(|_| rng.gen_range(0..mdp.num_actions()))
                .collect();
            let policy = StationaryPolicy::deterministic(&actions, mdp.num_actions())?;
            let est = estimate(mdp, &policy, cfg, derive_seed(seed, i as u64))?;
            self.insert(policy, est.z_hat, est.eps1, None, vec![0.0; mdp.dim()]);
        }
        Ok(())
    }

    /// CSV with columns `id, iteration, zhat_*, eps1, lambda_*, actions`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.entries.first().map_or(0, |e| e.z_hat.len());
        let l = self.entries.first().map_or(0, |e| e.lambda.len());
        let mut header = vec!["id".to_string(), "iteration".to_string()];
        header.extend((0..d).map(|k| format!("zhat_{k}")));
        header.push("eps1".into());
        header.extend((0..l).map(|k| format!("lambda_{k}")));
        header.push("actions".into());
        writeln!(w, "{}", header.join(","))?;
        for e in &self.entries {
            let mut row = vec![
                e.id.to_string(),
                e.iteration.map_or(String::new(), |i| i.to_string()),
            ];
            row.extend(e.z_hat.iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", e.eps1));
            row.extend(e.lambda.iter().map(|v| format!("{v:.16e}")));
            let actions = match e.policy.as_deterministic() {
                Some(a) => a
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                None => "stochastic".into(),
            };
            row.push(actions);
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
