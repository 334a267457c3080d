//! Per-iteration run records and their CSV form.

use std::io::Write;

use serde::Serialize;

use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// 1-based iteration.
    pub t: usize,
    pub lambda: Vec<f64>,
    pub policy_id: usize,
    /// Estimate of the played policy's measurement (reporting space).
    pub z_hat: Vec<f64>,
    /// `ℓ_t(λ_t) = −λ_t·ẑ_t` in the space the learner works in.
    pub loss: f64,
    pub running_mean: Vec<f64>,
    pub running_distance: f64,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub oracle_calls: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub episodes: usize,
    pub wall_clock_secs: f64,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Column names in their fixed order.
    pub fn csv_header(lambda_dim: usize, z_dim: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..lambda_dim).map(|i| format!("lambda_{i}")));
        h.extend((0..z_dim).map(|i| format!("zhat_{i}")));
        h.extend(["loss", "running_distance", "cache_hit"].map(String::from));
        h
    }

    /// Writes `t, lambda_*, zhat_*, loss, running_distance, cache_hit`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (ld, zd) = self
            .records
            .first()
            .map_or((0, 0), |r| (r.lambda.len(), r.z_hat.len()));
        writeln!(w, "{}", Self::csv_header(ld, zd).join(","))?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            line.push_str(&r.t.to_string());
            for v in r
                .lambda
                .iter()
                .chain(&r.z_hat)
                .chain([&r.loss, &r.running_distance])
            {
                line.push(',');
                line.push_str(&format!("{v:.16e}"));
            }
            line.push(',');
            line.push_str(if r.cache_hit { "1" } else { "0" });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
