//! Experiment rows and their JSON-lines / CSV encodings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ordering::{RunStats, Strategy};
use crate::refine::SplitBackend;

/// One `(model, strategy, backend)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub model: String,
    pub strategy: Strategy,
    pub backend: SplitBackend,
    pub num_states: usize,
    pub wall_ms: f64,
    pub refine_calls: u64,
    pub splitter_mass: u64,
    pub spl_avg: f64,
    pub stale_skips: u64,
    pub fallback_count: u64,
    pub final_num_blocks: usize,
    pub quotient_states: usize,
}

impl ExperimentRow {
    pub fn from_stats(model: &str, strategy: Strategy, backend: SplitBackend, stats: &RunStats, quotient_states: usize) -> Self {
        Self {
            model: model.to_string(),
            strategy,
            backend,
            num_states: stats.num_states,
            wall_ms: stats.wall_time.as_secs_f64() * 1e3,
            refine_calls: stats.refine_calls,
            splitter_mass: stats.splitter_mass,
            spl_avg: stats.spl_avg(),
            stale_skips: stats.stale_skips,
            fallback_count: stats.fallback_count,
            final_num_blocks: stats.final_num_blocks,
            quotient_states,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    /// One JSON object per row.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Header plus one record per row, columns in field order.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean `spl_avg` over rows with the given strategy.
    pub fn mean_spl_avg(&self, strategy: Strategy) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter(|r| r.strategy == strategy).map(|r| r.spl_avg).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}
