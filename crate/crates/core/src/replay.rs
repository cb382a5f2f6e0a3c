//! Re-simulates a logged run and checks the log byte for byte.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::session::{records_to_csv, run_scripted, RunConfig, SessionError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Config(#[from] SessionError),
    #[error("log diverges at tick {} (line {line}): expected {expected:?}, found {found:?}", tick.map_or("<header>".to_string(), |t| t.to_string()))]
    Mismatch {
        /// Game tick of the first divergent row; `None` when the header differs.
        tick: Option<u64>,
        line: usize,
        expected: String,
        found: String,
    },
}

impl ReplayError {
    pub fn divergent_tick(&self) -> Option<u64> {
        match self {
            ReplayError::Mismatch { tick, .. } => *tick,
            ReplayError::Config(_) => None,
        }
    }
}

fn tick_of(row: &str) -> Option<u64> {
    row.split(',').next()?.parse().ok()
}

/// Returns the number of verified game ticks.
pub fn verify_log(run: &RunConfig, log: &str) -> Result<usize, ReplayError> {
    let fresh = records_to_csv(&run_scripted(run)?);
    let mut expected = fresh.lines();
    let mut found = log.lines();
    let mut line = 0usize;
    loop {
        line += 1;
        match (expected.next(), found.next()) {
            (None, None) => return Ok(line.saturating_sub(2)),
            (e, f) if e == f => continue,
            (e, f) => {
                let tick = if line == 1 {
                    None
                } else {
                    f.and_then(tick_of).or_else(|| e.and_then(tick_of))
                };
                return Err(ReplayError::Mismatch {
                    tick,
                    line,
                    expected: e.unwrap_or("<end of log>").to_owned(),
                    found: f.unwrap_or("<end of log>").to_owned(),
                });
            }
        }
    }
}

/// The run config stored next to a log: `run.csv` pairs with `run.toml`.
pub fn sibling_config(log: &Path) -> PathBuf {
    log.with_extension("toml")
}
