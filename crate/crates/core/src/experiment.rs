//! Headless experiments: scripted agents played under several conditions and
//! seeds, summarized from their tick logs.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentParams, PolicyKind};
use crate::coupling::CouplingGains;
use crate::game::{Course, Status};
use crate::schema::MAX_PLAYERS;
use crate::session::{
    records_to_csv, run_scripted, AgentSpec, Phase, RunConfig, SessionConfig, SessionError,
    TickRecord,
};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("condition {condition:?}, seed {seed}: {source}")]
    Session {
        condition: String,
        seed: u64,
        source: SessionError,
    },
    #[error("condition {condition:?}, seed {seed}: repeat run diverged")]
    Nondeterministic { condition: String, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRole {
    pub policy: PolicyKind,
    #[serde(default)]
    pub params: AgentParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub name: String,
    pub haptics: bool,
    /// One agent per slot, in slot order. Player count is the roster size.
    pub agents: Vec<AgentRole>,
    /// Replaces the base session's gains for this condition.
    #[serde(default)]
    pub gains: Option<CouplingGains>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base session; player count, haptics, scenario and seed are set per run.
    #[serde(default)]
    pub session: SessionConfig,
    pub conditions: Vec<Condition>,
    pub repetitions: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_max_duration")]
    pub max_duration_s: f64,
    #[serde(default = "default_true")]
    pub verify_determinism: bool,
}

fn default_max_duration() -> f64 {
    30.0
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.conditions.is_empty() {
            return bad("no conditions".into());
        }
        for c in &self.conditions {
            let n = c.agents.len();
            if !(2..=usize::from(MAX_PLAYERS)).contains(&n) {
                return bad(format!(
                    "condition {:?} has {n} agents, expected 2..={MAX_PLAYERS}",
                    c.name
                ));
            }
            if c.name.is_empty() || c.name.contains([',', '/', '\n']) {
                return bad(format!(
                    "condition name {:?} must be non-empty without ',' or '/'",
                    c.name
                ));
            }
        }
        for rep in 0..self.repetitions {
            for c in &self.conditions {
                self.run_config(c, rep)
                    .validate()
                    .map_err(|e| ExperimentError::Config(format!("condition {:?}: {e}", c.name)))?;
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn seed(&self, repetition: u32) -> u64 {
        self.base_seed.wrapping_add(u64::from(repetition))
    }

    /// The fully specified run for one condition and repetition.
    pub fn run_config(&self, condition: &Condition, repetition: u32) -> RunConfig {
        let session = SessionConfig {
            player_count: condition.agents.len() as u8,
            haptic_enabled: condition.haptics,
            gains: condition.gains.unwrap_or(self.session.gains),
            seed: self.seed(repetition),
            scenario: vec![Phase::until_terminal(condition.haptics)],
            ..self.session.clone()
        };
        let agents = condition
            .agents
            .iter()
            .enumerate()
            .map(|(i, role)| AgentSpec {
                slot: i as u8 + 1,
                policy: role.policy,
                params: role.params,
            })
            .collect();
        RunConfig {
            session,
            agents,
            max_duration_s: self.max_duration_s,
        }
    }
}

/// Per-run metrics, computed from the run's tick log alone.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub condition: String,
    pub seed: u64,
    pub ticks: usize,
    pub completed: bool,
    pub fell: bool,
    pub time_to_goal: Option<f64>,
    pub path_rms: f64,
    pub mean_disagreement: f64,
}

fn distance_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

impl RunMetrics {
    pub fn from_records(
        condition: &str,
        seed: u64,
        course: &Course,
        records: &[TickRecord],
    ) -> Self {
        let last = records.last();
        let status = last.map_or(Status::Sliding, |r| r.world.status);
        let n = records.len().max(1) as f64;
        let start = course.start;
        let goal = course.goal.center();
        let path_rms = (records
            .iter()
            .map(|r| distance_to_segment(r.world.position, start, goal).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let mean_disagreement = records.iter().map(|r| r.disagreement).sum::<f64>() / n;
        Self {
            condition: condition.to_owned(),
            seed,
            ticks: records.len(),
            completed: status == Status::Goal,
            fell: status == Status::Fell,
            time_to_goal: (status == Status::Goal).then(|| last.map_or(0.0, |r| r.world.elapsed)),
            path_rms,
            mean_disagreement,
        }
    }
}

/// Mean and sample standard deviation; NaN mean for an empty sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSummary {
    pub name: String,
    pub players: usize,
    pub haptics: bool,
    pub runs: usize,
    pub completion_rate: f64,
    pub fall_rate: f64,
    pub time_to_goal: Stat,
    pub path_rms: Stat,
    pub disagreement: Stat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub conditions: Vec<ConditionSummary>,
    pub runs: Vec<RunMetrics>,
}

impl ExperimentReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "condition,players,haptics,runs,completion_rate,fall_rate,time_to_goal_mean,time_to_goal_sd,\
             path_rms_mean,path_rms_sd,disagreement_mean,disagreement_sd\n",
        );
        for c in &self.conditions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.name,
                c.players,
                u8::from(c.haptics),
                c.runs,
                c.completion_rate,
                c.fall_rate,
                c.time_to_goal.mean,
                c.time_to_goal.sd,
                c.path_rms.mean,
                c.path_rms.sd,
                c.disagreement.mean,
                c.disagreement.sd
            );
        }
        out
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from(
            "condition,seed,ticks,completed,fell,time_to_goal,path_rms,mean_disagreement\n",
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.condition,
                r.seed,
                r.ticks,
                u8::from(r.completed),
                u8::from(r.fell),
                r.time_to_goal.map(|t| t.to_string()).unwrap_or_default(),
                r.path_rms,
                r.mean_disagreement
            );
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>2} {:>4} {:>4} {:>6} {:>6} {:>15} {:>15} {:>15}\n",
            "condition",
            "N",
            "hap",
            "runs",
            "goal%",
            "fell%",
            "time-to-goal s",
            "path rms m",
            "disagreement"
        );
        for c in &self.conditions {
            let _ = writeln!(
                out,
                "{:<20} {:>2} {:>4} {:>4} {:>6.1} {:>6.1} {:>7.3}±{:<7.3} {:>7.3}±{:<7.3} {:>7.4}±{:<7.4}",
                c.name,
                c.players,
                if c.haptics { "on" } else { "off" },
                c.runs,
                100.0 * c.completion_rate,
                100.0 * c.fall_rate,
                c.time_to_goal.mean,
                c.time_to_goal.sd,
                c.path_rms.mean,
                c.path_rms.sd,
                c.disagreement.mean,
                c.disagreement.sd
            );
        }
        out
    }
}

/// The log of one run, kept when requested.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub name: String,
    pub run: RunConfig,
    pub csv: String,
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub logs: Vec<RunArtifact>,
}

struct RunResult {
    metrics: RunMetrics,
    artifact: Option<RunArtifact>,
}

fn run_one(
    config: &ExperimentConfig,
    condition: &Condition,
    rep: u32,
    keep_log: bool,
) -> Result<RunResult, ExperimentError> {
    let run = config.run_config(condition, rep);
    let seed = run.session.seed;
    let wrap = |source| ExperimentError::Session {
        condition: condition.name.clone(),
        seed,
        source,
    };
    let records = run_scripted(&run).map_err(wrap)?;
    let csv = records_to_csv(&records);
    if config.verify_determinism {
        let again = records_to_csv(&run_scripted(&run).map_err(wrap)?);
        if again != csv {
            return Err(ExperimentError::Nondeterministic {
                condition: condition.name.clone(),
                seed,
            });
        }
    }
    Ok(RunResult {
        metrics: RunMetrics::from_records(&condition.name, seed, &run.session.course, &records),
        artifact: keep_log.then(|| RunArtifact {
            name: format!("{}_seed{}", condition.name, seed),
            run,
            csv,
        }),
    })
}

/// Runs every condition for every repetition, in parallel across runs.
/// Output order and content do not depend on thread scheduling.
pub fn run_experiment(
    config: &ExperimentConfig,
    keep_logs: bool,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let jobs: Vec<(usize, u32)> = (0..config.conditions.len())
        .flat_map(|c| (0..config.repetitions).map(move |r| (c, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, r)| run_one(config, &config.conditions[c], r, keep_logs))
        .collect::<Result<Vec<_>, _>>()?;

    let mut runs = Vec::with_capacity(results.len());
    let mut logs = Vec::new();
    for r in results {
        runs.push(r.metrics);
        logs.extend(r.artifact);
    }
    let conditions = config
        .conditions
        .iter()
        .map(|c| {
            let mine: Vec<&RunMetrics> = runs.iter().filter(|r| r.condition == c.name).collect();
            let n = mine.len();
            let rate =
                |f: fn(&RunMetrics) -> bool| mine.iter().filter(|r| f(r)).count() as f64 / n as f64;
            let times: Vec<f64> = mine.iter().filter_map(|r| r.time_to_goal).collect();
            let rms: Vec<f64> = mine.iter().map(|r| r.path_rms).collect();
            let dis: Vec<f64> = mine.iter().map(|r| r.mean_disagreement).collect();
            ConditionSummary {
                name: c.name.clone(),
                players: c.agents.len(),
                haptics: c.haptics,
                runs: n,
                completion_rate: rate(|r| r.completed),
                fall_rate: rate(|r| r.fell),
                time_to_goal: Stat::of(&times),
                path_rms: Stat::of(&rms),
                disagreement: Stat::of(&dis),
            }
        })
        .collect();
    Ok(ExperimentOutput {
        report: ExperimentReport { conditions, runs },
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_matches_hand_computation() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).sd, 0.0);
        assert!(Stat::of(&[]).mean.is_nan());
    }

    #[test]
    fn segment_distance() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(10.0, 0.0);
        assert_eq!(distance_to_segment(Vec2::new(5.0, 3.0), a, b), 3.0);
        assert_eq!(distance_to_segment(Vec2::new(-4.0, 3.0), a, b), 5.0);
    }

    #[test]
    fn zero_repetitions_rejected() {
        let text = r#"
            repetitions = 0
            [[conditions]]
            name = "x"
            haptics = true
            agents = [{ policy = { kind = "braker" } }, { policy = { kind = "braker" } }]
        "#;
        assert!(matches!(
            ExperimentConfig::from_toml_str(text),
            Err(ExperimentError::Config(_))
        ));
        let one_agent = text
            .replace("repetitions = 0", "repetitions = 1")
            .replace(", { policy = { kind = \"braker\" } }]", "]");
        assert!(ExperimentConfig::from_toml_str(&one_agent).is_err());
    }
}
