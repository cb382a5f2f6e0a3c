use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentParams, PolicyKind};
use crate::coupling::CouplingGains;
use crate::device::{ActuatorParams, MAX_DEVICE_DT};
use crate::game::{Course, GameParams};
use crate::schema::MAX_PLAYERS;
use crate::transport::LatencyModel;

use super::SessionError;

/// Game tuning that is not derived from the tick rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameTuning {
    pub accel_max: f64,
    pub friction: f64,
}

impl Default for GameTuning {
    fn default() -> Self {
        let d = GameParams::default();
        Self {
            accel_max: d.accel_max,
            friction: d.friction,
        }
    }
}

/// One step of the exhibition procedure. `duration_s = None` runs until the
/// penguin falls or reaches the goal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub haptics: bool,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

impl Phase {
    pub fn timed(haptics: bool, duration_s: f64) -> Self {
        Self {
            haptics,
            duration_s: Some(duration_s),
        }
    }

    pub fn until_terminal(haptics: bool) -> Self {
        Self {
            haptics,
            duration_s: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Number of controller slots, 2..=4.
    pub player_count: u8,
    /// Haptics mode when the scenario is empty (free play).
    pub haptic_enabled: bool,
    pub gains: CouplingGains,
    pub actuator: ActuatorParams,
    pub game: GameTuning,
    pub course: Course,
    pub device_hz: u32,
    pub game_hz: u32,
    /// One-way delay applied to every controller link.
    pub latency: LatencyModel,
    pub seed: u64,
    /// Silence after which a remote stick is treated as released.
    pub stale_after_ms: u64,
    pub scenario: Vec<Phase>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            player_count: 2,
            haptic_enabled: true,
            gains: CouplingGains::default(),
            actuator: ActuatorParams::default(),
            game: GameTuning::default(),
            course: Course::default(),
            device_hz: 200,
            game_hz: 50,
            latency: LatencyModel::default(),
            seed: 0,
            stale_after_ms: 500,
            scenario: Vec::new(),
        }
    }
}

fn bad(msg: impl Into<String>) -> SessionError {
    SessionError::Config(msg.into())
}

impl SessionConfig {
    /// The exhibition procedure: a timed round without haptics, then a round
    /// with haptics that lasts until the penguin falls or scores.
    pub fn exhibition(player_count: u8, off_duration_s: f64) -> Self {
        Self {
            player_count,
            scenario: vec![
                Phase::timed(false, off_duration_s),
                Phase::until_terminal(true),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !(2..=MAX_PLAYERS).contains(&self.player_count) {
            return Err(bad(format!(
                "player_count must be between 2 and {MAX_PLAYERS}, got {}",
                self.player_count
            )));
        }
        if self.device_hz == 0 || self.game_hz == 0 {
            return Err(bad("tick rates must be positive"));
        }
        if !self.device_hz.is_multiple_of(self.game_hz) {
            return Err(bad(format!(
                "device_hz {} is not a multiple of game_hz {}",
                self.device_hz, self.game_hz
            )));
        }
        if 1_000_000 % self.device_hz != 0 {
            return Err(bad(format!(
                "device_hz {} does not divide one second in microseconds",
                self.device_hz
            )));
        }
        if 1.0 / f64::from(self.device_hz) > MAX_DEVICE_DT {
            return Err(bad(format!(
                "device_hz {} is below {} Hz",
                self.device_hz,
                1.0 / MAX_DEVICE_DT
            )));
        }
        self.gains.validate().map_err(|e| bad(e.to_string()))?;
        self.actuator.validate().map_err(|e| bad(e.to_string()))?;
        self.game_params()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        self.course.validate().map_err(|e| bad(e.to_string()))?;
        self.latency.validate().map_err(bad)?;
        if self.seed > i64::MAX as u64 {
            return Err(bad(format!(
                "seed {} does not fit a signed 64-bit integer",
                self.seed
            )));
        }
        for (i, phase) in self.scenario.iter().enumerate() {
            if let Some(d) = phase.duration_s {
                if !(d.is_finite() && d > 0.0) {
                    return Err(bad(format!("phase {i} duration must be positive, got {d}")));
                }
            }
        }
        Ok(())
    }

    pub fn game_params(&self) -> GameParams {
        GameParams {
            accel_max: self.game.accel_max,
            friction: self.game.friction,
            dt_game: 1.0 / f64::from(self.game_hz),
        }
    }

    pub fn device_dt(&self) -> f64 {
        1.0 / f64::from(self.device_hz)
    }

    pub fn ticks_per_game_tick(&self) -> u64 {
        u64::from(self.device_hz / self.game_hz)
    }
}

/// A scripted player bound to one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub slot: u8,
    pub policy: PolicyKind,
    #[serde(default)]
    pub params: AgentParams,
}

/// A session plus the agents that play it, as stored next to every log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub session: SessionConfig,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    /// Hard stop for scenarios that never end on their own.
    #[serde(default = "default_max_duration")]
    pub max_duration_s: f64,
}

fn default_max_duration() -> f64 {
    600.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            agents: Vec::new(),
            max_duration_s: default_max_duration(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        self.session.validate()?;
        let mut seen = [false; MAX_PLAYERS as usize];
        for agent in &self.agents {
            if agent.slot == 0 || agent.slot > self.session.player_count {
                return Err(bad(format!(
                    "agent slot {} outside 1..={}",
                    agent.slot, self.session.player_count
                )));
            }
            let i = usize::from(agent.slot - 1);
            if seen[i] {
                return Err(bad(format!("two agents on slot {}", agent.slot)));
            }
            seen[i] = true;
        }
        if !(self.max_duration_s.is_finite() && self.max_duration_s > 0.0) {
            return Err(bad("max_duration_s must be positive"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::Vec2;

    #[test]
    fn defaults_validate() {
        assert!(SessionConfig::default().validate().is_ok());
        assert!(SessionConfig::exhibition(4, 60.0).validate().is_ok());
    }

    #[test]
    fn player_count_bounds() {
        for n in [0u8, 1, 5] {
            let cfg = SessionConfig {
                player_count: n,
                ..Default::default()
            };
            assert!(
                matches!(cfg.validate(), Err(SessionError::Config(_))),
                "{n}"
            );
        }
    }

    #[test]
    fn tick_rates() {
        let cfg = SessionConfig {
            game_hz: 60,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SessionConfig {
            device_hz: 50,
            game_hz: 50,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(SessionConfig::default().ticks_per_game_tick(), 4);
    }

    #[test]
    fn run_config_round_trips_through_toml() {
        let cfg = RunConfig {
            session: SessionConfig {
                player_count: 3,
                seed: 99,
                latency: LatencyModel {
                    delay_ms: 30.0,
                    jitter_ms: 10.0,
                },
                ..SessionConfig::exhibition(3, 10.0)
            },
            agents: vec![
                AgentSpec {
                    slot: 1,
                    policy: PolicyKind::Stubborn {
                        direction: Vec2::new(1.0, 0.0),
                    },
                    params: AgentParams::default(),
                },
                AgentSpec {
                    slot: 3,
                    policy: PolicyKind::Braker,
                    params: AgentParams::default(),
                },
            ],
            max_duration_s: 30.0,
        };
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_run_config() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [session]
            player_count = 2

            [[agents]]
            slot = 1
            policy = { kind = "stubborn", direction = { x = 1.0, y = 0.0 } }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.session.device_hz, 200);
        assert_eq!(cfg.agents.len(), 1);
        assert!(RunConfig::from_toml_str("[session]\nplayer_count = 5\n").is_err());
        assert!(RunConfig::from_toml_str("[session]\nbogus = 1\n").is_err());
        let dup = "[session]\n[[agents]]\nslot = 1\npolicy = { kind = \"braker\" }\n[[agents]]\nslot = 1\npolicy = { kind = \"braker\" }\n";
        assert!(RunConfig::from_toml_str(dup).is_err());
    }
}
