//! The sliding penguin world.
//!
//! The aggregated stick command is an acceleration; the ice keeps the
//! velocity, so sudden reversals overshoot. Leaving the rink is a fall,
//! touching the goal wins, and both outcomes are absorbing.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::Deflection2D;
use crate::vec2::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("no player inputs to aggregate")]
    NoInputs,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid game parameter {name} = {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("invalid course: {0}")]
    BadCourse(String),
}

/// Axis-aligned rectangle in meters, boundary inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Vec2::new(min_x, min_y),
            max: Vec2::new(max_x, max_y),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
    }
}

/// Rink and goal layout plus the spawn point, loadable from TOML.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Course {
    pub rink: Rect,
    pub goal: Rect,
    pub start: Vec2,
}

impl Default for Course {
    fn default() -> Self {
        Self {
            rink: Rect::new(-8.0, -4.5, 8.0, 4.5),
            goal: Rect::new(6.0, -1.0, 8.0, 1.0),
            start: Vec2::new(-6.0, 0.0),
        }
    }
}

impl Course {
    pub fn validate(&self) -> Result<(), GameError> {
        if !self.rink.is_valid() {
            return Err(GameError::BadCourse(
                "rink must have min < max on both axes".into(),
            ));
        }
        if !self.goal.is_valid() {
            return Err(GameError::BadCourse(
                "goal must have min < max on both axes".into(),
            ));
        }
        // the goal may overhang the rink edge but has to touch it
        let touches = self.goal.min.x <= self.rink.max.x
            && self.goal.max.x >= self.rink.min.x
            && self.goal.min.y <= self.rink.max.y
            && self.goal.max.y >= self.rink.min.y;
        if !touches {
            return Err(GameError::BadCourse(
                "goal must be inside or adjacent to the rink".into(),
            ));
        }
        if !self.rink.contains(self.start) || self.goal.contains(self.start) {
            return Err(GameError::BadCourse(
                "start must be on the rink and outside the goal".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, GameError> {
        let course: Course =
            toml::from_str(text).map_err(|e| GameError::BadCourse(e.to_string()))?;
        course.validate()?;
        Ok(course)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Sliding,
    Fell,
    Goal,
}

impl Status {
    /// Wire code: Sliding=0, Fell=1, Goal=2.
    pub fn code(self) -> i32 {
        match self {
            Status::Sliding => 0,
            Status::Fell => 1,
            Status::Goal => 2,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            0 => Some(Status::Sliding),
            1 => Some(Status::Fell),
            2 => Some(Status::Goal),
            _ => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Status::Sliding
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Sliding => "sliding",
            Status::Fell => "fell",
            Status::Goal => "goal",
        })
    }
}

impl FromStr for Status {
    type Err = GameError;
    fn from_str(s: &str) -> Result<Self, GameError> {
        match s {
            "sliding" => Ok(Status::Sliding),
            "fell" => Ok(Status::Fell),
            "goal" => Ok(Status::Goal),
            _ => Err(GameError::BadCourse(format!("unknown status {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Acceleration at full deflection, m/s².
    pub accel_max: f64,
    /// Linear velocity decay rate, 1/s.
    pub friction: f64,
    /// Fixed game tick, s.
    pub dt_game: f64,
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            accel_max: 6.0,
            friction: 0.3,
            dt_game: 1.0 / 50.0,
        }
    }
}

impl GameParams {
    pub fn validate(&self) -> Result<(), GameError> {
        let checks = [
            ("accel_max", self.accel_max, self.accel_max > 0.0),
            ("friction", self.friction, self.friction >= 0.0),
            ("dt_game", self.dt_game, self.dt_game > 0.0),
        ];
        for (name, value, ok) in checks {
            if !(value.is_finite() && ok) {
                return Err(GameError::BadParam { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenguinWorld {
    pub position: Vec2,
    pub velocity: Vec2,
    pub rink: Rect,
    pub goal: Rect,
    pub status: Status,
    /// Seconds of simulated play.
    pub elapsed: f64,
}

impl PenguinWorld {
    /// A penguin at rest on the course's start point.
    pub fn new(course: &Course) -> Self {
        let mut world = Self {
            position: course.start,
            velocity: Vec2::ZERO,
            rink: course.rink,
            goal: course.goal,
            status: Status::Sliding,
            elapsed: 0.0,
        };
        world.status = classify_state(&world);
        world
    }
}

/// Componentwise mean of all players' deflections.
pub fn aggregate_inputs(deflections: &[Deflection2D]) -> Result<Deflection2D, GameError> {
    if deflections.is_empty() {
        return Err(GameError::NoInputs);
    }
    let mut sum = Vec2::ZERO;
    for d in deflections {
        sum += d.as_vec();
    }
    Deflection2D::from_vec(sum / deflections.len() as f64)
        .map_err(|_| GameError::NonFinite("deflection"))
}

/// Goal wins over Fell when both apply.
pub fn classify_state(world: &PenguinWorld) -> Status {
    if world.goal.contains(world.position) {
        Status::Goal
    } else if !world.rink.contains(world.position) {
        Status::Fell
    } else {
        Status::Sliding
    }
}

/// One semi-implicit Euler game tick. Terminal worlds are returned unchanged.
pub fn step_world(
    world: &PenguinWorld,
    command: Deflection2D,
    params: &GameParams,
) -> Result<PenguinWorld, GameError> {
    if world.status.is_terminal() {
        return Ok(*world);
    }
    if !world.position.is_finite() || !world.velocity.is_finite() {
        return Err(GameError::NonFinite("world state"));
    }
    let dt = params.dt_game;
    let accel = command.as_vec() * params.accel_max - world.velocity * params.friction;
    let velocity = world.velocity + accel * dt;
    let position = world.position + velocity * dt;
    if !position.is_finite() || !velocity.is_finite() {
        return Err(GameError::NonFinite("world state"));
    }
    let mut next = PenguinWorld {
        position,
        velocity,
        elapsed: world.elapsed + dt,
        ..*world
    };
    next.status = classify_state(&next);
    Ok(next)
}

/// Writes `tick,px,py,vx,vy,cmd_x,cmd_y,status` rows.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub const HEADER: &'static str = "tick,px,py,vx,vy,cmd_x,cmd_y,status";

    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", Self::HEADER)?;
        Ok(Self { out })
    }

    pub fn row(
        &mut self,
        tick: u64,
        world: &PenguinWorld,
        command: Deflection2D,
    ) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            tick,
            world.position.x,
            world.position.y,
            world.velocity.x,
            world.velocity.y,
            command.x(),
            command.y(),
            world.status
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
