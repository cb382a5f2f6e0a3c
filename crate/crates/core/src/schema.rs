//! Address space binding controllers to the game, and its JSON mirror used by
//! the browser bridge.
//!
//! | address              | args                    | direction         |
//! |----------------------|-------------------------|-------------------|
//! | `/ctrl/<id>/stick`   | `f x, f y`              | controller → game |
//! | `/ctrl/<id>/force`   | `f fx, f fy` (amperes)  | game → controller |
//! | `/ctrl/<id>/join`    | none                    | controller → game |
//! | `/ctrl/<id>/leave`   | none                    | controller → game |
//! | `/game/state`        | `f px, py, vx, vy, i status` | game → all   |
//! | `/session/haptics`   | `i on`                  | operator → game   |
//!
//! `<id>` is a decimal player slot 1..=4. Status codes: Sliding=0, Fell=1, Goal=2.

use std::fmt;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::device::Deflection2D;
use crate::game::Status;
use crate::osc::{OscArg, OscMessage};
use crate::vec2::Vec2;

pub const MAX_PLAYERS: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("player id {0} outside 1..={MAX_PLAYERS}")]
    PlayerOutOfRange(i64),
    #[error("address {0:?} is not part of the schema")]
    UnknownAddress(String),
    #[error("{address} expects arguments {expected}, got {got}")]
    BadArgs {
        address: String,
        expected: &'static str,
        got: String,
    },
    #[error("unknown game status code {0}")]
    BadStatus(i32),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("expected {expected}, got {got}")]
    WrongKind { expected: &'static str, got: String },
    #[error("bridge message: {0}")]
    Bridge(String),
}

/// A controller slot, 1..=4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlayerId(u8);

impl PlayerId {
    pub fn new(id: i64) -> Result<Self, SchemaError> {
        if (1..=i64::from(MAX_PLAYERS)).contains(&id) {
            Ok(Self(id as u8))
        } else {
            Err(SchemaError::PlayerOutOfRange(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based slot index.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn all() -> impl Iterator<Item = PlayerId> {
        (1..=MAX_PLAYERS).map(PlayerId)
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Broadcast world snapshot as carried on the wire (single precision).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameStateMsg {
    pub position: [f32; 2],
    pub velocity: [f32; 2],
    pub status: Status,
}

impl GameStateMsg {
    pub fn position(&self) -> Vec2 {
        Vec2::new(f64::from(self.position[0]), f64::from(self.position[1]))
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(f64::from(self.velocity[0]), f64::from(self.velocity[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlMessage {
    Stick { player: PlayerId, x: f32, y: f32 },
    Force { player: PlayerId, fx: f32, fy: f32 },
    Join { player: PlayerId },
    Leave { player: PlayerId },
    GameState(GameStateMsg),
    Haptics { on: bool },
}

fn bits_eq(a: f32, b: f32) -> bool {
    a.to_bits() == b.to_bits()
}

impl ControlMessage {
    pub fn address(&self) -> String {
        match self {
            ControlMessage::Stick { player, .. } => format!("/ctrl/{player}/stick"),
            ControlMessage::Force { player, .. } => format!("/ctrl/{player}/force"),
            ControlMessage::Join { player } => format!("/ctrl/{player}/join"),
            ControlMessage::Leave { player } => format!("/ctrl/{player}/leave"),
            ControlMessage::GameState(_) => "/game/state".into(),
            ControlMessage::Haptics { .. } => "/session/haptics".into(),
        }
    }

    pub fn to_osc(&self) -> OscMessage {
        let args = match *self {
            ControlMessage::Stick { x, y, .. } => vec![OscArg::Float(x), OscArg::Float(y)],
            ControlMessage::Force { fx, fy, .. } => vec![OscArg::Float(fx), OscArg::Float(fy)],
            ControlMessage::Join { .. } | ControlMessage::Leave { .. } => vec![],
            ControlMessage::GameState(s) => vec![
                OscArg::Float(s.position[0]),
                OscArg::Float(s.position[1]),
                OscArg::Float(s.velocity[0]),
                OscArg::Float(s.velocity[1]),
                OscArg::Int(s.status.code()),
            ],
            ControlMessage::Haptics { on } => vec![OscArg::Int(i32::from(on))],
        };
        OscMessage::new(self.address(), args)
    }

    /// Bitwise equality; the derived `PartialEq` treats NaN as unequal.
    pub fn same_bits(&self, other: &Self) -> bool {
        match (self, other) {
            (
                ControlMessage::Stick {
                    player: a,
                    x: ax,
                    y: ay,
                },
                ControlMessage::Stick {
                    player: b,
                    x: bx,
                    y: by,
                },
            )
            | (
                ControlMessage::Force {
                    player: a,
                    fx: ax,
                    fy: ay,
                },
                ControlMessage::Force {
                    player: b,
                    fx: bx,
                    fy: by,
                },
            ) => a == b && bits_eq(*ax, *bx) && bits_eq(*ay, *by),
            (ControlMessage::GameState(a), ControlMessage::GameState(b)) => {
                a.status == b.status
                    && a.position
                        .iter()
                        .zip(b.position)
                        .all(|(x, y)| bits_eq(*x, y))
                    && a.velocity
                        .iter()
                        .zip(b.velocity)
                        .all(|(x, y)| bits_eq(*x, y))
            }
            _ => self == other,
        }
    }
}

fn parse_player(segment: &str) -> Result<PlayerId, SchemaError> {
    if segment.is_empty() || !segment.bytes().all(|b| b.is_ascii_digit()) || segment.len() > 9 {
        return Err(SchemaError::UnknownAddress(segment.to_owned()));
    }
    PlayerId::new(segment.parse::<i64>().expect("digits only"))
}

fn describe_args(args: &[OscArg]) -> String {
    args.iter().map(|a| a.tag() as char).collect()
}

fn floats<const N: usize>(
    msg: &OscMessage,
    expected: &'static str,
) -> Result<[f32; N], SchemaError> {
    let bad = || SchemaError::BadArgs {
        address: msg.address.clone(),
        expected,
        got: describe_args(&msg.args),
    };
    if msg.args.len() != N {
        return Err(bad());
    }
    let mut out = [0.0f32; N];
    for (slot, arg) in out.iter_mut().zip(&msg.args) {
        match arg {
            OscArg::Float(v) => *slot = *v,
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

impl TryFrom<&OscMessage> for ControlMessage {
    type Error = SchemaError;

    fn try_from(msg: &OscMessage) -> Result<Self, SchemaError> {
        let segments: Vec<&str> = msg.address.split('/').collect();
        let no_args = |expected: &'static str| {
            if msg.args.is_empty() {
                Ok(())
            } else {
                Err(SchemaError::BadArgs {
                    address: msg.address.clone(),
                    expected,
                    got: describe_args(&msg.args),
                })
            }
        };
        match segments.as_slice() {
            ["", "ctrl", id, kind] if matches!(*kind, "stick" | "force" | "join" | "leave") => {
                let player = parse_player(id).map_err(|e| match e {
                    SchemaError::UnknownAddress(_) => {
                        SchemaError::UnknownAddress(msg.address.clone())
                    }
                    other => other,
                })?;
                match *kind {
                    "stick" => {
                        let [x, y] = floats::<2>(msg, "ff")?;
                        Ok(ControlMessage::Stick { player, x, y })
                    }
                    "force" => {
                        let [fx, fy] = floats::<2>(msg, "ff")?;
                        Ok(ControlMessage::Force { player, fx, fy })
                    }
                    "join" => no_args("").map(|_| ControlMessage::Join { player }),
                    _ => no_args("").map(|_| ControlMessage::Leave { player }),
                }
            }
            ["", "game", "state"] => match msg.args.as_slice() {
                [OscArg::Float(px), OscArg::Float(py), OscArg::Float(vx), OscArg::Float(vy), OscArg::Int(code)] =>
                {
                    let status = Status::from_code(*code).ok_or(SchemaError::BadStatus(*code))?;
                    Ok(ControlMessage::GameState(GameStateMsg {
                        position: [*px, *py],
                        velocity: [*vx, *vy],
                        status,
                    }))
                }
                args => Err(SchemaError::BadArgs {
                    address: msg.address.clone(),
                    expected: "ffffi",
                    got: describe_args(args),
                }),
            },
            ["", "session", "haptics"] => match msg.args.as_slice() {
                [OscArg::Int(v)] => Ok(ControlMessage::Haptics { on: *v != 0 }),
                args => Err(SchemaError::BadArgs {
                    address: msg.address.clone(),
                    expected: "i",
                    got: describe_args(args),
                }),
            },
            _ => Err(SchemaError::UnknownAddress(msg.address.clone())),
        }
    }
}

pub fn make_stick_msg(player_id: i64, deflection: Deflection2D) -> Result<OscMessage, SchemaError> {
    let player = PlayerId::new(player_id)?;
    Ok(ControlMessage::Stick {
        player,
        x: deflection.x() as f32,
        y: deflection.y() as f32,
    }
    .to_osc())
}

pub fn make_force_msg(player_id: i64, current: Vec2) -> Result<OscMessage, SchemaError> {
    let player = PlayerId::new(player_id)?;
    if !current.is_finite() {
        return Err(SchemaError::NonFinite("force".into()));
    }
    Ok(ControlMessage::Force {
        player,
        fx: current.x as f32,
        fy: current.y as f32,
    }
    .to_osc())
}

/// Returns the player slot and the commanded current in amperes.
pub fn parse_force_msg(msg: &OscMessage) -> Result<(PlayerId, Vec2), SchemaError> {
    match ControlMessage::try_from(msg)? {
        ControlMessage::Force { player, fx, fy } => {
            Ok((player, Vec2::new(f64::from(fx), f64::from(fy))))
        }
        other => Err(SchemaError::WrongKind {
            expected: "force message",
            got: other.address(),
        }),
    }
}

/// Returns the player slot and reported deflection.
pub fn parse_stick_msg(msg: &OscMessage) -> Result<(PlayerId, Deflection2D), SchemaError> {
    match ControlMessage::try_from(msg)? {
        ControlMessage::Stick { player, x, y } => {
            let d = Deflection2D::new(f64::from(x), f64::from(y))
                .map_err(|_| SchemaError::NonFinite(msg.address.clone()))?;
            Ok((player, d))
        }
        other => Err(SchemaError::WrongKind {
            expected: "stick message",
            got: other.address(),
        }),
    }
}

// JSON mirror. Floats are written as their exact f64 widening so the text
// form converts back to the identical f32.

fn json_float(v: f32, what: &str) -> Result<Value, SchemaError> {
    if v.is_finite() {
        Ok(json!(f64::from(v)))
    } else {
        Err(SchemaError::NonFinite(what.to_owned()))
    }
}

/// Renders one message as the bridge's JSON object.
pub fn to_bridge_json(msg: &ControlMessage) -> Result<Value, SchemaError> {
    let mut obj = Map::new();
    obj.insert("address".into(), json!(msg.address()));
    match *msg {
        ControlMessage::Stick { x, y, .. } => {
            obj.insert("x".into(), json_float(x, "x")?);
            obj.insert("y".into(), json_float(y, "y")?);
        }
        ControlMessage::Force { fx, fy, .. } => {
            obj.insert("fx".into(), json_float(fx, "fx")?);
            obj.insert("fy".into(), json_float(fy, "fy")?);
        }
        ControlMessage::Join { .. } | ControlMessage::Leave { .. } => {}
        ControlMessage::GameState(s) => {
            obj.insert("px".into(), json_float(s.position[0], "px")?);
            obj.insert("py".into(), json_float(s.position[1], "py")?);
            obj.insert("vx".into(), json_float(s.velocity[0], "vx")?);
            obj.insert("vy".into(), json_float(s.velocity[1], "vy")?);
            obj.insert("status".into(), json!(s.status.code()));
        }
        ControlMessage::Haptics { on } => {
            obj.insert("on".into(), json!(i32::from(on)));
        }
    }
    Ok(Value::Object(obj))
}

fn field_f32(obj: &Map<String, Value>, name: &str) -> Result<f32, SchemaError> {
    let v = obj
        .get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| SchemaError::Bridge(format!("missing numeric field {name:?}")))?;
    let narrowed = v as f32;
    if !narrowed.is_finite() {
        return Err(SchemaError::NonFinite(name.to_owned()));
    }
    Ok(narrowed)
}

fn field_i32(obj: &Map<String, Value>, name: &str) -> Result<i32, SchemaError> {
    obj.get(name)
        .and_then(Value::as_i64)
        .and_then(|v| i32::try_from(v).ok())
        .ok_or_else(|| SchemaError::Bridge(format!("missing int32 field {name:?}")))
}

/// Parses one bridge JSON object. Unknown fields are rejected.
pub fn from_bridge_json(value: &Value) -> Result<ControlMessage, SchemaError> {
    let obj = value
        .as_object()
        .ok_or_else(|| SchemaError::Bridge("message is not a JSON object".into()))?;
    let address = obj
        .get("address")
        .and_then(Value::as_str)
        .ok_or_else(|| SchemaError::Bridge("missing \"address\"".into()))?;
    // Route through the OSC parser so both transports share one address grammar.
    let mut args = Vec::new();
    let names: &[&str] = match address.rsplit('/').next() {
        Some("stick") => &["x", "y"],
        Some("force") => &["fx", "fy"],
        Some("state") => &["px", "py", "vx", "vy", "status"],
        Some("haptics") => &["on"],
        _ => &[],
    };
    for name in names {
        match *name {
            "status" | "on" => args.push(OscArg::Int(field_i32(obj, name)?)),
            _ => args.push(OscArg::Float(field_f32(obj, name)?)),
        }
    }
    if let Some(extra) = obj
        .keys()
        .find(|k| *k != "address" && !names.contains(&k.as_str()))
    {
        return Err(SchemaError::Bridge(format!("unexpected field {extra:?}")));
    }
    ControlMessage::try_from(&OscMessage::new(address, args))
}

/// Field names per message kind, the contract the browser client mirrors.
pub fn bridge_schema() -> Value {
    json!({
        "/ctrl/<id>/stick": ["x", "y"],
        "/ctrl/<id>/force": ["fx", "fy"],
        "/ctrl/<id>/join": [],
        "/ctrl/<id>/leave": [],
        "/game/state": ["px", "py", "vx", "vy", "status"],
        "/session/haptics": ["on"],
    })
}
