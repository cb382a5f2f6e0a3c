//! One log row per game tick.
//!
//! Floats use Rust's shortest round-trip formatting, so a row is a lossless,
//! byte-stable image of the simulation state.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::device::Deflection2D;
use crate::game::PenguinWorld;
use crate::schema::MAX_PLAYERS;
use crate::vec2::Vec2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlayerRecord {
    /// The session's view of the player's deflection.
    pub deflection: Deflection2D,
    /// Coupling torque computed on the last device tick, N·m.
    pub force: Vec2,
    /// Current commanded on the last device tick, A.
    pub current: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub phase: usize,
    pub haptics: bool,
    /// Indexed by slot; `None` for unbound slots.
    pub players: [Option<PlayerRecord>; MAX_PLAYERS as usize],
    pub command: Deflection2D,
    pub world: PenguinWorld,
    pub disagreement: f64,
}

pub fn csv_header() -> String {
    let mut h = String::from("tick,phase,haptics");
    for i in 1..=MAX_PLAYERS {
        for col in ["bound", "x", "y", "fx", "fy", "ix", "iy"] {
            let _ = write!(h, ",p{i}_{col}");
        }
    }
    h.push_str(",cmd_x,cmd_y,px,py,vx,vy,status,elapsed,disagreement");
    h
}

impl TickRecord {
    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{},{}", self.tick, self.phase, u8::from(self.haptics));
        for p in &self.players {
            match p {
                Some(p) => {
                    let _ = write!(
                        row,
                        ",1,{},{},{},{},{},{}",
                        p.deflection.x(),
                        p.deflection.y(),
                        p.force.x,
                        p.force.y,
                        p.current.x,
                        p.current.y
                    );
                }
                None => row.push_str(",0,,,,,,"),
            }
        }
        let w = &self.world;
        let _ = write!(
            row,
            ",{},{},{},{},{},{},{},{},{}",
            self.command.x(),
            self.command.y(),
            w.position.x,
            w.position.y,
            w.velocity.x,
            w.velocity.y,
            w.status,
            w.elapsed,
            self.disagreement
        );
        row
    }

    pub fn bound_deflections(&self) -> Vec<Deflection2D> {
        self.players
            .iter()
            .flatten()
            .map(|p| p.deflection)
            .collect()
    }
}

/// The complete CSV text for a run.
pub fn records_to_csv(records: &[TickRecord]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Streams rows to a writer as they are produced.
pub struct CsvLog<W: Write> {
    out: W,
}

impl<W: Write> CsvLog<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", csv_header())?;
        Ok(Self { out })
    }

    pub fn append(&mut self, record: &TickRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.csv_row())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
