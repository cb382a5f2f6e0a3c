//! Authoritative real-time session.
//!
//! The session owns every controller slot and the penguin world. It runs on a
//! virtual clock: [`Session::step`] advances one device tick, and every
//! `device_hz / game_hz` device ticks it also runs a game tick and appends a
//! [`TickRecord`]. Real-time pacing is the caller's business.
//!
//! All traffic with players is OSC bytes over a [`Transport`]. Agents are
//! hosted in-process behind their own link, so link latency affects them
//! exactly as it affects a remote controller.

mod config;
mod record;

use log::{debug, warn};
use thiserror::Error;

use crate::agents::{AgentPolicy, Observation, PenguinView};
use crate::coupling::{coupling_forces, disagreement_index, CouplingGains};
use crate::device::{
    read_deflection, step_handle, torque_to_current, Deflection2D, DeviceError, JoystickState,
};
use crate::game::{aggregate_inputs, step_world, GameError, GameParams, PenguinWorld};
use crate::osc::{decode_osc, encode_osc};
use crate::schema::{ControlMessage, GameStateMsg, PlayerId, MAX_PLAYERS};
use crate::transport::{memory_link, LatencyChannel, MemoryEndpoint, SimTime, Transport};
use crate::vec2::Vec2;

pub use config::{AgentSpec, GameTuning, Phase, RunConfig, SessionConfig};
pub use record::{csv_header, records_to_csv, CsvLog, PlayerRecord, TickRecord};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("slot {slot} outside 1..={max}")]
    SlotOutOfRange { slot: i64, max: u8 },
    #[error("slot {0} is already bound")]
    SlotOccupied(PlayerId),
    #[error("slot {0} is not bound")]
    SlotEmpty(PlayerId),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Derives an independent stream seed from the session seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(base ^ splitmix(stream))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// Fewer than two players are bound; nothing advanced.
    Paused,
    /// One device tick ran; `game_tick` tells whether a game tick followed.
    Advanced {
        game_tick: bool,
    },
    Finished,
}

/// A force message sent on one device tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceCommand {
    pub player: PlayerId,
    /// Coupling torque before conversion, N·m.
    pub torque: Vec2,
    /// Commanded current, A.
    pub current: Vec2,
}

/// What the session believes about one player's handle.
#[derive(Clone, Copy, Debug)]
struct HandleView {
    position: Deflection2D,
    velocity: Vec2,
    /// Device tick of the last stick report (or of the join).
    last_seen: u64,
    last_report: Option<(u64, Deflection2D)>,
}

/// An agent's side of the link: its own handle, its policy and what it has heard.
struct AgentHost {
    player: PlayerId,
    policy: AgentPolicy,
    handle: JoystickState,
    link: Box<dyn Transport>,
    current: Vec2,
    penguin: Option<PenguinView>,
}

struct Slot {
    link: Box<dyn Transport>,
    agent: Option<AgentHost>,
    view: HandleView,
    torque: Vec2,
    current: Vec2,
}

pub struct Session {
    config: SessionConfig,
    game_params: GameParams,
    dt_device: f64,
    tick_us: u64,
    ticks_per_game: u64,
    stale_ticks: u64,
    slots: [Option<Slot>; MAX_PLAYERS as usize],
    world: PenguinWorld,
    haptics: bool,
    pending_haptics: Option<bool>,
    device_ticks: u64,
    game_ticks: u64,
    phase: usize,
    phase_ticks: u64,
    finished: bool,
    records: Vec<TickRecord>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let tick_us = 1_000_000 / u64::from(config.device_hz);
        let haptics = config
            .scenario
            .first()
            .map_or(config.haptic_enabled, |p| p.haptics);
        Ok(Self {
            game_params: config.game_params(),
            dt_device: config.device_dt(),
            tick_us,
            ticks_per_game: config.ticks_per_game_tick(),
            stale_ticks: (config.stale_after_ms * 1000).div_ceil(tick_us),
            slots: Default::default(),
            world: PenguinWorld::new(&config.course),
            haptics,
            pending_haptics: None,
            device_ticks: 0,
            game_ticks: 0,
            phase: 0,
            phase_ticks: 0,
            finished: false,
            records: Vec::new(),
            config,
        })
    }

    /// Builds a session with every scripted agent of `run` joined.
    pub fn from_run_config(run: &RunConfig) -> Result<Self, SessionError> {
        run.validate()?;
        let mut session = Session::new(run.session.clone())?;
        for agent in &run.agents {
            session.join_agent(agent)?;
        }
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        SimTime(self.device_ticks * self.tick_us)
    }

    pub fn world(&self) -> &PenguinWorld {
        &self.world
    }

    pub fn haptics_enabled(&self) -> bool {
        self.pending_haptics.unwrap_or(self.haptics)
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn device_ticks(&self) -> u64 {
        self.device_ticks
    }

    pub fn game_ticks(&self) -> u64 {
        self.game_ticks
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<TickRecord> {
        std::mem::take(&mut self.records)
    }

    pub fn bound_players(&self) -> Vec<PlayerId> {
        PlayerId::all()
            .filter(|p| self.slots[p.index()].is_some())
            .collect()
    }

    pub fn is_runnable(&self) -> bool {
        !self.finished && self.bound_players().len() >= 2
    }

    /// The simulated handle of an agent slot.
    pub fn agent_handle(&self, player: PlayerId) -> Option<JoystickState> {
        self.slots[player.index()]
            .as_ref()
            .and_then(|s| s.agent.as_ref())
            .map(|a| a.handle)
    }

    /// The session's current view of a player's deflection.
    pub fn reported_deflection(&self, player: PlayerId) -> Option<Deflection2D> {
        self.slots[player.index()].as_ref().map(|s| s.view.position)
    }

    fn check_slot(&self, slot: i64) -> Result<PlayerId, SessionError> {
        let out_of_range = SessionError::SlotOutOfRange {
            slot,
            max: self.config.player_count,
        };
        let player = PlayerId::new(slot).map_err(|_| out_of_range)?;
        if player.get() > self.config.player_count {
            return Err(SessionError::SlotOutOfRange {
                slot,
                max: self.config.player_count,
            });
        }
        Ok(player)
    }

    /// Binds a remote controller's link to a slot.
    pub fn handle_join(
        &mut self,
        slot: i64,
        link: Box<dyn Transport>,
    ) -> Result<PlayerId, SessionError> {
        let player = self.check_slot(slot)?;
        if self.slots[player.index()].is_some() {
            return Err(SessionError::SlotOccupied(player));
        }
        let link: Box<dyn Transport> = if self.config.latency.is_zero() {
            link
        } else {
            let seed = derive_seed(self.config.seed, 0x1000 + u64::from(player.get()));
            Box::new(LatencyChannel::new(link, self.config.latency, seed))
        };
        self.slots[player.index()] = Some(Slot {
            link,
            agent: None,
            view: HandleView {
                position: Deflection2D::CENTER,
                velocity: Vec2::ZERO,
                last_seen: self.device_ticks,
                last_report: None,
            },
            torque: Vec2::ZERO,
            current: Vec2::ZERO,
        });
        debug!("slot {player} joined");
        Ok(player)
    }

    /// Binds a scripted agent, hosted in-process behind its own link.
    pub fn join_agent(&mut self, spec: &AgentSpec) -> Result<PlayerId, SessionError> {
        let (server_end, agent_end): (MemoryEndpoint, MemoryEndpoint) = memory_link();
        let player = self.handle_join(i64::from(spec.slot), Box::new(server_end))?;
        let seed = derive_seed(self.config.seed, u64::from(player.get()));
        let slot = self.slots[player.index()].as_mut().expect("just bound");
        slot.agent = Some(AgentHost {
            player,
            policy: AgentPolicy::new(spec.policy, spec.params, seed),
            handle: JoystickState::default(),
            link: Box::new(agent_end),
            current: Vec2::ZERO,
            penguin: None,
        });
        Ok(player)
    }

    pub fn handle_leave(&mut self, slot: i64) -> Result<(), SessionError> {
        let player = self.check_slot(slot)?;
        match self.slots[player.index()].take() {
            Some(_) => {
                debug!("slot {player} left");
                Ok(())
            }
            None => Err(SessionError::SlotEmpty(player)),
        }
    }

    /// Takes effect at the next device tick boundary.
    pub fn set_haptic_mode(&mut self, on: bool) {
        self.pending_haptics = Some(on);
    }

    fn active_gains(&self) -> CouplingGains {
        if self.haptics {
            self.config.gains
        } else {
            self.config.gains.off()
        }
    }

    /// Advances one device tick, plus a game tick when one is due.
    pub fn step(&mut self) -> Result<StepOutcome, SessionError> {
        if self.finished {
            return Ok(StepOutcome::Finished);
        }
        if self.bound_players().len() < 2 {
            return Ok(StepOutcome::Paused);
        }
        self.device_tick()?;
        let game_tick = self.device_ticks.is_multiple_of(self.ticks_per_game);
        if game_tick {
            self.game_tick()?;
        }
        Ok(StepOutcome::Advanced { game_tick })
    }

    /// Steps until the scenario ends, the session pauses, or `max_game_ticks`
    /// game ticks have been recorded in total.
    pub fn run(&mut self, max_game_ticks: u64) -> Result<StepOutcome, SessionError> {
        loop {
            if self.game_ticks >= max_game_ticks {
                return Ok(StepOutcome::Advanced { game_tick: true });
            }
            match self.step()? {
                StepOutcome::Advanced { .. } => {}
                other => return Ok(other),
            }
        }
    }

    fn ingest(&mut self, now: SimTime) {
        let tick = self.device_ticks;
        let dt = self.dt_device;
        let stale_ticks = self.stale_ticks;
        let actuator = self.config.actuator;
        for (index, slot) in self.slots.iter_mut().enumerate() {
            let Some(slot) = slot.as_mut() else { continue };
            let mut latest = None;
            loop {
                match slot.link.recv(now) {
                    Ok(Some(bytes)) => match decode_osc(&bytes)
                        .map_err(|e| e.to_string())
                        .and_then(|m| ControlMessage::try_from(&m).map_err(|e| e.to_string()))
                    {
                        Ok(ControlMessage::Stick { player, x, y }) if player.index() == index => {
                            match Deflection2D::new(f64::from(x), f64::from(y)) {
                                Ok(d) => latest = Some(d),
                                Err(e) => warn!("slot {}: {e}", index + 1),
                            }
                        }
                        Ok(other) => debug!("slot {}: ignoring {}", index + 1, other.address()),
                        Err(e) => warn!("slot {}: malformed message: {e}", index + 1),
                    },
                    Ok(None) => break,
                    Err(e) => {
                        warn!("slot {}: receive failed: {e}", index + 1);
                        break;
                    }
                }
            }
            let view = &mut slot.view;
            if let Some(d) = latest {
                view.velocity = match view.last_report {
                    Some((t0, p0)) if t0 < tick => {
                        (d.as_vec() - p0.as_vec()) / ((tick - t0) as f64 * dt)
                    }
                    _ => Vec2::ZERO,
                };
                view.position = d;
                view.last_report = Some((tick, d));
                view.last_seen = tick;
            } else if tick.saturating_sub(view.last_seen) > stale_ticks {
                // a released stick re-centers on its own spring
                let state = JoystickState {
                    position: view.position,
                    velocity: view.velocity,
                    applied_current: Vec2::ZERO,
                };
                if let Ok(next) = step_handle(&state, Vec2::ZERO, Vec2::ZERO, dt, &actuator) {
                    view.position = next.position;
                    view.velocity = next.velocity;
                }
            }
        }
    }

    /// Ingests stick reports, computes coupling, sends one force message per
    /// player and steps the hosted agents.
    pub fn device_tick(&mut self) -> Result<Vec<ForceCommand>, SessionError> {
        if let Some(on) = self.pending_haptics.take() {
            self.haptics = on;
        }
        let now = self.now();
        self.ingest(now);

        let players = self.bound_players();
        let mut commands = Vec::with_capacity(players.len());
        if !players.is_empty() {
            let positions: Vec<Deflection2D> = players
                .iter()
                .map(|p| self.slots[p.index()].as_ref().expect("bound").view.position)
                .collect();
            let velocities: Vec<Vec2> = players
                .iter()
                .map(|p| self.slots[p.index()].as_ref().expect("bound").view.velocity)
                .collect();
            let forces = coupling_forces(&positions, &velocities, &self.active_gains())
                .expect("positions and velocities come from the same slots");
            for (player, torque) in players.iter().zip(forces.into_inner()) {
                let current = torque_to_current(torque, &self.config.actuator)?;
                let slot = self.slots[player.index()].as_mut().expect("bound");
                slot.torque = torque;
                slot.current = current;
                let msg = ControlMessage::Force {
                    player: *player,
                    fx: current.x as f32,
                    fy: current.y as f32,
                };
                let bytes = encode_osc(&msg.to_osc()).expect("schema addresses are valid");
                if let Err(e) = slot.link.send(bytes, now) {
                    warn!("slot {player}: send failed: {e}");
                }
                commands.push(ForceCommand {
                    player: *player,
                    torque,
                    current,
                });
            }
        }

        let dt = self.dt_device;
        let actuator = self.config.actuator;
        for slot in self.slots.iter_mut().flatten() {
            if let Some(agent) = slot.agent.as_mut() {
                agent.step(now, dt, &actuator)?;
            }
        }

        self.device_ticks += 1;
        Ok(commands)
    }

    /// Aggregates inputs, steps the world, broadcasts it and records the tick.
    pub fn game_tick(&mut self) -> Result<TickRecord, SessionError> {
        let players = self.bound_players();
        let deflections: Vec<Deflection2D> = players
            .iter()
            .map(|p| self.slots[p.index()].as_ref().expect("bound").view.position)
            .collect();
        let command = aggregate_inputs(&deflections)?;
        self.world = step_world(&self.world, command, &self.game_params)?;

        let now = self.now();
        let state = ControlMessage::GameState(GameStateMsg {
            position: [self.world.position.x as f32, self.world.position.y as f32],
            velocity: [self.world.velocity.x as f32, self.world.velocity.y as f32],
            status: self.world.status,
        });
        let bytes = encode_osc(&state.to_osc()).expect("schema addresses are valid");
        for (player, slot) in PlayerId::all().zip(self.slots.iter_mut()) {
            if let Some(slot) = slot {
                if let Err(e) = slot.link.send(bytes.clone(), now) {
                    warn!("slot {player}: broadcast failed: {e}");
                }
            }
        }

        let mut per_player: [Option<PlayerRecord>; MAX_PLAYERS as usize] = Default::default();
        for (rec, slot) in per_player.iter_mut().zip(&self.slots) {
            *rec = slot.as_ref().map(|s| PlayerRecord {
                deflection: s.view.position,
                force: s.torque,
                current: s.current,
            });
        }
        let record = TickRecord {
            tick: self.game_ticks,
            phase: self.phase,
            haptics: self.haptics,
            players: per_player,
            command,
            world: self.world,
            disagreement: disagreement_index(&deflections).unwrap_or(0.0),
        };
        self.records.push(record.clone());
        self.game_ticks += 1;
        self.phase_ticks += 1;
        self.advance_phase();
        Ok(record)
    }

    fn advance_phase(&mut self) {
        let terminal = self.world.status.is_terminal();
        let Some(phase) = self.config.scenario.get(self.phase).copied() else {
            // free play: a finished round respawns the penguin
            if terminal {
                self.world = PenguinWorld::new(&self.config.course);
            }
            return;
        };
        let timed_out = phase.duration_s.is_some_and(|d| {
            self.phase_ticks as f64 >= (d * f64::from(self.config.game_hz)).round()
        });
        if !(terminal || timed_out) {
            return;
        }
        self.phase += 1;
        self.phase_ticks = 0;
        match self.config.scenario.get(self.phase) {
            Some(next) => {
                debug!("phase {} begins, haptics {}", self.phase, next.haptics);
                self.pending_haptics = Some(next.haptics);
                self.world = PenguinWorld::new(&self.config.course);
            }
            None => self.finished = true,
        }
    }
}

impl AgentHost {
    fn step(
        &mut self,
        now: SimTime,
        dt: f64,
        actuator: &crate::device::ActuatorParams,
    ) -> Result<(), SessionError> {
        loop {
            match self.link.recv(now) {
                Ok(Some(bytes)) => {
                    let msg = decode_osc(&bytes)
                        .map_err(|e| e.to_string())
                        .and_then(|m| ControlMessage::try_from(&m).map_err(|e| e.to_string()));
                    match msg {
                        Ok(ControlMessage::Force { player, fx, fy }) if player == self.player => {
                            // firmware clamps to what the driver can deliver
                            self.current = Vec2::new(f64::from(fx), f64::from(fy))
                                .clamp_abs(actuator.current_max);
                        }
                        Ok(ControlMessage::GameState(s)) => {
                            self.penguin = Some(PenguinView {
                                position: s.position(),
                                velocity: s.velocity(),
                                status: s.status,
                            });
                        }
                        Ok(_) => {}
                        Err(e) => warn!("agent {}: malformed message: {e}", self.player),
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    warn!("agent {}: receive failed: {e}", self.player);
                    break;
                }
            }
        }
        let obs = Observation {
            handle: self.handle,
            penguin: self.penguin,
        };
        let torque = self.policy.policy_step(&obs, actuator, dt);
        self.handle = step_handle(&self.handle, torque, self.current, dt, actuator)?;
        let reading = read_deflection(&self.handle, actuator);
        let stick = ControlMessage::Stick {
            player: self.player,
            x: reading.x() as f32,
            y: reading.y() as f32,
        };
        let bytes = encode_osc(&stick.to_osc()).expect("schema addresses are valid");
        if let Err(e) = self.link.send(bytes, now) {
            warn!("agent {}: send failed: {e}", self.player);
        }
        Ok(())
    }
}

/// Runs a scripted session to completion (or `max_duration_s`) and returns its log.
pub fn run_scripted(run: &RunConfig) -> Result<Vec<TickRecord>, SessionError> {
    let mut session = Session::from_run_config(run)?;
    let max_ticks = (run.max_duration_s * f64::from(run.session.game_hz)).round() as u64;
    match session.run(max_ticks)? {
        StepOutcome::Paused => Err(SessionError::Config(
            "a scripted run needs at least two agents".into(),
        )),
        _ => Ok(session.take_records()),
    }
}
