//! Scripted players.
//!
//! An agent never sets its deflection directly: it chooses a desired
//! deflection and pushes its simulated handle there with a hand torque, so
//! coupling forces can move it the same way they move a human hand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::device::{ActuatorParams, JoystickState};
use crate::game::Status;
use crate::vec2::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    /// Steers the penguin toward `target` with a speed governor.
    GoalSeeker { target: Vec2 },
    /// Holds one deflection no matter what happens.
    Stubborn { direction: Vec2 },
    /// Leans against the penguin's current velocity.
    Braker,
    /// A goal seeker whose intent wobbles around the seeker's choice.
    Noisy {
        target: Vec2,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
    },
}

fn default_noise_scale() -> f64 {
    0.15
}

/// Hand and steering tuning shared by all policy kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    /// Hand stiffness toward the desired deflection, N·m per unit deflection.
    pub reaction_gain: f64,
    /// Hand damping, N·m·s.
    pub hand_damping: f64,
    /// Cruise speed the governor allows, m/s.
    pub cruise_speed: f64,
    /// Allowed speed per meter of remaining distance, 1/s.
    pub governor_gain: f64,
    /// Deflection per m/s of velocity error.
    pub velocity_gain: f64,
    /// Correlation time of the intent noise, s.
    pub noise_tau: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            reaction_gain: 4.0,
            hand_damping: 2.0,
            cruise_speed: 3.0,
            governor_gain: 1.0,
            velocity_gain: 0.8,
            noise_tau: 0.5,
        }
    }
}

/// What an agent can see: its own handle and the latest world broadcast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub handle: JoystickState,
    pub penguin: Option<PenguinView>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenguinView {
    pub position: Vec2,
    pub velocity: Vec2,
    pub status: Status,
}

#[derive(Clone, Debug)]
pub struct AgentPolicy {
    kind: PolicyKind,
    params: AgentParams,
    rng: ChaCha8Rng,
    noise: Vec2,
}

impl AgentPolicy {
    pub fn new(kind: PolicyKind, params: AgentParams, seed: u64) -> Self {
        Self {
            kind,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: Vec2::ZERO,
        }
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    fn seek(&self, target: Vec2, penguin: Option<&PenguinView>) -> Vec2 {
        let Some(p) = penguin else {
            return Vec2::ZERO;
        };
        let to_target = target - p.position;
        let dist = to_target.norm();
        let wanted_velocity = if dist > 0.0 {
            let speed = self
                .params
                .cruise_speed
                .min(self.params.governor_gain * dist);
            to_target * (speed / dist)
        } else {
            Vec2::ZERO
        };
        ((wanted_velocity - p.velocity) * self.params.velocity_gain).clamp_abs(1.0)
    }

    /// Advances the intent noise by one policy step of `dt` seconds.
    fn advance_noise(&mut self, scale: f64, dt: f64) -> Vec2 {
        let tau = self.params.noise_tau;
        let decay = (-dt / tau).exp();
        let spread = scale * (1.0 - decay * decay).sqrt();
        let nx: f64 = StandardNormal.sample(&mut self.rng);
        let ny: f64 = StandardNormal.sample(&mut self.rng);
        self.noise = self.noise * decay + Vec2::new(nx, ny) * spread;
        self.noise
    }

    /// Desired deflection for this step; advances the noise state of `Noisy`.
    pub fn desired_deflection(&mut self, obs: &Observation, dt: f64) -> Vec2 {
        let penguin = obs.penguin.as_ref();
        match self.kind {
            PolicyKind::GoalSeeker { target } => self.seek(target, penguin),
            PolicyKind::Stubborn { direction } => direction.clamp_abs(1.0),
            PolicyKind::Braker => match penguin {
                Some(p) if p.velocity.norm() > 1e-9 => -p.velocity / p.velocity.norm(),
                _ => Vec2::ZERO,
            },
            PolicyKind::Noisy {
                target,
                noise_scale,
            } => {
                let base = self.seek(target, penguin);
                let wobble = self.advance_noise(noise_scale, dt);
                (base + wobble).clamp_abs(1.0)
            }
        }
    }

    /// Hand torque on the agent's own handle for one device step.
    ///
    /// The hand holds the desired deflection against the centering spring and
    /// corrects errors with a spring-damper, so without coupling the handle
    /// settles exactly on the desired deflection.
    pub fn policy_step(&mut self, obs: &Observation, actuator: &ActuatorParams, dt: f64) -> Vec2 {
        let desired = self.desired_deflection(obs, dt);
        let position = obs.handle.position.as_vec();
        desired * actuator.centering_stiffness + (desired - position) * self.params.reaction_gain
            - obs.handle.velocity * self.params.hand_damping
    }
}
