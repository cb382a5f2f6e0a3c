//! One emulated force-feedback controller.
//!
//! The handle is a per-axis decoupled second-order plant driven by the
//! player's torque and the motor torque. The motor is commanded in amperes,
//! so every coupling torque takes a torque -> current -> torque round trip
//! through the actuator, including its saturation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec2::Vec2;

/// Largest device step accepted by [`step_handle`], in seconds.
pub const MAX_DEVICE_DT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("non-finite {what}: ({x}, {y})")]
    NonFinite { what: &'static str, x: f64, y: f64 },
    #[error("current ({x}, {y}) A exceeds current_max {max} A")]
    CurrentOutOfRange { x: f64, y: f64, max: f64 },
    #[error("device step dt must be in (0, {MAX_DEVICE_DT}] s, got {0}")]
    BadStep(f64),
    #[error("invalid actuator parameter {name} = {value}")]
    BadParam { name: &'static str, value: f64 },
}

fn finite(what: &'static str, v: Vec2) -> Result<Vec2, DeviceError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DeviceError::NonFinite {
            what,
            x: v.x,
            y: v.y,
        })
    }
}

/// Normalized joystick tilt. Each axis is finite and within `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Deflection2D {
    x: f64,
    y: f64,
}

impl Deflection2D {
    pub const CENTER: Deflection2D = Deflection2D { x: 0.0, y: 0.0 };

    /// Builds a deflection, clamping each axis into `[-1, 1]`.
    pub fn new(x: f64, y: f64) -> Result<Self, DeviceError> {
        Self::from_vec(Vec2::new(x, y))
    }

    pub fn from_vec(v: Vec2) -> Result<Self, DeviceError> {
        let v = finite("deflection", v)?.clamp_abs(1.0);
        Ok(Self { x: v.x, y: v.y })
    }

    pub fn x(self) -> f64 {
        self.x
    }

    pub fn y(self) -> f64 {
        self.y
    }

    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

impl TryFrom<[f64; 2]> for Deflection2D {
    type Error = DeviceError;
    fn try_from([x, y]: [f64; 2]) -> Result<Self, DeviceError> {
        Self::new(x, y)
    }
}

impl From<Deflection2D> for [f64; 2] {
    fn from(d: Deflection2D) -> Self {
        [d.x, d.y]
    }
}

/// Abstract actuator and handle plant of one controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorParams {
    /// N·m per ampere.
    pub torque_constant: f64,
    /// Per-axis current saturation, amperes.
    pub current_max: f64,
    /// Normalized handle inertia.
    pub handle_inertia: f64,
    /// Viscous damping, N·m·s per unit deflection rate.
    pub damping: f64,
    /// Self-centering spring, N·m per unit deflection.
    pub centering_stiffness: f64,
    /// ADC resolution applied by [`read_deflection`]; `None` reads the raw position.
    pub adc_bits: Option<u32>,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            torque_constant: 0.02,
            current_max: 3.0,
            handle_inertia: 1.0,
            damping: 0.8,
            centering_stiffness: 2.0,
            adc_bits: None,
        }
    }
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let positive = [
            ("torque_constant", self.torque_constant),
            ("current_max", self.current_max),
            ("handle_inertia", self.handle_inertia),
            ("damping", self.damping),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(DeviceError::BadParam { name, value });
            }
        }
        if !(self.centering_stiffness.is_finite() && self.centering_stiffness >= 0.0) {
            return Err(DeviceError::BadParam {
                name: "centering_stiffness",
                value: self.centering_stiffness,
            });
        }
        if let Some(bits) = self.adc_bits {
            if !(1..=24).contains(&bits) {
                return Err(DeviceError::BadParam {
                    name: "adc_bits",
                    value: bits as f64,
                });
            }
        }
        Ok(())
    }

    /// Largest torque the motor can render on one axis.
    pub fn max_torque(&self) -> f64 {
        self.torque_constant * self.current_max
    }
}

/// Handle state of one controller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JoystickState {
    pub position: Deflection2D,
    /// Deflection rate per axis, 1/s.
    pub velocity: Vec2,
    /// Motor current last applied, amperes.
    pub applied_current: Vec2,
}

pub fn torque_to_current(torque: Vec2, params: &ActuatorParams) -> Result<Vec2, DeviceError> {
    let torque = finite("torque", torque)?;
    Ok((torque / params.torque_constant).clamp_abs(params.current_max))
}

pub fn current_to_torque(current: Vec2, params: &ActuatorParams) -> Result<Vec2, DeviceError> {
    let current = finite("current", current)?;
    if current.x.abs() > params.current_max || current.y.abs() > params.current_max {
        return Err(DeviceError::CurrentOutOfRange {
            x: current.x,
            y: current.y,
            max: params.current_max,
        });
    }
    Ok(current * params.torque_constant)
}

/// Advances the handle one device step with semi-implicit Euler.
///
/// The mechanical gate is a hard stop: an axis that would leave `[-1, 1]` is
/// pinned to the limit and its velocity zeroed.
pub fn step_handle(
    state: &JoystickState,
    user_torque: Vec2,
    coupling_current: Vec2,
    dt: f64,
    params: &ActuatorParams,
) -> Result<JoystickState, DeviceError> {
    if !(dt > 0.0 && dt <= MAX_DEVICE_DT) {
        return Err(DeviceError::BadStep(dt));
    }
    let user_torque = finite("user torque", user_torque)?;
    finite("velocity", state.velocity)?;
    let motor_torque = current_to_torque(coupling_current, params)?;

    let axis = |p: f64, v: f64, user: f64, motor: f64| -> (f64, f64) {
        let accel = (user + motor - params.damping * v - params.centering_stiffness * p)
            / params.handle_inertia;
        let v = v + accel * dt;
        let p = p + v * dt;
        if p > 1.0 {
            (1.0, 0.0)
        } else if p < -1.0 {
            (-1.0, 0.0)
        } else {
            (p, v)
        }
    };
    let (px, vx) = axis(
        state.position.x(),
        state.velocity.x,
        user_torque.x,
        motor_torque.x,
    );
    let (py, vy) = axis(
        state.position.y(),
        state.velocity.y,
        user_torque.y,
        motor_torque.y,
    );

    Ok(JoystickState {
        position: Deflection2D::new(px, py)?,
        velocity: finite("velocity", Vec2::new(vx, vy))?,
        applied_current: coupling_current,
    })
}

/// Quantizes one axis onto the `k / 2^(bits-1)` grid, `k` in `-2^(bits-1)..=2^(bits-1)`.
pub fn quantize_axis(value: f64, bits: u32) -> f64 {
    let half_levels = f64::from(1u32 << (bits - 1));
    ((value * half_levels).round() / half_levels).clamp(-1.0, 1.0)
}

/// Reads the handle deflection as the controller firmware would report it.
pub fn read_deflection(state: &JoystickState, params: &ActuatorParams) -> Deflection2D {
    match params.adc_bits {
        None => state.position,
        Some(bits) => Deflection2D {
            x: quantize_axis(state.position.x(), bits),
            y: quantize_axis(state.position.y(), bits),
        },
    }
}

/// ½·m·‖v‖² + ½·k·‖p‖², the handle's mechanical energy.
pub fn handle_energy(state: &JoystickState, params: &ActuatorParams) -> f64 {
    let p = state.position.as_vec();
    0.5 * params.handle_inertia * state.velocity.dot(state.velocity)
        + 0.5 * params.centering_stiffness * p.dot(p)
}
