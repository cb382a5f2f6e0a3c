//! Player-to-player haptic coupling.
//!
//! Each handle is pulled toward the mean of the *other* players' handles by a
//! spring-damper, clipped per axis. Aligned players feel nothing, opposed
//! players feel the strongest pull, and with three or more players one handle
//! is dragged toward the group.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::Deflection2D;
use crate::vec2::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("no players")]
    Empty,
    #[error("{positions} positions but {velocities} velocities")]
    LengthMismatch { positions: usize, velocities: usize },
    #[error("disagreement needs at least two players, got {0}")]
    TooFewPlayers(usize),
    #[error("invalid coupling gain {name} = {value}")]
    BadGain { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingGains {
    /// N·m per unit deflection difference.
    pub k_p: f64,
    /// N·m·s per unit deflection-rate difference.
    pub k_d: f64,
    /// Per-axis torque clip, N·m. May be infinite.
    pub f_max: f64,
}

impl Default for CouplingGains {
    fn default() -> Self {
        Self {
            k_p: 1.5,
            k_d: 0.05,
            // torque_constant · current_max of the default actuator
            f_max: 0.02 * 3.0,
        }
    }
}

impl CouplingGains {
    /// The haptics-off gains: no stiffness, no damping.
    pub fn off(self) -> Self {
        Self {
            k_p: 0.0,
            k_d: 0.0,
            ..self
        }
    }

    pub fn is_off(&self) -> bool {
        self.k_p == 0.0 && self.k_d == 0.0
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        for (name, value) in [("k_p", self.k_p), ("k_d", self.k_d)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(CouplingError::BadGain { name, value });
            }
        }
        if self.f_max.is_nan() || self.f_max <= 0.0 {
            return Err(CouplingError::BadGain {
                name: "f_max",
                value: self.f_max,
            });
        }
        Ok(())
    }
}

/// One clipped torque per player, in player order.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingForceSet(Vec<Vec2>);

impl CouplingForceSet {
    pub fn forces(&self) -> &[Vec2] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<Vec2> {
        self.0
    }
}

/// Mean of `values[j] − values[skip]` over the others. Differences are taken
/// first so identical inputs give an exact zero.
fn mean_offset(values: &[Vec2], skip: usize) -> Vec2 {
    let mut sum = Vec2::ZERO;
    for (j, v) in values.iter().enumerate() {
        if j != skip {
            sum += *v - values[skip];
        }
    }
    sum / (values.len() - 1) as f64
}

/// Coupling torque for every player before the per-axis clip.
pub fn unclipped_forces(
    positions: &[Deflection2D],
    velocities: &[Vec2],
    gains: &CouplingGains,
) -> Result<Vec<Vec2>, CouplingError> {
    if positions.len() != velocities.len() {
        return Err(CouplingError::LengthMismatch {
            positions: positions.len(),
            velocities: velocities.len(),
        });
    }
    if positions.is_empty() {
        return Err(CouplingError::Empty);
    }
    if positions.len() == 1 {
        return Ok(vec![Vec2::ZERO]);
    }
    let points: Vec<Vec2> = positions.iter().map(|p| p.as_vec()).collect();
    Ok((0..points.len())
        .map(|i| {
            let pull = mean_offset(&points, i);
            let drag = mean_offset(velocities, i);
            pull * gains.k_p + drag * gains.k_d
        })
        .collect())
}

pub fn coupling_forces(
    positions: &[Deflection2D],
    velocities: &[Vec2],
    gains: &CouplingGains,
) -> Result<CouplingForceSet, CouplingError> {
    let raw = unclipped_forces(positions, velocities, gains)?;
    Ok(CouplingForceSet(
        raw.into_iter().map(|f| f.clamp_abs(gains.f_max)).collect(),
    ))
}

/// Mean Euclidean distance over unordered player pairs.
pub fn disagreement_index(positions: &[Deflection2D]) -> Result<f64, CouplingError> {
    let n = positions.len();
    if n < 2 {
        return Err(CouplingError::TooFewPlayers(n));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (positions[i].as_vec() - positions[j].as_vec()).norm();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}
