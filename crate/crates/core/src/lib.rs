//! Shared-haptics multiplayer controllers, emulated in software.
//!
//! Virtual force-feedback joysticks are coupled so each player feels the
//! others' sticks, and together they steer a penguin sliding on ice. The
//! session server speaks OSC to controllers (and JSON to browser clients
//! through a bridge), and scripted agents stand in for players in headless
//! experiments.

pub mod agents;
pub mod coupling;
pub mod device;
pub mod experiment;
pub mod game;
pub mod osc;
pub mod replay;
pub mod schema;
pub mod server;
pub mod session;
pub mod transport;
pub mod vec2;

pub use device::Deflection2D;
pub use vec2::Vec2;
