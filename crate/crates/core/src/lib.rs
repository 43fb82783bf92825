//! Parallel trusted-node satellite QKD relay: key algebra, adversary oracle,
//! toy QKD sessions, pass geometry, link budget, compatibility checks, and a
//! deterministic discrete-event simulator tying them together.

pub mod adversary;
pub mod channel;
pub mod keycore;
pub mod ogscompat;
pub mod orbitpass;
pub mod qkdsession;
pub mod scenario;
pub mod simnet;

pub use keycore::{KeyMaterial, ParityRecord};
pub use scenario::ScenarioConfig;
pub use simnet::SimulationReport;
