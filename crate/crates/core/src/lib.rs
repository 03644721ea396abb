//! Cycle-level simulator of a mesh network-on-chip with separate narrow and
//! wide physical networks and AXI-ordering network interfaces.

pub mod axi;
pub mod check;
pub mod experiment;
pub mod kernel;
pub mod link;
pub mod metrics;
pub mod ni;
pub mod par;
pub mod router;
pub mod tile;
pub mod topology;
pub mod traffic;
