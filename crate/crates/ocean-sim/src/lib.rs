//! Deterministic discrete-event simulator for mobile ad hoc networks under
//! misbehavior: source routing with a watchdog, per-neighbor ratings and
//! rank-based route avoidance, a forwarding-credit economy, an
//! accusation-gossip baseline, and an experiment harness on top.

pub mod behavior;
pub mod chips;
pub mod config;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod ranker;
pub mod routing;
pub mod sechand;
pub mod trace;
pub mod watch;
