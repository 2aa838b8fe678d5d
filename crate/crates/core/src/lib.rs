//! Deterministic multi-agent simulator for distributed patient scheduling.
//!
//! Resources are autonomous agents that hold only their own queue. When a
//! resource is over capacity it negotiates with its ring neighbours by
//! message and hands off its lowest-priority waiting patients, one at a
//! time (DOPS) or as a group (DOPSG). FCFS and WSPT are local baselines
//! that never migrate.

pub mod cli;
pub mod domain;
pub mod engine;
pub mod metrics;
pub mod migration;
pub mod policies;
pub mod scenario;
