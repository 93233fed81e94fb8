//! Tokamak-agnostic supervisory plasma control layer with a 0-D surrogate
//! plant.
//!
//! The loop per tick: [`monitor`] discretizes signals into event levels, the
//! [`supervisor`] maps them through danger and reaction machines to a scenario
//! and its active tasks, the [`actuator`] manager allocates shared resources,
//! [`controllers`] turn grants into commands, and the [`plant`] advances under
//! the merged commands. [`harness`] wires it together and writes traces.

pub mod actuator;
pub mod controllers;
pub mod error;
pub mod harness;
pub mod monitor;
pub mod plant;
pub mod schedule;
pub mod state;
pub mod supervisor;
pub mod trace;
pub mod units;

pub use error::{ConfigError, MonitorFault, PcsError, SimFault};
