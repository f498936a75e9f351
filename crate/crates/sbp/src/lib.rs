//! Standard-library companion to `sbp-core`: the scenario and snapshot file
//! format, JSON-lines traces, the external agent protocol, bundled native
//! behaviours and example scenarios, and the `sbp` command line.

pub mod cli;
pub mod driver;
pub mod fixtures;
pub mod natives;
pub mod scenario;
pub mod trace;
