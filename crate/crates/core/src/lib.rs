//! Deterministic runtime for simulation-based programming.
//!
//! A [`Configuration`] is a map of named [`World`]s, each a map of typeless
//! [`Entity`] values carrying data entries, transition descriptions and
//! processes. Every tick the [`scheduler::Engine`] runs one segment of each
//! due process against the tick-open snapshot, collects the updates they
//! produce into per-entity buckets and commits those buckets atomically via
//! [`update::apply_all`].
//!
//! The crate is `no_std` (with `alloc`). File formats, the external driver
//! transport and the command line live in the companion `sbp` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod macros;
pub mod model;
pub mod name;
pub mod rng;
pub mod scheduler;
pub mod semantics;
pub mod tdl;
pub mod text;
pub mod trace;
pub mod update;
pub mod value;

pub use model::{
    clone_world, resolve_path, validate_configuration, Configuration, Cursor, Entity, Located, Path, Process,
    ProcessState, Severity, Tick, TransitionDescription, Violation, World,
};
pub use name::Name;
pub use update::{ConflictPolicy, CoreUpdate, Guard, ResultStructure, Update};
pub use value::{Datum, Value};
