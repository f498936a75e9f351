//! Structured trace events emitted by the scheduler.

use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{Path, Tick};
use crate::update::DropReason;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    TickOpen {
        tick: Tick,
    },
    SegmentRun {
        tick: Tick,
        process: Path,
        iteration: u64,
    },
    ProcessSuspended {
        tick: Tick,
        process: Path,
        resume_tick: Tick,
    },
    ProcessAwaiting {
        tick: Tick,
        process: Path,
        target: Path,
    },
    ProcessFinished {
        tick: Tick,
        process: Path,
        cont: bool,
    },
    ProcessCancelled {
        tick: Tick,
        process: Path,
        reason: String,
    },
    ProcessRespawned {
        tick: Tick,
        process: Path,
        iteration: u64,
    },
    UpdateCommitted {
        tick: Tick,
        emitter: Path,
        seq: u32,
        update: String,
    },
    UpdateDropped {
        tick: Tick,
        emitter: Path,
        seq: u32,
        update: String,
        reason: DropReason,
    },
    TickAborted {
        tick: Tick,
        conflicts: usize,
    },
    TickClose {
        tick: Tick,
        committed: usize,
        dropped: usize,
        /// Replay hash after this tick, lowercase hex.
        hash: String,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::TickOpen { .. } => "tick_open",
            TraceEvent::SegmentRun { .. } => "segment_run",
            TraceEvent::ProcessSuspended { .. } => "process_suspended",
            TraceEvent::ProcessAwaiting { .. } => "process_awaiting",
            TraceEvent::ProcessFinished { .. } => "process_finished",
            TraceEvent::ProcessCancelled { .. } => "process_cancelled",
            TraceEvent::ProcessRespawned { .. } => "process_respawned",
            TraceEvent::UpdateCommitted { .. } => "update_committed",
            TraceEvent::UpdateDropped { .. } => "update_dropped",
            TraceEvent::TickAborted { .. } => "tick_aborted",
            TraceEvent::TickClose { .. } => "tick_close",
        }
    }

    pub fn tick(&self) -> Tick {
        match self {
            TraceEvent::TickOpen { tick }
            | TraceEvent::SegmentRun { tick, .. }
            | TraceEvent::ProcessSuspended { tick, .. }
            | TraceEvent::ProcessAwaiting { tick, .. }
            | TraceEvent::ProcessFinished { tick, .. }
            | TraceEvent::ProcessCancelled { tick, .. }
            | TraceEvent::ProcessRespawned { tick, .. }
            | TraceEvent::UpdateCommitted { tick, .. }
            | TraceEvent::UpdateDropped { tick, .. }
            | TraceEvent::TickAborted { tick, .. }
            | TraceEvent::TickClose { tick, .. } => *tick,
        }
    }
}

pub trait TraceSink {
    fn event(&mut self, event: &TraceEvent);
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn event(&mut self, _: &TraceEvent) {}
}

impl TraceSink for Vec<TraceEvent> {
    fn event(&mut self, event: &TraceEvent) {
        self.push(event.clone());
    }
}

pub fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 15) as usize] as char);
    }
    s
}

pub fn parse_hex32(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let pair = core::str::from_utf8(chunk).ok()?;
        out[i] = u8::from_str_radix(pair, 16).ok()?;
    }
    Some(out)
}
