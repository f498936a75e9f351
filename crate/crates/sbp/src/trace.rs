//! The `.trace` log: one JSON object per line, one line per event.
//!
//! Every line has `tick`, `kind` and `subject` (a path, empty for tick-level
//! events) plus kind-specific fields. Keys are written in sorted order:
//!
//! ```text
//! {"kind":"update_committed","seq":0,"subject":"w.ch1.move","tick":3,"update":"set_data w.ch1.loc=(2,5)"}
//! {"committed":1,"dropped":0,"kind":"tick_close","replay_hash":"9f2c...","subject":"","tick":3}
//! ```

use std::collections::BTreeMap;
use std::io::{self, Write};

use sbp_core::trace::{TraceEvent, TraceSink};
use sbp_core::update::DropReason;
use sbp_core::Path;
use serde_json::{json, Map, Value as Json};

pub fn to_json(event: &TraceEvent) -> Json {
    let mut m = Map::new();
    m.insert("tick".into(), json!(event.tick()));
    m.insert("kind".into(), json!(event.kind()));
    let mut put = |k: &str, v: Json| {
        m.insert(k.into(), v);
    };
    match event {
        TraceEvent::TickOpen { .. } => put("subject", json!("")),
        TraceEvent::SegmentRun { process, iteration, .. } | TraceEvent::ProcessRespawned { process, iteration, .. } => {
            put("subject", json!(process.to_string()));
            put("iteration", json!(iteration));
        }
        TraceEvent::ProcessSuspended {
            process, resume_tick, ..
        } => {
            put("subject", json!(process.to_string()));
            put("resume_tick", json!(resume_tick));
        }
        TraceEvent::ProcessAwaiting { process, target, .. } => {
            put("subject", json!(process.to_string()));
            put("target", json!(target.to_string()));
        }
        TraceEvent::ProcessFinished { process, cont, .. } => {
            put("subject", json!(process.to_string()));
            put("cont", json!(cont));
        }
        TraceEvent::ProcessCancelled { process, reason, .. } => {
            put("subject", json!(process.to_string()));
            put("reason", json!(reason));
        }
        TraceEvent::UpdateCommitted {
            emitter, seq, update, ..
        } => {
            put("subject", json!(emitter.to_string()));
            put("seq", json!(seq));
            put("update", json!(update));
        }
        TraceEvent::UpdateDropped {
            emitter,
            seq,
            update,
            reason,
            ..
        } => {
            put("subject", json!(emitter.to_string()));
            put("seq", json!(seq));
            put("update", json!(update));
            put("reason", json!(reason.as_str()));
        }
        TraceEvent::TickAborted { conflicts, .. } => {
            put("subject", json!(""));
            put("conflicts", json!(conflicts));
        }
        TraceEvent::TickClose {
            committed,
            dropped,
            hash,
            ..
        } => {
            put("subject", json!(""));
            put("committed", json!(committed));
            put("dropped", json!(dropped));
            put("replay_hash", json!(hash));
        }
    }
    Json::Object(m)
}

#[derive(Debug, thiserror::Error)]
#[error("trace line: {0}")]
pub struct TraceParseError(String);

/// Inverse of [`to_json`] for one line.
pub fn parse_line(line: &str) -> Result<TraceEvent, TraceParseError> {
    let v: Json = serde_json::from_str(line).map_err(|e| TraceParseError(e.to_string()))?;
    let err = |m: &str| TraceParseError(m.to_string());
    let int = |k: &str| {
        v.get(k)
            .and_then(Json::as_u64)
            .ok_or_else(|| err(&format!("missing `{k}`")))
    };
    let text = |k: &str| {
        v.get(k)
            .and_then(Json::as_str)
            .ok_or_else(|| err(&format!("missing `{k}`")))
    };
    let path = |k: &str| -> Result<Path, TraceParseError> {
        Path::parse(text(k)?).map_err(|e| TraceParseError(e.to_string()))
    };
    let tick = int("tick")?;
    Ok(match text("kind")? {
        "tick_open" => TraceEvent::TickOpen { tick },
        "segment_run" => TraceEvent::SegmentRun {
            tick,
            process: path("subject")?,
            iteration: int("iteration")?,
        },
        "process_suspended" => TraceEvent::ProcessSuspended {
            tick,
            process: path("subject")?,
            resume_tick: int("resume_tick")?,
        },
        "process_awaiting" => TraceEvent::ProcessAwaiting {
            tick,
            process: path("subject")?,
            target: path("target")?,
        },
        "process_finished" => TraceEvent::ProcessFinished {
            tick,
            process: path("subject")?,
            cont: v
                .get("cont")
                .and_then(Json::as_bool)
                .ok_or_else(|| err("missing `cont`"))?,
        },
        "process_cancelled" => TraceEvent::ProcessCancelled {
            tick,
            process: path("subject")?,
            reason: text("reason")?.into(),
        },
        "process_respawned" => TraceEvent::ProcessRespawned {
            tick,
            process: path("subject")?,
            iteration: int("iteration")?,
        },
        "update_committed" => TraceEvent::UpdateCommitted {
            tick,
            emitter: path("subject")?,
            seq: int("seq")? as u32,
            update: text("update")?.into(),
        },
        "update_dropped" => TraceEvent::UpdateDropped {
            tick,
            emitter: path("subject")?,
            seq: int("seq")? as u32,
            update: text("update")?.into(),
            reason: match text("reason")? {
                "conflict" => DropReason::Conflict,
                "guard_failed" => DropReason::GuardFailed,
                "target_missing" => DropReason::TargetMissing,
                other => return Err(err(&format!("unknown drop reason `{other}`"))),
            },
        },
        "tick_aborted" => TraceEvent::TickAborted {
            tick,
            conflicts: int("conflicts")? as usize,
        },
        "tick_close" => TraceEvent::TickClose {
            tick,
            committed: int("committed")? as usize,
            dropped: int("dropped")? as usize,
            hash: text("replay_hash")?.into(),
        },
        other => return Err(err(&format!("unknown event kind `{other}`"))),
    })
}

/// Writes events as JSON lines. The first write error is kept and later
/// events are discarded.
pub struct JsonlSink<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out, error: None }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for JsonlSink<W> {
    fn event(&mut self, event: &TraceEvent) {
        if self.error.is_some() {
            return;
        }
        let line = to_json(event).to_string();
        if let Err(e) = writeln!(self.out, "{line}") {
            self.error = Some(e);
        }
    }
}

/// Counts events by kind and forwards them.
pub struct Counting<'a> {
    pub inner: &'a mut dyn TraceSink,
    pub counts: BTreeMap<&'static str, u64>,
}

impl<'a> Counting<'a> {
    pub fn new(inner: &'a mut dyn TraceSink) -> Self {
        Counting {
            inner,
            counts: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

impl TraceSink for Counting<'_> {
    fn event(&mut self, event: &TraceEvent) {
        *self.counts.entry(event.kind()).or_default() += 1;
        self.inner.event(event);
    }
}
