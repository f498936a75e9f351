//! The `.scenario` / `.snapshot` document format.
//!
//! Both are TOML. A snapshot is a scenario that also carries run state: the
//! current tick, the seed, the replay hash and full process states. Data
//! values are strings in canonical value text (`"(2,5)"`, `'"blood pudding"'`,
//! `'["corn"]'`); plain TOML integers, booleans and floats are accepted on
//! load as well. Saving always writes canonical text, so
//! `save(load(save(s))) == save(s)` byte for byte.
//!
//! ```toml
//! version = 1
//! policy = "last_writer_wins"
//!
//! [macros.mv_up]
//! params = []
//! updates = ["set_data me.loc = me.loc + (0, -1)"]
//!
//! [worlds.w.ch1.data]
//! loc = "(0,0)"
//!
//! [worlds.w.ch1.transitions.mvRand]
//! semantics = "tdl"
//! source = "wait randomValue(1..5000)\nreturn { mv_up }"
//!
//! [worlds.w.ch1.processes]
//! move = "mvRand"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use sbp_core::macros::MacroRegistry;
use sbp_core::model::PendingRequest;
use sbp_core::name::Name;
use sbp_core::scheduler::Engine;
use sbp_core::semantics::{ExternalBinding, SemanticsHost, SemanticsKind, TimeoutPolicy};
use sbp_core::text::{parse_datum, parse_value};
use sbp_core::trace::{hex, parse_hex32};
use sbp_core::{
    tdl, validate_configuration, Configuration, ConflictPolicy, Cursor, Entity, Path, Process, ProcessState, Severity,
    TransitionDescription, Value, World,
};
use serde::{Deserialize, Serialize};

use crate::natives;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDecl {
    /// Parameter names without `$`.
    pub params: Vec<String>,
    /// TDL body; a macro declared with `updates` is stored as
    /// `return { u1, u2, .. }`.
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Tdl,
    /// A behaviour compiled into this crate, see [`natives`].
    Native {
        behaviour: String,
    },
    External(ExternalBinding),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub policy: ConflictPolicy,
    /// Default seed for `run`; always present in snapshots.
    pub seed: Option<u64>,
    pub macros: BTreeMap<Name, MacroDecl>,
    pub semantics: BTreeMap<Name, Binding>,
    pub config: Configuration,
    /// Present in snapshots: the chain value after `config.tick` ticks.
    pub replay_hash: Option<[u8; 32]>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            policy: ConflictPolicy::default(),
            seed: None,
            macros: BTreeMap::new(),
            semantics: BTreeMap::new(),
            config: Configuration::new(),
            replay_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Schema {
        at: String,
        message: String,
    },
    Tdl {
        at: String,
        severity: Severity,
        message: String,
    },
    Validation(sbp_core::Violation),
}

impl Problem {
    pub fn severity(&self) -> Severity {
        match self {
            Problem::Schema { .. } => Severity::Error,
            Problem::Tdl { severity, .. } => *severity,
            Problem::Validation(v) => v.severity(),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = |s: Severity| if s == Severity::Error { "error" } else { "warning" };
        match self {
            Problem::Schema { at, message } if at.is_empty() => write!(f, "error: {message}"),
            Problem::Schema { at, message } => write!(f, "error: {at}: {message}"),
            Problem::Tdl { at, severity, message } => write!(f, "{}: {at}: {message}", level(*severity)),
            Problem::Validation(v) => write!(f, "{}: {v}", level(v.severity())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct LoadError {
    pub problems: Vec<Problem>,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let errors: Vec<String> = self
            .problems
            .iter()
            .filter(|p| p.severity() == Severity::Error)
            .map(|p| p.to_string())
            .collect();
        f.write_str(&errors.join("\n"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("semantics `{0}` names unknown native behaviour `{1}`")]
    UnknownNative(Name, String),
    #[error("macro `{0}`: {1}")]
    Macro(Name, String),
}

// ---------------------------------------------------------------------------
// document shape

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<SeedDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replay_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    recently_finished: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    macros: BTreeMap<String, MacroDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    semantics: BTreeMap<String, BindingDoc>,
    #[serde(default)]
    worlds: BTreeMap<String, BTreeMap<String, EntityDoc>>,
}

/// TOML integers are signed; larger seeds are written as strings.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SeedDoc {
    Int(i64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MacroDoc {
    #[serde(default)]
    params: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    updates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BindingDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    behaviour: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timeout_ticks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    on_timeout: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    read_view: Option<Vec<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    data: BTreeMap<String, ValueDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    transitions: BTreeMap<String, TransitionDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    processes: BTreeMap<String, ProcessDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ValueDoc {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<ValueDoc>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    semantics: String,
    #[serde(default)]
    source: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ProcessDoc {
    /// Shorthand: transition name, Ready, iteration 0, begun at tick 0.
    Short(String),
    Full(ProcessFull),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessFull {
    transition: String,
    #[serde(default)]
    begin_tick: u64,
    #[serde(default)]
    iteration: u64,
    #[serde(default = "ready")]
    state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resume_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cursor: Option<CursorDoc>,
}

fn ready() -> String {
    "ready".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CursorDoc {
    Tdl {
        resume: Vec<u32>,
        #[serde(default)]
        draws: u64,
        /// `[name, datum]` pairs, innermost last.
        #[serde(default)]
        bindings: Vec<[String; 2]>,
    },
    Native {
        step: u32,
        #[serde(default)]
        draws: u64,
    },
    External {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pending: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        deadline: Option<u64>,
    },
}

// ---------------------------------------------------------------------------
// loading

struct Loader {
    problems: Vec<Problem>,
}

impl Loader {
    fn schema(&mut self, at: impl Into<String>, message: impl Into<String>) {
        self.problems.push(Problem::Schema {
            at: at.into(),
            message: message.into(),
        });
    }

    fn name(&mut self, at: &str, text: &str) -> Option<Name> {
        match Name::new(text) {
            Ok(n) => Some(n),
            Err(e) => {
                self.schema(at, format!("invalid name {text:?}: {e}"));
                None
            }
        }
    }

    fn path(&mut self, at: &str, text: &str) -> Option<Path> {
        match Path::parse(text) {
            Ok(p) => Some(p),
            Err(e) => {
                self.schema(at, format!("invalid path {text:?}: {e}"));
                None
            }
        }
    }

    fn value(&mut self, at: &str, doc: ValueDoc) -> Option<Value> {
        Some(match doc {
            ValueDoc::Bool(b) => Value::Bool(b),
            ValueDoc::Int(i) => Value::Int(i),
            ValueDoc::Float(x) => Value::Float(x),
            ValueDoc::Text(s) => match parse_value(&s) {
                Ok(v) => v,
                Err(e) => {
                    self.schema(at, format!("invalid value {s:?}: {e}"));
                    return None;
                }
            },
            ValueDoc::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, x) in items.into_iter().enumerate() {
                    out.push(self.value(&format!("{at}[{i}]"), x)?);
                }
                Value::List(out)
            }
        })
    }

    fn binding(&mut self, at: &str, doc: BindingDoc) -> Option<Binding> {
        let unexpected = |l: &mut Loader, field: &str, present: bool| {
            if present {
                l.schema(format!("{at}.{field}"), format!("not allowed for kind `{}`", doc.kind));
            }
        };
        match doc.kind.as_str() {
            "tdl" => {
                unexpected(self, "behaviour", doc.behaviour.is_some());
                unexpected(self, "channel", doc.channel.is_some());
                Some(Binding::Tdl)
            }
            "native" => {
                unexpected(self, "channel", doc.channel.is_some());
                let Some(b) = doc.behaviour.clone() else {
                    self.schema(at, "native semantics need a `behaviour`");
                    return None;
                };
                if natives::lookup(&b).is_none() {
                    self.schema(
                        format!("{at}.behaviour"),
                        format!("unknown native behaviour `{b}` (known: {})", natives::NAMES.join(", ")),
                    );
                    return None;
                }
                Some(Binding::Native { behaviour: b })
            }
            "external" => {
                unexpected(self, "behaviour", doc.behaviour.is_some());
                let channel = doc.channel.clone().unwrap_or_else(|| "stdio".into());
                if channel != "stdio" && !channel.starts_with("tcp:") {
                    self.schema(format!("{at}.channel"), "expected `stdio` or `tcp:<host>:<port>`");
                }
                let on_timeout = match doc.on_timeout.as_deref().unwrap_or("cancel") {
                    "cancel" => TimeoutPolicy::Cancel,
                    "empty_result" => TimeoutPolicy::EmptyResult,
                    other => {
                        self.schema(
                            format!("{at}.on_timeout"),
                            format!("expected `cancel` or `empty_result`, got `{other}`"),
                        );
                        return None;
                    }
                };
                let mut read_view = Vec::new();
                for (i, p) in doc.read_view.clone().unwrap_or_default().iter().enumerate() {
                    read_view.push(self.path(&format!("{at}.read_view[{i}]"), p)?);
                }
                Some(Binding::External(ExternalBinding {
                    channel,
                    timeout_ticks: doc.timeout_ticks.unwrap_or(10),
                    on_timeout,
                    read_view,
                }))
            }
            other => {
                self.schema(
                    format!("{at}.kind"),
                    format!("expected `tdl`, `native` or `external`, got `{other}`"),
                );
                None
            }
        }
    }

    fn cursor(&mut self, at: &str, doc: CursorDoc) -> Option<Cursor> {
        Some(match doc {
            CursorDoc::Tdl {
                resume,
                draws,
                bindings,
            } => {
                let mut out = Vec::with_capacity(bindings.len());
                for [n, d] in bindings {
                    match parse_datum(&d) {
                        Ok(d) => out.push((n, d)),
                        Err(e) => {
                            self.schema(format!("{at}.bindings"), format!("invalid datum {d:?}: {e}"));
                            return None;
                        }
                    }
                }
                Cursor::Tdl {
                    resume,
                    bindings: out,
                    draws,
                }
            }
            CursorDoc::Native { step, draws } => Cursor::Native { step, draws },
            CursorDoc::External { pending, deadline } => Cursor::External {
                pending: match (pending, deadline) {
                    (Some(id), Some(deadline)) => Some(PendingRequest { id, deadline }),
                    (None, None) => None,
                    _ => {
                        self.schema(at, "`pending` and `deadline` go together");
                        return None;
                    }
                },
            },
        })
    }

    fn process(&mut self, at: &str, key: &Name, doc: ProcessDoc) -> Option<Process> {
        let full = match doc {
            ProcessDoc::Short(t) => return Some(Process::ready(key.clone(), self.name(at, &t)?, 0, 0)),
            ProcessDoc::Full(f) => f,
        };
        let transition = self.name(&format!("{at}.transition"), &full.transition)?;
        let take_cursor = |l: &mut Loader, c: Option<CursorDoc>| match c {
            Some(c) => l.cursor(&format!("{at}.cursor"), c),
            None => {
                l.schema(at, format!("state `{}` needs a cursor", full.state));
                None
            }
        };
        let state = match full.state.as_str() {
            "ready" => ProcessState::Ready,
            "suspended" => {
                let Some(resume_tick) = full.resume_tick else {
                    self.schema(at, "state `suspended` needs `resume_tick`");
                    return None;
                };
                ProcessState::Suspended {
                    resume_tick,
                    cursor: take_cursor(self, full.cursor)?,
                }
            }
            "awaiting" => {
                let Some(t) = &full.target else {
                    self.schema(at, "state `awaiting` needs `target`");
                    return None;
                };
                let target = self.path(&format!("{at}.target"), t)?;
                ProcessState::Awaiting {
                    target,
                    cursor: take_cursor(self, full.cursor)?,
                }
            }
            other => {
                self.schema(
                    format!("{at}.state"),
                    format!("expected `ready`, `suspended` or `awaiting`, got `{other}`"),
                );
                return None;
            }
        };
        Some(Process {
            name: key.clone(),
            transition,
            begin_tick: full.begin_tick,
            iteration: full.iteration,
            state,
        })
    }
}

fn declared_body(doc: &MacroDoc) -> Result<String, &'static str> {
    match (&doc.updates, &doc.body) {
        (Some(us), None) => Ok(format!("return {{ {} }}", us.join(", "))),
        (None, Some(b)) => Ok(b.clone()),
        _ => Err("give exactly one of `updates` or `body`"),
    }
}

/// Parses a document and reports every problem found. The scenario is
/// returned whenever it could be materialized, even with error problems
/// (validation and TDL errors do not prevent building it).
pub fn check(text: &str) -> (Option<Scenario>, Vec<Problem>) {
    let doc: Doc = match toml::from_str(text) {
        Ok(d) => d,
        Err(e) => {
            let message = e.message().to_string();
            let at = match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    format!("{line}:{col}")
                }
                None => String::new(),
            };
            return (None, vec![Problem::Schema { at, message }]);
        }
    };
    let mut l = Loader { problems: Vec::new() };
    if doc.version != FORMAT_VERSION {
        l.schema(
            "version",
            format!("unsupported version {} (expected {FORMAT_VERSION})", doc.version),
        );
    }
    let mut s = Scenario::default();
    if let Some(p) = &doc.policy {
        match ConflictPolicy::parse(p) {
            Some(p) => s.policy = p,
            None => l.schema(
                "policy",
                format!("unknown policy `{p}` (expected last_writer_wins, first_wins, drop_conflicting or fail_tick)"),
            ),
        }
    }
    s.seed = match doc.seed {
        None => None,
        Some(SeedDoc::Int(i)) if i >= 0 => Some(i as u64),
        Some(SeedDoc::Text(t)) if t.parse::<u64>().is_ok() => t.parse().ok(),
        Some(_) => {
            l.schema("seed", "expected a non-negative 64-bit integer");
            None
        }
    };
    s.config.tick = doc.tick.unwrap_or(0);
    if let Some(h) = &doc.replay_hash {
        match parse_hex32(h) {
            Some(h) => s.replay_hash = Some(h),
            None => l.schema("replay_hash", "expected 64 hex digits"),
        }
    }
    for (i, p) in doc.recently_finished.iter().enumerate() {
        if let Some(p) = l.path(&format!("recently_finished[{i}]"), p) {
            s.config.recently_finished.insert(p);
        }
    }

    let mut registry = MacroRegistry::default();
    for (name, m) in &doc.macros {
        let at = format!("macros.{name}");
        let Some(n) = l.name(&at, name) else { continue };
        let body = match declared_body(m) {
            Ok(b) => b,
            Err(e) => {
                l.schema(&at, e);
                continue;
            }
        };
        let params: Vec<String> = m.params.iter().map(|p| p.trim_start_matches('$').to_string()).collect();
        if let Err(e) = registry.define(n.clone(), params.clone(), &body) {
            l.problems.push(Problem::Tdl {
                at,
                severity: Severity::Error,
                message: e.to_string(),
            });
            continue;
        }
        s.macros.insert(n, MacroDecl { params, body });
    }

    for (name, b) in doc.semantics {
        let at = format!("semantics.{name}");
        let Some(n) = l.name(&at, &name) else { continue };
        if let Some(b) = l.binding(&at, b) {
            s.semantics.insert(n, b);
        }
    }

    let lookup = |n: &str| registry.arity(n);
    for (wn, entities) in doc.worlds {
        let Some(w) = l.name(&format!("worlds.{wn}"), &wn) else {
            continue;
        };
        let mut world = World::default();
        for (en, edoc) in entities {
            let base = format!("worlds.{wn}.{en}");
            let Some(e) = l.name(&base, &en) else { continue };
            let mut entity = Entity::default();
            for (k, v) in edoc.data {
                let at = format!("{base}.data.{k}");
                if let (Some(key), Some(v)) = (l.name(&at, &k), l.value(&at, v)) {
                    entity.data.insert(key, v);
                }
            }
            for (k, t) in edoc.transitions {
                let at = format!("{base}.transitions.{k}");
                let (Some(key), Some(sem)) = (l.name(&at, &k), l.name(&format!("{at}.semantics"), &t.semantics)) else {
                    continue;
                };
                let is_tdl = match s.semantics.get(&sem) {
                    Some(Binding::Tdl) => true,
                    Some(_) => false,
                    None if sem.as_str() == "tdl" => true,
                    None => {
                        l.schema(format!("{at}.semantics"), format!("unknown semantics `{sem}`"));
                        continue;
                    }
                };
                if is_tdl {
                    let diags = match tdl::parse_program(&t.source) {
                        Ok(p) => tdl::check(
                            &p,
                            tdl::CheckOptions {
                                macro_params: None,
                                macros: Some(&lookup),
                            },
                        ),
                        Err(ds) => ds,
                    };
                    for d in diags {
                        l.problems.push(Problem::Tdl {
                            at: at.clone(),
                            severity: d.severity,
                            message: d.render(&t.source),
                        });
                    }
                }
                entity
                    .transitions
                    .insert(key.clone(), TransitionDescription::new(key, sem, &t.source));
            }
            for (k, p) in edoc.processes {
                let at = format!("{base}.processes.{k}");
                let Some(key) = l.name(&at, &k) else { continue };
                if let Some(p) = l.process(&at, &key, p) {
                    entity.processes.insert(key, p);
                }
            }
            world.entities.insert(e, entity);
        }
        s.config.worlds.insert(w, world);
    }
    l.problems
        .extend(validate_configuration(&s.config).into_iter().map(Problem::Validation));
    (Some(s), l.problems)
}

/// Loads a scenario or snapshot; fails on any error-severity problem.
pub fn load(text: &str) -> Result<Scenario, LoadError> {
    let (s, problems) = check(text);
    match s {
        Some(s) if problems.iter().all(|p| p.severity() != Severity::Error) => Ok(s),
        _ => Err(LoadError { problems }),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.chars().rev().take_while(|c| *c != '\n').count() + 1;
    (line, col)
}

// ---------------------------------------------------------------------------
// saving

fn cursor_doc(c: &Cursor) -> CursorDoc {
    match c {
        Cursor::Tdl {
            resume,
            bindings,
            draws,
        } => CursorDoc::Tdl {
            resume: resume.clone(),
            draws: *draws,
            bindings: bindings.iter().map(|(n, d)| [n.clone(), d.to_string()]).collect(),
        },
        Cursor::Native { step, draws } => CursorDoc::Native {
            step: *step,
            draws: *draws,
        },
        Cursor::External { pending } => CursorDoc::External {
            pending: pending.as_ref().map(|p| p.id.clone()),
            deadline: pending.as_ref().map(|p| p.deadline),
        },
    }
}

fn process_doc(p: &Process) -> ProcessDoc {
    if p.state == ProcessState::Ready && p.begin_tick == 0 && p.iteration == 0 {
        return ProcessDoc::Short(p.transition.to_string());
    }
    let mut full = ProcessFull {
        transition: p.transition.to_string(),
        begin_tick: p.begin_tick,
        iteration: p.iteration,
        state: ready(),
        resume_tick: None,
        target: None,
        cursor: None,
    };
    match &p.state {
        ProcessState::Ready => {}
        ProcessState::Suspended { resume_tick, cursor } => {
            full.state = "suspended".into();
            full.resume_tick = Some(*resume_tick);
            full.cursor = Some(cursor_doc(cursor));
        }
        ProcessState::Awaiting { target, cursor } => {
            full.state = "awaiting".into();
            full.target = Some(target.to_string());
            full.cursor = Some(cursor_doc(cursor));
        }
        ProcessState::FinishedPending { .. } => {
            unreachable!("finished processes are retired before the tick closes")
        }
    }
    ProcessDoc::Full(full)
}

fn binding_doc(b: &Binding) -> BindingDoc {
    let mut doc = BindingDoc {
        kind: String::new(),
        behaviour: None,
        channel: None,
        timeout_ticks: None,
        on_timeout: None,
        read_view: None,
    };
    match b {
        Binding::Tdl => doc.kind = "tdl".into(),
        Binding::Native { behaviour } => {
            doc.kind = "native".into();
            doc.behaviour = Some(behaviour.clone());
        }
        Binding::External(e) => {
            doc.kind = "external".into();
            doc.channel = Some(e.channel.clone());
            doc.timeout_ticks = Some(e.timeout_ticks);
            doc.on_timeout = Some(
                match e.on_timeout {
                    TimeoutPolicy::Cancel => "cancel",
                    TimeoutPolicy::EmptyResult => "empty_result",
                }
                .into(),
            );
            doc.read_view = Some(e.read_view.iter().map(|p| p.to_string()).collect());
        }
    }
    doc
}

/// Canonical serialization.
pub fn save(s: &Scenario) -> String {
    let c = &s.config;
    let snapshot_state = c.tick > 0 || s.replay_hash.is_some() || !c.recently_finished.is_empty();
    let doc = Doc {
        version: FORMAT_VERSION,
        policy: Some(s.policy.as_str().into()),
        seed: s.seed.map(|x| match i64::try_from(x) {
            Ok(i) => SeedDoc::Int(i),
            Err(_) => SeedDoc::Text(x.to_string()),
        }),
        tick: snapshot_state.then_some(c.tick),
        replay_hash: s.replay_hash.map(|h| hex(&h)),
        recently_finished: c.recently_finished.iter().map(|p| p.to_string()).collect(),
        macros: s
            .macros
            .iter()
            .map(|(n, m)| {
                (
                    n.to_string(),
                    MacroDoc {
                        params: m.params.clone(),
                        updates: None,
                        body: Some(m.body.clone()),
                    },
                )
            })
            .collect(),
        semantics: s
            .semantics
            .iter()
            .map(|(n, b)| (n.to_string(), binding_doc(b)))
            .collect(),
        worlds: c
            .worlds
            .iter()
            .map(|(wn, w)| {
                let entities = w
                    .entities
                    .iter()
                    .map(|(en, e)| {
                        let doc = EntityDoc {
                            data: e
                                .data
                                .iter()
                                .map(|(k, v)| (k.to_string(), ValueDoc::Text(v.to_string())))
                                .collect(),
                            transitions: e
                                .transitions
                                .iter()
                                .map(|(k, t)| {
                                    (
                                        k.to_string(),
                                        TransitionDoc {
                                            semantics: t.semantics.to_string(),
                                            source: t.source.to_string(),
                                        },
                                    )
                                })
                                .collect(),
                            processes: e
                                .processes
                                .iter()
                                .map(|(k, p)| (k.to_string(), process_doc(p)))
                                .collect(),
                        };
                        (en.to_string(), doc)
                    })
                    .collect();
                (wn.to_string(), entities)
            })
            .collect(),
    };
    toml::to_string(&doc).expect("documents always serialize")
}

// ---------------------------------------------------------------------------
// engines

impl Scenario {
    /// Builds an engine over this scenario's configuration. The seed comes
    /// from `seed`, else the document, else 0. Snapshots restore their
    /// replay hash. External channels still need drivers attached.
    pub fn engine(&self, seed: Option<u64>) -> Result<Engine, EngineError> {
        let mut host = SemanticsHost::new(seed.or(self.seed).unwrap_or(0));
        for (n, m) in &self.macros {
            host.define_macro(n.clone(), m.params.clone(), &m.body)
                .map_err(|e| EngineError::Macro(n.clone(), e.to_string()))?;
        }
        for (n, b) in &self.semantics {
            let kind = match b {
                Binding::Tdl => SemanticsKind::Tdl,
                Binding::Native { behaviour } => SemanticsKind::Native(
                    natives::lookup(behaviour)
                        .ok_or_else(|| EngineError::UnknownNative(n.clone(), behaviour.clone()))?,
                ),
                Binding::External(e) => SemanticsKind::External(e.clone()),
            };
            host.register(n.clone(), kind);
        }
        let mut engine = Engine::new(self.config.clone(), host, self.policy);
        if let Some(h) = self.replay_hash {
            engine.set_replay_hash(h);
        }
        Ok(engine)
    }

    /// A snapshot of `engine`'s current state, keeping this scenario's
    /// macros and bindings.
    pub fn snapshot_of(&self, engine: &Engine) -> Scenario {
        Scenario {
            policy: engine.policy,
            seed: Some(engine.host.seed),
            macros: self.macros.clone(),
            semantics: self.semantics.clone(),
            config: engine.config.clone(),
            replay_hash: Some(engine.replay_hash()),
        }
    }

    /// External channels referenced by the bindings, deduplicated.
    pub fn external_channels(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .semantics
            .values()
            .filter_map(|b| match b {
                Binding::External(e) => Some(e.channel.clone()),
                _ => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Every TDL source in the scenario (macro bodies and TDL transitions)
    /// with a label saying where it lives.
    pub fn tdl_sources(&self) -> Vec<(String, Arc<str>)> {
        let mut out: Vec<(String, Arc<str>)> = self
            .macros
            .iter()
            .map(|(n, m)| (format!("macros.{n}"), Arc::from(m.body.as_str())))
            .collect();
        for (wn, w) in &self.config.worlds {
            for (en, e) in &w.entities {
                for (tn, t) in &e.transitions {
                    let tdl = match self.semantics.get(&t.semantics) {
                        Some(b) => *b == Binding::Tdl,
                        None => t.semantics.as_str() == "tdl",
                    };
                    if tdl {
                        out.push((format!("{wn}.{en}.{tn}"), t.source.clone()));
                    }
                }
            }
        }
        out
    }
}
