//! The state model: configurations of worlds of entities, paths into them,
//! validation and world cloning.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::name::{Name, NameError};
use crate::update::ResultStructure;
use crate::value::{write_name, Datum, Value};

/// Discrete simulation time.
pub type Tick = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDescription {
    pub name: Name,
    /// Key into the semantics registry.
    pub semantics: Name,
    pub source: Arc<str>,
}

impl TransitionDescription {
    pub fn new(name: Name, semantics: Name, source: &str) -> Self {
        TransitionDescription {
            name,
            semantics,
            source: Arc::from(source),
        }
    }
}

/// Continuation token of a suspended or awaiting process.
///
/// Each semantics owns its variant. The TDL variant stores the statement
/// position to resume at, the bindings in scope there and the number of
/// random draws consumed so far, so a resumed segment continues the same
/// random stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Cursor {
    Tdl {
        resume: Vec<u32>,
        bindings: Vec<(String, Datum)>,
        draws: u64,
    },
    Native {
        step: u32,
        draws: u64,
    },
    External {
        /// In-flight request, if a response is still outstanding.
        pending: Option<PendingRequest>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingRequest {
    pub id: String,
    pub deadline: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessState {
    Ready,
    Suspended {
        resume_tick: Tick,
        cursor: Cursor,
    },
    Awaiting {
        target: Path,
        cursor: Cursor,
    },
    /// Finished during the current tick; removed (and possibly respawned)
    /// once the tick's updates are committed.
    FinishedPending {
        result: ResultStructure,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub name: Name,
    pub transition: Name,
    pub begin_tick: Tick,
    pub iteration: u64,
    pub state: ProcessState,
}

impl Process {
    pub fn ready(name: Name, transition: Name, begin_tick: Tick, iteration: u64) -> Self {
        Process {
            name,
            transition,
            begin_tick,
            iteration,
            state: ProcessState::Ready,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Entity {
    pub data: BTreeMap<Name, Value>,
    pub transitions: BTreeMap<Name, TransitionDescription>,
    pub processes: BTreeMap<Name, Process>,
}

impl Entity {
    /// True if any of the three property maps holds `key`.
    pub fn has_property(&self, key: &(impl AsRef<str> + ?Sized)) -> bool {
        let key = key.as_ref();
        self.data.contains_key(key) || self.transitions.contains_key(key) || self.processes.contains_key(key)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct World {
    pub entities: BTreeMap<Name, Entity>,
}

impl World {
    /// Deep copy whose processes restart fresh at `begin_tick`.
    pub fn restarted_copy(&self, begin_tick: Tick) -> World {
        let mut copy = self.clone();
        for entity in copy.entities.values_mut() {
            for p in entity.processes.values_mut() {
                p.state = ProcessState::Ready;
                p.begin_tick = begin_tick;
            }
        }
        copy
    }

    pub fn process_count(&self) -> usize {
        self.entities.values().map(|e| e.processes.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Configuration {
    pub worlds: BTreeMap<Name, World>,
    pub tick: Tick,
    /// Processes that finished during the previous tick; awaiting processes
    /// wake when their target appears here.
    pub recently_finished: BTreeSet<Path>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&self, world: &(impl AsRef<str> + ?Sized), entity: &(impl AsRef<str> + ?Sized)) -> Option<&Entity> {
        self.worlds.get(world.as_ref())?.entities.get(entity.as_ref())
    }

    pub fn entity_mut(
        &mut self,
        world: &(impl AsRef<str> + ?Sized),
        entity: &(impl AsRef<str> + ?Sized),
    ) -> Option<&mut Entity> {
        self.worlds.get_mut(world.as_ref())?.entities.get_mut(entity.as_ref())
    }

    pub fn data(
        &self,
        world: &(impl AsRef<str> + ?Sized),
        entity: &(impl AsRef<str> + ?Sized),
        key: &str,
    ) -> Option<&Value> {
        self.entity(world, entity)?.data.get(key)
    }

    pub fn process(
        &self,
        world: &(impl AsRef<str> + ?Sized),
        entity: &(impl AsRef<str> + ?Sized),
        process: &str,
    ) -> Option<&Process> {
        self.entity(world, entity)?.processes.get(process)
    }

    pub fn process_count(&self) -> usize {
        self.worlds.values().map(World::process_count).sum()
    }

    /// Iterates `(world, entity, process)` over every process in
    /// lexicographic order.
    pub fn processes(&self) -> impl Iterator<Item = (&Name, &Name, &Process)> {
        self.worlds.iter().flat_map(|(w, world)| {
            world
                .entities
                .iter()
                .flat_map(move |(e, ent)| ent.processes.values().map(move |p| (w, e, p)))
        })
    }
}

/// `world[.entity[.property]]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    pub world: Name,
    pub entity: Option<Name>,
    pub property: Option<Name>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("a path has one to three segments, got {0}")]
    SegmentCount(usize),
    #[error("invalid path segment: {0}")]
    Segment(#[from] NameError),
    #[error("unterminated quoted segment")]
    Unterminated,
}

impl Path {
    pub fn world(world: Name) -> Path {
        Path {
            world,
            entity: None,
            property: None,
        }
    }

    pub fn entity(world: Name, entity: Name) -> Path {
        Path {
            world,
            entity: Some(entity),
            property: None,
        }
    }

    pub fn property(world: Name, entity: Name, property: Name) -> Path {
        Path {
            world,
            entity: Some(entity),
            property: Some(property),
        }
    }

    /// Parses the textual form by splitting on `.`. Segments may be written
    /// as quoted strings, as produced by the canonical rendering.
    pub fn parse(text: &str) -> Result<Path, PathError> {
        let segments: Vec<&str> = text.split('.').collect();
        if segments.is_empty() || segments.len() > 3 {
            return Err(PathError::SegmentCount(segments.len()));
        }
        let mut names = Vec::with_capacity(3);
        for seg in segments {
            let seg = seg.trim();
            let raw = if seg.starts_with('"') {
                crate::text::unquote(seg).ok_or(PathError::Unterminated)?
            } else {
                String::from(seg)
            };
            names.push(Name::new(&raw)?);
        }
        let mut it = names.into_iter();
        Ok(Path {
            world: it.next().expect("at least one segment"),
            entity: it.next(),
            property: it.next(),
        })
    }

    pub fn depth(&self) -> usize {
        1 + self.entity.is_some() as usize + self.property.is_some() as usize
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_name(f, &self.world)?;
        if let Some(e) = &self.entity {
            f.write_str(".")?;
            write_name(f, e)?;
        }
        if let Some(p) = &self.property {
            f.write_str(".")?;
            write_name(f, p)?;
        }
        Ok(())
    }
}

/// The item a path resolves to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Located<'a> {
    World(&'a World),
    Entity(&'a Entity),
    Data(&'a Value),
    Transition(&'a TransitionDescription),
    Process(&'a Process),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    World,
    Entity,
    Property,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{segment:?} segment `{name}` not found")]
pub struct NotFound {
    pub segment: Segment,
    pub name: Name,
}

/// Resolves a path; property lookup searches data, then transitions, then
/// processes.
pub fn resolve_path<'a>(config: &'a Configuration, path: &Path) -> Result<Located<'a>, NotFound> {
    let world = config.worlds.get(&path.world).ok_or_else(|| NotFound {
        segment: Segment::World,
        name: path.world.clone(),
    })?;
    let Some(entity_name) = &path.entity else {
        return Ok(Located::World(world));
    };
    let entity = world.entities.get(entity_name).ok_or_else(|| NotFound {
        segment: Segment::Entity,
        name: entity_name.clone(),
    })?;
    let Some(key) = &path.property else {
        return Ok(Located::Entity(entity));
    };
    if let Some(v) = entity.data.get(key) {
        Ok(Located::Data(v))
    } else if let Some(t) = entity.transitions.get(key) {
        Ok(Located::Transition(t))
    } else if let Some(p) = entity.processes.get(key) {
        Ok(Located::Process(p))
    } else {
        Err(NotFound {
            segment: Segment::Property,
            name: key.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A map key disagrees with the name stored in its value.
    NameMismatch {
        at: Path,
        stored: Name,
    },
    /// One entity holds two properties of the same name.
    DuplicateProperty {
        at: Path,
    },
    DanglingRef {
        at: Path,
        target: Value,
    },
    UnresolvedTransition {
        process: Path,
        transition: Name,
    },
    StaleSuspension {
        process: Path,
        resume_tick: Tick,
    },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::DanglingRef { .. } | Violation::UnresolvedTransition { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NameMismatch { at, stored } => {
                write!(f, "{at}: stored name `{stored}` differs from its key")
            }
            Violation::DuplicateProperty { at } => {
                write!(f, "{at}: property name used more than once")
            }
            Violation::DanglingRef { at, target } => write!(f, "{at}: dangling reference {target}"),
            Violation::UnresolvedTransition { process, transition } => {
                write!(f, "{process}: transition `{transition}` does not exist")
            }
            Violation::StaleSuspension { process, resume_tick } => {
                write!(f, "{process}: suspended until past tick {resume_tick}")
            }
        }
    }
}

/// Returns every violation found; an empty list means the configuration is
/// well formed.
pub fn validate_configuration(config: &Configuration) -> Vec<Violation> {
    let mut out = Vec::new();
    for (wn, world) in &config.worlds {
        for (en, entity) in &world.entities {
            let at = |key: &Name| Path::property(wn.clone(), en.clone(), key.clone());
            for key in entity.transitions.keys().chain(entity.processes.keys()) {
                if entity.data.contains_key(key) {
                    out.push(Violation::DuplicateProperty { at: at(key) });
                }
            }
            for key in entity.processes.keys() {
                if entity.transitions.contains_key(key) {
                    out.push(Violation::DuplicateProperty { at: at(key) });
                }
            }
            for (key, v) in &entity.data {
                v.visit_refs(&mut |r| {
                    let ok = match r {
                        Value::EntityRef(target) => world.entities.contains_key(target),
                        Value::WorldRef(target) => config.worlds.contains_key(target),
                        _ => true,
                    };
                    if !ok {
                        out.push(Violation::DanglingRef {
                            at: at(key),
                            target: r.clone(),
                        });
                    }
                });
            }
            for (key, t) in &entity.transitions {
                if &t.name != key {
                    out.push(Violation::NameMismatch {
                        at: at(key),
                        stored: t.name.clone(),
                    });
                }
            }
            for (key, p) in &entity.processes {
                if &p.name != key {
                    out.push(Violation::NameMismatch {
                        at: at(key),
                        stored: p.name.clone(),
                    });
                }
                if !entity.transitions.contains_key(&p.transition) {
                    out.push(Violation::UnresolvedTransition {
                        process: at(key),
                        transition: p.transition.clone(),
                    });
                }
                if let ProcessState::Suspended { resume_tick, .. } = p.state {
                    if resume_tick < config.tick {
                        out.push(Violation::StaleSuspension {
                            process: at(key),
                            resume_tick,
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CloneError {
    #[error("source world `{0}` does not exist")]
    SourceMissing(Name),
    #[error("target world `{0}` already exists")]
    TargetExists(Name),
}

/// Returns a configuration with `target` added as a deep copy of `source`.
///
/// Copied processes restart in `Ready` state at the next tick, keeping
/// their iteration counts.
pub fn clone_world(config: &Configuration, source: &Name, target: &Name) -> Result<Configuration, CloneError> {
    let src = config
        .worlds
        .get(source)
        .ok_or_else(|| CloneError::SourceMissing(source.clone()))?;
    if config.worlds.contains_key(target) {
        return Err(CloneError::TargetExists(target.clone()));
    }
    let copy = src.restarted_copy(config.tick + 1);
    let mut next = config.clone();
    next.worlds.insert(target.clone(), copy);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::name;
    use alloc::string::ToString;
    use alloc::vec;

    fn chicken_config() -> Configuration {
        let mut ch = Entity::default();
        ch.data.insert(name("loc"), Value::Coord(3, 5));
        ch.transitions.insert(
            name("mvRand"),
            TransitionDescription::new(name("mvRand"), name("tdl"), "return {}"),
        );
        ch.processes
            .insert(name("move"), Process::ready(name("move"), name("mvRand"), 0, 0));
        let mut w = World::default();
        w.entities.insert(name("ch"), ch);
        let mut c = Configuration::new();
        c.worlds.insert(name("w"), w);
        c
    }

    #[test]
    fn resolves_paths() {
        let c = chicken_config();
        let p = Path::parse("w.ch.loc").unwrap();
        assert_eq!(resolve_path(&c, &p), Ok(Located::Data(&Value::Coord(3, 5))));
        assert!(matches!(
            resolve_path(&c, &Path::parse("w").unwrap()),
            Ok(Located::World(_))
        ));
        assert!(matches!(
            resolve_path(&c, &Path::parse("w.ch.move").unwrap()),
            Ok(Located::Process(_))
        ));
        let err = resolve_path(&c, &Path::parse("w.ghost.loc").unwrap()).unwrap_err();
        assert_eq!(err.segment, Segment::Entity);
        assert_eq!(err.name, name("ghost"));
    }

    #[test]
    fn path_text_form() {
        assert!(Path::parse("a.b.c.d").is_err());
        assert!(Path::parse("a..c").is_err());
        let p = Path::property(name("w"), name("a=b"), name("k"));
        assert_eq!(p.to_string(), r#"w."a=b".k"#);
        assert_eq!(Path::parse(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn validation_reports_dangling_refs() {
        assert!(validate_configuration(&Configuration::new()).is_empty());
        let mut c = chicken_config();
        assert!(validate_configuration(&c).is_empty());
        c.entity_mut("w", "ch")
            .unwrap()
            .data
            .insert(name("target"), Value::List(vec![Value::EntityRef(name("corn"))]));
        let v = validate_configuration(&c);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::DanglingRef { .. }));
        assert_eq!(v[0].severity(), Severity::Warning);
    }

    #[test]
    fn validation_reports_stale_and_duplicates() {
        let mut c = chicken_config();
        c.tick = 10;
        let ch = c.entity_mut("w", "ch").unwrap();
        ch.data.insert(name("move"), Value::Unit);
        ch.processes.get_mut("move").unwrap().state = ProcessState::Suspended {
            resume_tick: 9,
            cursor: Cursor::Native { step: 1, draws: 0 },
        };
        let v = validate_configuration(&c);
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateProperty { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::StaleSuspension { .. })));

        // due this very tick is fine
        let ch = c.entity_mut("w", "ch").unwrap();
        ch.data.remove("move");
        if let ProcessState::Suspended { resume_tick, .. } = &mut ch.processes.get_mut("move").unwrap().state {
            *resume_tick = 10;
        }
        assert!(validate_configuration(&c).is_empty());
    }

    #[test]
    fn clone_world_restarts_processes() {
        let mut c = chicken_config();
        c.tick = 7;
        {
            let p = c.entity_mut("w", "ch").unwrap().processes.get_mut("move").unwrap();
            p.iteration = 4;
            p.state = ProcessState::Suspended {
                resume_tick: 20,
                cursor: Cursor::Native { step: 1, draws: 2 },
            };
        }
        let next = clone_world(&c, &name("w"), &name("w'")).unwrap();
        let p = next.process("w'", "ch", "move").unwrap();
        assert_eq!(p.state, ProcessState::Ready);
        assert_eq!(p.iteration, 4);
        assert_eq!(p.begin_tick, 8);
        assert_eq!(next.worlds["w"], c.worlds["w"]);

        let mut undone = next.clone();
        undone.worlds.remove("w'");
        assert_eq!(undone, c);

        assert_eq!(
            clone_world(&c, &name("nope"), &name("x")),
            Err(CloneError::SourceMissing(name("nope")))
        );
        assert_eq!(
            clone_world(&next, &name("w"), &name("w'")),
            Err(CloneError::TargetExists(name("w'")))
        );
    }
}
