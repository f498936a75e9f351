//! The update algebra, conflict resolution and the update function that
//! commits per-entity buckets.
//!
//! A tick's updates are grouped into buckets keyed by their target: one
//! bucket per `(world, entity)` plus one world-level bucket per world name
//! for `AddWorld`/`DeleteWorld`. Within a bucket entries are ordered by
//! `(emitter path, seq)`. Conflicts are resolved first, over all entries and
//! regardless of guards, then guards are checked against the tick-open
//! snapshot, then the survivors are committed one by one, each rechecking
//! that its target still exists.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::macros::MacroRegistry;
use crate::model::{resolve_path, Configuration, Located, Path, Process, ProcessState, Tick, TransitionDescription};
use crate::name::Name;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum KeyFilter {
    All,
    Keys(Vec<Name>),
}

/// The structural edits every update eventually reduces to.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreUpdate {
    SetData {
        world: Name,
        entity: Name,
        key: Name,
        value: Value,
    },
    DeleteData {
        world: Name,
        entity: Name,
        key: Name,
    },
    SetTransition {
        world: Name,
        entity: Name,
        key: Name,
        transition: TransitionDescription,
    },
    DeleteTransition {
        world: Name,
        entity: Name,
        key: Name,
    },
    StartProcess {
        world: Name,
        entity: Name,
        process: Name,
        transition: Name,
    },
    CancelProcess {
        world: Name,
        entity: Name,
        process: Name,
    },
    RebindProcess {
        world: Name,
        entity: Name,
        process: Name,
        transition: Name,
    },
    CreateEntity {
        world: Name,
        entity: Name,
    },
    DeleteEntity {
        world: Name,
        entity: Name,
    },
    AddWorld {
        world: Name,
        copy_from: Option<Name>,
    },
    DeleteWorld {
        world: Name,
    },
    CopyProperties {
        src_world: Name,
        src_entity: Name,
        dst_world: Name,
        dst_entity: Name,
        keys: KeyFilter,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

/// A predicate over the tick-open snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Exists(Path),
    NotExists(Path),
    Equals(Path, Value),
    Compare(Path, CompareOp, Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Update {
    Core(CoreUpdate),
    Macro { name: Name, args: Vec<Value> },
    Guarded { guard: Guard, inner: CoreUpdate },
}

/// What a finished process hands back: its updates and whether a new
/// iteration should start.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultStructure {
    pub updates: Vec<Update>,
    pub cont: bool,
}

impl ResultStructure {
    pub fn empty(cont: bool) -> Self {
        ResultStructure {
            updates: Vec::new(),
            cont,
        }
    }
}

/// A core update with an optional guard; the post-expansion form.
#[derive(Debug, Clone, PartialEq)]
pub struct Expanded {
    pub guard: Option<Guard>,
    pub core: CoreUpdate,
}

impl From<CoreUpdate> for Expanded {
    fn from(core: CoreUpdate) -> Self {
        Expanded { guard: None, core }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BucketKey {
    /// World-level bucket for AddWorld/DeleteWorld of this world name.
    World(Name),
    Entity(Name, Name),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketEntry {
    /// Path of the emitting process.
    pub emitter: Path,
    /// Emission index within the emitting segment.
    pub seq: u32,
    pub update: Expanded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateBucket {
    pub key: BucketKey,
    pub entries: Vec<BucketEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictPolicy {
    #[default]
    LastWriterWins,
    FirstWins,
    DropConflicting,
    FailTick,
}

impl ConflictPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ConflictPolicy::LastWriterWins => "last_writer_wins",
            ConflictPolicy::FirstWins => "first_wins",
            ConflictPolicy::DropConflicting => "drop_conflicting",
            ConflictPolicy::FailTick => "fail_tick",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "last_writer_wins" => ConflictPolicy::LastWriterWins,
            "first_wins" => ConflictPolicy::FirstWins,
            "drop_conflicting" => ConflictPolicy::DropConflicting,
            "fail_tick" => ConflictPolicy::FailTick,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Conflict,
    GuardFailed,
    TargetMissing,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Conflict => "conflict",
            DropReason::GuardFailed => "guard_failed",
            DropReason::TargetMissing => "target_missing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedUpdate {
    pub entry: BucketEntry,
    pub reason: DropReason,
}

/// A conflict between two entries, or (`with == None`) between an entry and
/// the state it would be applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictRecord {
    pub entry: BucketEntry,
    pub with: Option<BucketEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("tick aborted: {} conflict(s)", conflicts.len())]
pub struct TickAborted {
    pub conflicts: Vec<ConflictRecord>,
}

impl CoreUpdate {
    pub fn target(&self) -> BucketKey {
        use CoreUpdate::*;
        match self {
            SetData { world, entity, .. }
            | DeleteData { world, entity, .. }
            | SetTransition { world, entity, .. }
            | DeleteTransition { world, entity, .. }
            | StartProcess { world, entity, .. }
            | CancelProcess { world, entity, .. }
            | RebindProcess { world, entity, .. }
            | CreateEntity { world, entity }
            | DeleteEntity { world, entity } => BucketKey::Entity(world.clone(), entity.clone()),
            AddWorld { world, .. } | DeleteWorld { world } => BucketKey::World(world.clone()),
            CopyProperties {
                dst_world, dst_entity, ..
            } => BucketKey::Entity(dst_world.clone(), dst_entity.clone()),
        }
    }

    /// 0 for constructive entity/world updates, 2 for destructive ones, 1
    /// otherwise. Commit order within a bucket follows this phase first.
    fn phase(&self) -> u8 {
        match self {
            CoreUpdate::CreateEntity { .. } | CoreUpdate::AddWorld { .. } => 0,
            CoreUpdate::DeleteEntity { .. } | CoreUpdate::DeleteWorld { .. } => 2,
            _ => 1,
        }
    }
}

impl Update {
    pub fn core(core: CoreUpdate) -> Self {
        Update::Core(core)
    }
}

// ---------------------------------------------------------------------------
// value comparison shared with guards and the interpreter

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

/// Equality with Int/Float compared numerically.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => as_number(a) == as_number(b),
        _ => a == b,
    }
}

/// Ordering for numbers (mixed Int/Float) and texts; `None` otherwise.
pub fn order_values(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
        _ => as_number(a)?.partial_cmp(&as_number(b)?),
    }
}

impl Guard {
    pub fn path(&self) -> &Path {
        match self {
            Guard::Exists(p) | Guard::NotExists(p) | Guard::Equals(p, _) | Guard::Compare(p, _, _) => p,
        }
    }

    pub fn holds(&self, snapshot: &Configuration) -> bool {
        let found = resolve_path(snapshot, self.path());
        match self {
            Guard::Exists(_) => found.is_ok(),
            Guard::NotExists(_) => found.is_err(),
            Guard::Equals(_, v) => matches!(found, Ok(Located::Data(d)) if values_equal(d, v)),
            Guard::Compare(_, op, v) => {
                let Ok(Located::Data(d)) = found else {
                    return false;
                };
                if *op == CompareOp::Ne {
                    return !values_equal(d, v);
                }
                match order_values(d, v) {
                    Some(o) => match op {
                        CompareOp::Lt => o == Ordering::Less,
                        CompareOp::Le => o != Ordering::Greater,
                        CompareOp::Gt => o == Ordering::Greater,
                        CompareOp::Ge => o != Ordering::Less,
                        CompareOp::Ne => unreachable!(),
                    },
                    None => false,
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// expansion

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpandError {
    #[error("unknown macro `{0}`")]
    UnknownMacro(Name),
    #[error("macro `{name}` takes {expected} argument(s), got {got}")]
    Arity { name: Name, expected: usize, got: usize },
    #[error("expansion of `{name}` failed: {reason}")]
    Failure { name: Name, reason: String },
}

/// Reduces an update to guard-optional core updates. Macros are expanded
/// against `snapshot` with the emitter's entity as `me`.
pub fn expand_update(
    update: &Update,
    emitter: &Path,
    snapshot: &Configuration,
    macros: &MacroRegistry,
) -> Result<Vec<Expanded>, ExpandError> {
    match update {
        Update::Core(c) => Ok(alloc::vec![Expanded::from(c.clone())]),
        Update::Guarded { guard, inner } => Ok(alloc::vec![Expanded {
            guard: Some(guard.clone()),
            core: inner.clone(),
        }]),
        Update::Macro { name, args } => macros.expand(name, args, emitter, snapshot),
    }
}

// ---------------------------------------------------------------------------
// conflicts

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FootKind {
    Property,
    CreateEntity,
    DeleteEntity,
    World,
}

struct Footprint {
    kind: FootKind,
    keys: Vec<Name>,
}

fn copy_keys(snapshot: &Configuration, src_world: &Name, src_entity: &Name, keys: &KeyFilter) -> Vec<Name> {
    let Some(src) = snapshot.entity(src_world, src_entity) else {
        return Vec::new();
    };
    match keys {
        KeyFilter::All => src.data.keys().chain(src.transitions.keys()).cloned().collect(),
        KeyFilter::Keys(ks) => ks
            .iter()
            .filter(|k| src.data.contains_key(*k) || src.transitions.contains_key(*k))
            .cloned()
            .collect(),
    }
}

fn footprint(update: &CoreUpdate, snapshot: &Configuration) -> Footprint {
    use CoreUpdate::*;
    let prop = |k: &Name| Footprint {
        kind: FootKind::Property,
        keys: alloc::vec![k.clone()],
    };
    match update {
        SetData { key, .. } | DeleteData { key, .. } | SetTransition { key, .. } | DeleteTransition { key, .. } => {
            prop(key)
        }
        StartProcess { process, .. } | CancelProcess { process, .. } | RebindProcess { process, .. } => prop(process),
        CreateEntity { .. } => Footprint {
            kind: FootKind::CreateEntity,
            keys: Vec::new(),
        },
        DeleteEntity { .. } => Footprint {
            kind: FootKind::DeleteEntity,
            keys: Vec::new(),
        },
        AddWorld { .. } | DeleteWorld { .. } => Footprint {
            kind: FootKind::World,
            keys: Vec::new(),
        },
        CopyProperties {
            src_world,
            src_entity,
            keys,
            ..
        } => Footprint {
            kind: FootKind::Property,
            keys: copy_keys(snapshot, src_world, src_entity, keys),
        },
    }
}

fn conflicting(a: &Footprint, ea: &Path, b: &Footprint, eb: &Path) -> bool {
    use FootKind::*;
    match (a.kind, b.kind) {
        (World, _) | (_, World) => true,
        (DeleteEntity, DeleteEntity | CreateEntity) | (CreateEntity, DeleteEntity | CreateEntity) => true,
        (DeleteEntity, _) | (_, DeleteEntity) => ea != eb,
        (CreateEntity, _) | (_, CreateEntity) => false,
        (Property, Property) => a.keys.iter().any(|k| b.keys.contains(k)),
    }
}

fn entry_order(a: &BucketEntry, b: &BucketEntry) -> Ordering {
    a.emitter.cmp(&b.emitter).then(a.seq.cmp(&b.seq))
}

struct Resolution {
    /// Conflict-free entries in `(emitter, seq)` order.
    survivors: Vec<BucketEntry>,
    dropped: Vec<DroppedUpdate>,
}

fn resolve(
    mut entries: Vec<BucketEntry>,
    snapshot: &Configuration,
    policy: ConflictPolicy,
) -> Result<Resolution, Vec<ConflictRecord>> {
    entries.sort_by(entry_order);
    let prints: Vec<Footprint> = entries.iter().map(|e| footprint(&e.update.core, snapshot)).collect();
    let n = entries.len();
    let conflict = |i: usize, j: usize| conflicting(&prints[i], &entries[i].emitter, &prints[j], &entries[j].emitter);

    let mut keep = alloc::vec![false; n];
    match policy {
        ConflictPolicy::LastWriterWins => {
            for i in (0..n).rev() {
                keep[i] = !(i + 1..n).any(|j| keep[j] && conflict(i, j));
            }
        }
        ConflictPolicy::FirstWins => {
            for i in 0..n {
                keep[i] = !(0..i).any(|j| keep[j] && conflict(i, j));
            }
        }
        ConflictPolicy::DropConflicting => {
            for (i, k) in keep.iter_mut().enumerate() {
                *k = !(0..n).any(|j| j != i && conflict(i, j));
            }
        }
        ConflictPolicy::FailTick => {
            let mut records = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if conflict(i, j) {
                        records.push(ConflictRecord {
                            entry: entries[i].clone(),
                            with: Some(entries[j].clone()),
                        });
                    }
                }
            }
            if !records.is_empty() {
                return Err(records);
            }
            keep.iter_mut().for_each(|k| *k = true);
        }
    }

    let mut survivors = Vec::new();
    let mut dropped = Vec::new();
    for (entry, kept) in entries.into_iter().zip(keep) {
        if kept {
            survivors.push(entry);
        } else {
            dropped.push(DroppedUpdate {
                entry,
                reason: DropReason::Conflict,
            });
        }
    }
    Ok(Resolution { survivors, dropped })
}

// ---------------------------------------------------------------------------
// commit

enum Refused {
    TargetMissing,
    /// The update contradicts the state it is applied to: a duplicate
    /// process start, a property name already used by another map, or
    /// creating something that exists.
    StateConflict,
}

fn commit(config: &mut Configuration, update: &CoreUpdate, snapshot: &Configuration) -> Result<(), Refused> {
    use CoreUpdate::*;
    let next_tick: Tick = snapshot.tick + 1;
    match update {
        SetData {
            world,
            entity,
            key,
            value,
        } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            if ent.transitions.contains_key(key) || ent.processes.contains_key(key) {
                return Err(Refused::StateConflict);
            }
            ent.data.insert(key.clone(), value.clone());
        }
        DeleteData { world, entity, key } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            ent.data.remove(key).ok_or(Refused::TargetMissing)?;
        }
        SetTransition {
            world,
            entity,
            key,
            transition,
        } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            if ent.data.contains_key(key) || ent.processes.contains_key(key) {
                return Err(Refused::StateConflict);
            }
            let mut t = transition.clone();
            t.name = key.clone();
            ent.transitions.insert(key.clone(), t);
        }
        DeleteTransition { world, entity, key } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            ent.transitions.remove(key).ok_or(Refused::TargetMissing)?;
        }
        StartProcess {
            world,
            entity,
            process,
            transition,
        } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            if ent.has_property(process) {
                return Err(Refused::StateConflict);
            }
            ent.processes.insert(
                process.clone(),
                Process::ready(process.clone(), transition.clone(), next_tick, 0),
            );
        }
        CancelProcess { world, entity, process } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            ent.processes.remove(process).ok_or(Refused::TargetMissing)?;
        }
        RebindProcess {
            world,
            entity,
            process,
            transition,
        } => {
            let ent = config.entity_mut(world, entity).ok_or(Refused::TargetMissing)?;
            let p = ent.processes.get_mut(process).ok_or(Refused::TargetMissing)?;
            if &p.transition != transition {
                p.transition = transition.clone();
                // A continuation belongs to the old transition; restart
                // unless the process is about to finish and respawn anyway.
                if !matches!(p.state, ProcessState::FinishedPending { .. }) {
                    p.state = ProcessState::Ready;
                    p.begin_tick = next_tick;
                }
            }
        }
        CreateEntity { world, entity } => {
            let w = config.worlds.get_mut(world).ok_or(Refused::TargetMissing)?;
            if w.entities.contains_key(entity) {
                return Err(Refused::StateConflict);
            }
            w.entities.insert(entity.clone(), Default::default());
        }
        DeleteEntity { world, entity } => {
            let w = config.worlds.get_mut(world).ok_or(Refused::TargetMissing)?;
            w.entities.remove(entity).ok_or(Refused::TargetMissing)?;
        }
        AddWorld { world, copy_from } => {
            if config.worlds.contains_key(world) {
                return Err(Refused::StateConflict);
            }
            let fresh = match copy_from {
                Some(src) => snapshot
                    .worlds
                    .get(src)
                    .ok_or(Refused::TargetMissing)?
                    .restarted_copy(next_tick),
                None => Default::default(),
            };
            config.worlds.insert(world.clone(), fresh);
        }
        DeleteWorld { world } => {
            config.worlds.remove(world).ok_or(Refused::TargetMissing)?;
        }
        CopyProperties {
            src_world,
            src_entity,
            dst_world,
            dst_entity,
            keys,
        } => {
            let src = snapshot.entity(src_world, src_entity).ok_or(Refused::TargetMissing)?;
            let dst = config.entity_mut(dst_world, dst_entity).ok_or(Refused::TargetMissing)?;
            let copied = copy_keys(snapshot, src_world, src_entity, keys);
            for k in &copied {
                let clash = if src.data.contains_key(k) {
                    dst.transitions.contains_key(k) || dst.processes.contains_key(k)
                } else {
                    dst.data.contains_key(k) || dst.processes.contains_key(k)
                };
                if clash {
                    return Err(Refused::StateConflict);
                }
            }
            for k in copied {
                if let Some(v) = src.data.get(&k) {
                    dst.data.insert(k, v.clone());
                } else if let Some(t) = src.transitions.get(&k) {
                    dst.transitions.insert(k, t.clone());
                }
            }
        }
    }
    Ok(())
}

/// Commits `entries` (already conflict-free) in phase order.
fn commit_entries(
    config: &mut Configuration,
    mut entries: Vec<BucketEntry>,
    snapshot: &Configuration,
    policy: ConflictPolicy,
    report: &mut BucketReport,
    aborts: &mut Vec<ConflictRecord>,
) {
    entries.sort_by(|a, b| {
        a.update
            .core
            .phase()
            .cmp(&b.update.core.phase())
            .then(entry_order(a, b))
    });
    for entry in entries {
        if let Some(g) = &entry.update.guard {
            if !g.holds(snapshot) {
                report.dropped.push(DroppedUpdate {
                    entry,
                    reason: DropReason::GuardFailed,
                });
                continue;
            }
        }
        match commit(config, &entry.update.core, snapshot) {
            Ok(()) => report.committed.push(entry),
            Err(Refused::TargetMissing) => report.dropped.push(DroppedUpdate {
                entry,
                reason: DropReason::TargetMissing,
            }),
            Err(Refused::StateConflict) => {
                if policy == ConflictPolicy::FailTick {
                    aborts.push(ConflictRecord {
                        entry: entry.clone(),
                        with: None,
                    });
                }
                report.dropped.push(DroppedUpdate {
                    entry,
                    reason: DropReason::Conflict,
                });
            }
        }
    }
}

/// Outcome of committing one or more buckets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BucketReport {
    /// Entries in commit order.
    pub committed: Vec<BucketEntry>,
    pub dropped: Vec<DroppedUpdate>,
}

/// Commits one fully expanded bucket on top of `config`.
///
/// Under `FailTick` any conflict aborts and nothing is applied; under the
/// other policies conflicts are resolved and reported as drops.
pub fn apply_bucket(
    mut config: Configuration,
    bucket: &UpdateBucket,
    snapshot: &Configuration,
    policy: ConflictPolicy,
) -> Result<(Configuration, BucketReport), TickAborted> {
    let res = resolve(bucket.entries.clone(), snapshot, policy).map_err(|conflicts| TickAborted { conflicts })?;
    let mut report = BucketReport {
        committed: Vec::new(),
        dropped: res.dropped,
    };
    let mut aborts = Vec::new();
    commit_entries(&mut config, res.survivors, snapshot, policy, &mut report, &mut aborts);
    if !aborts.is_empty() {
        return Err(TickAborted { conflicts: aborts });
    }
    Ok((config, report))
}

/// Groups entries by target.
pub fn into_buckets(entries: impl IntoIterator<Item = BucketEntry>) -> Vec<UpdateBucket> {
    let mut map: BTreeMap<BucketKey, Vec<BucketEntry>> = BTreeMap::new();
    for e in entries {
        map.entry(e.update.core.target()).or_default().push(e);
    }
    map.into_iter()
        .map(|(key, entries)| UpdateBucket { key, entries })
        .collect()
}

/// Applies every bucket of a tick and returns the configuration for the
/// next tick.
///
/// World-level additions go first, then entity buckets in `(world, entity)`
/// order, then world deletions. The result is independent of the order of
/// `buckets`.
pub fn apply_all(
    mut config: Configuration,
    buckets: &[UpdateBucket],
    snapshot: &Configuration,
    policy: ConflictPolicy,
) -> Result<(Configuration, BucketReport), TickAborted> {
    let mut merged: BTreeMap<BucketKey, Vec<BucketEntry>> = BTreeMap::new();
    for b in buckets {
        merged
            .entry(b.key.clone())
            .or_default()
            .extend(b.entries.iter().cloned());
    }

    let mut report = BucketReport::default();
    let mut conflicts = Vec::new();
    let mut world_adds = Vec::new();
    let mut world_deletes = Vec::new();
    let mut entity_buckets = Vec::new();
    for (key, entries) in merged {
        match resolve(entries, snapshot, policy) {
            Ok(res) => {
                report.dropped.extend(res.dropped);
                match key {
                    BucketKey::World(_) => {
                        let (deletes, adds): (Vec<_>, Vec<_>) = res
                            .survivors
                            .into_iter()
                            .partition(|e| matches!(e.update.core, CoreUpdate::DeleteWorld { .. }));
                        world_adds.extend(adds);
                        world_deletes.extend(deletes);
                    }
                    BucketKey::Entity(..) => entity_buckets.push(res.survivors),
                }
            }
            Err(mut c) => conflicts.append(&mut c),
        }
    }
    if !conflicts.is_empty() {
        return Err(TickAborted { conflicts });
    }

    let mut aborts = Vec::new();
    for entry in world_adds {
        commit_entries(
            &mut config,
            alloc::vec![entry],
            snapshot,
            policy,
            &mut report,
            &mut aborts,
        );
    }
    for survivors in entity_buckets {
        commit_entries(&mut config, survivors, snapshot, policy, &mut report, &mut aborts);
    }
    for entry in world_deletes {
        commit_entries(
            &mut config,
            alloc::vec![entry],
            snapshot,
            policy,
            &mut report,
            &mut aborts,
        );
    }
    if !aborts.is_empty() {
        return Err(TickAborted { conflicts: aborts });
    }
    config.tick = snapshot.tick + 1;
    Ok((config, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, World};
    use crate::name::name;
    use alloc::vec;

    fn base() -> Configuration {
        let mut w = World::default();
        let mut ch = Entity::default();
        ch.data.insert(name("loc"), Value::Coord(3, 5));
        w.entities.insert(name("ch"), ch);
        let mut banana = Entity::default();
        banana.data.insert(name("loc"), Value::Coord(1, 1));
        w.entities.insert(name("banana"), banana);
        let mut c = Configuration::new();
        c.worlds.insert(name("w"), w);
        c
    }

    fn entry(emitter: &str, seq: u32, core: CoreUpdate) -> BucketEntry {
        BucketEntry {
            emitter: Path::parse(emitter).unwrap(),
            seq,
            update: core.into(),
        }
    }

    fn set_loc(x: i64, y: i64) -> CoreUpdate {
        CoreUpdate::SetData {
            world: name("w"),
            entity: name("ch"),
            key: name("loc"),
            value: Value::Coord(x, y),
        }
    }

    fn bucket(entries: Vec<BucketEntry>) -> UpdateBucket {
        let key = entries[0].update.core.target();
        UpdateBucket { key, entries }
    }

    #[test]
    fn empty_bucket_is_identity() {
        let c = base();
        let b = UpdateBucket {
            key: BucketKey::Entity(name("w"), name("ch")),
            entries: vec![],
        };
        let (next, report) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(next, c);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn last_writer_wins_by_emitter_order() {
        let c = base();
        let b = bucket(vec![
            entry("w.zed.move", 0, set_loc(9, 9)),
            entry("w.ch.move", 0, set_loc(2, 5)),
        ]);
        let (next, report) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(next.data("w", "ch", "loc"), Some(&Value::Coord(9, 9)));
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].reason, DropReason::Conflict);
        assert_eq!(report.dropped[0].entry.emitter, Path::parse("w.ch.move").unwrap());

        let (first, _) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::FirstWins).unwrap();
        assert_eq!(first.data("w", "ch", "loc"), Some(&Value::Coord(2, 5)));

        let (none, r) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::DropConflicting).unwrap();
        assert_eq!(none, c);
        assert_eq!(r.dropped.len(), 2);

        let err = apply_bucket(c.clone(), &b, &c, ConflictPolicy::FailTick).unwrap_err();
        assert_eq!(err.conflicts.len(), 1);
    }

    #[test]
    fn guard_sees_snapshot_but_target_is_rechecked() {
        let snapshot = base();
        // Another bucket already removed the banana's location this tick.
        let mut config = snapshot.clone();
        config.entity_mut("w", "banana").unwrap().data.remove("loc");
        let grab = BucketEntry {
            emitter: Path::parse("w.monkey.grab").unwrap(),
            seq: 0,
            update: Expanded {
                guard: Some(Guard::Exists(Path::parse("w.banana.loc").unwrap())),
                core: CoreUpdate::DeleteData {
                    world: name("w"),
                    entity: name("banana"),
                    key: name("loc"),
                },
            },
        };
        let b = bucket(vec![grab]);
        let (_, report) = apply_bucket(config, &b, &snapshot, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].reason, DropReason::TargetMissing);
    }

    #[test]
    fn failing_guard_drops() {
        let c = base();
        let e = BucketEntry {
            emitter: Path::parse("w.ch.move").unwrap(),
            seq: 0,
            update: Expanded {
                guard: Some(Guard::Compare(
                    Path::parse("w.ch.loc").unwrap(),
                    CompareOp::Ne,
                    Value::Coord(3, 5),
                )),
                core: set_loc(0, 0),
            },
        };
        let (next, report) = apply_bucket(c.clone(), &bucket(vec![e]), &c, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(next, c);
        assert_eq!(report.dropped[0].reason, DropReason::GuardFailed);
    }

    #[test]
    fn delete_entity_commits_after_same_emitter_updates() {
        let c = base();
        let b = bucket(vec![
            entry(
                "w.ch.life",
                0,
                CoreUpdate::DeleteEntity {
                    world: name("w"),
                    entity: name("ch"),
                },
            ),
            entry("w.ch.life", 1, set_loc(0, 0)),
        ]);
        let (next, report) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::LastWriterWins).unwrap();
        assert!(next.entity("w", "ch").is_none());
        assert_eq!(report.committed.len(), 2);
        assert!(matches!(
            report.committed[1].update.core,
            CoreUpdate::DeleteEntity { .. }
        ));
    }

    #[test]
    fn delete_entity_conflicts_with_other_emitters() {
        let c = base();
        let b = bucket(vec![
            entry(
                "w.a.kill",
                0,
                CoreUpdate::DeleteEntity {
                    world: name("w"),
                    entity: name("ch"),
                },
            ),
            entry("w.b.move", 0, set_loc(0, 0)),
        ]);
        let (next, report) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(next.data("w", "ch", "loc"), Some(&Value::Coord(0, 0)));
        assert_eq!(report.dropped.len(), 1);
    }

    #[test]
    fn start_process_on_running_name_is_a_conflict() {
        let mut c = base();
        c.entity_mut("w", "ch")
            .unwrap()
            .processes
            .insert(name("move"), Process::ready(name("move"), name("mvRand"), 0, 0));
        let b = bucket(vec![entry(
            "w.ch.x",
            0,
            CoreUpdate::StartProcess {
                world: name("w"),
                entity: name("ch"),
                process: name("move"),
                transition: name("mvSmart"),
            },
        )]);
        let (next, report) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(next, c);
        assert_eq!(report.dropped[0].reason, DropReason::Conflict);
        assert!(apply_bucket(c.clone(), &b, &c, ConflictPolicy::FailTick).is_err());
    }

    #[test]
    fn add_world_then_entity_edit_in_same_tick() {
        let c = base();
        let add = entry(
            "w.ch.think",
            0,
            CoreUpdate::AddWorld {
                world: name("w'"),
                copy_from: Some(name("w")),
            },
        );
        let edit = entry(
            "w.ch.think",
            1,
            CoreUpdate::SetData {
                world: name("w'"),
                entity: name("ch"),
                key: name("hungry"),
                value: Value::Bool(true),
            },
        );
        let buckets = into_buckets(vec![edit, add]);
        let (next, report) = apply_all(c.clone(), &buckets, &c, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(next.tick, 1);
        assert_eq!(next.data("w'", "ch", "hungry"), Some(&Value::Bool(true)));
        assert_eq!(next.data("w", "ch", "hungry"), None);
        assert_eq!(report.committed.len(), 2);
    }

    #[test]
    fn quiescent_tick_only_advances_clock() {
        let c = base();
        let (next, _) = apply_all(c.clone(), &[], &c, ConflictPolicy::LastWriterWins).unwrap();
        let mut expected = c;
        expected.tick = 1;
        assert_eq!(next, expected);
    }

    #[test]
    fn delete_data_twice_is_idempotent() {
        let c = base();
        let del = bucket(vec![entry(
            "w.ch.eat",
            0,
            CoreUpdate::DeleteData {
                world: name("w"),
                entity: name("banana"),
                key: name("loc"),
            },
        )]);
        let (once, _) = apply_all(
            c.clone(),
            core::slice::from_ref(&del),
            &c,
            ConflictPolicy::LastWriterWins,
        )
        .unwrap();
        let (twice, report) = apply_all(once.clone(), &[del], &once, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(report.dropped[0].reason, DropReason::TargetMissing);
        let mut once_next = once;
        once_next.tick += 1;
        assert_eq!(twice, once_next);
    }

    #[test]
    fn rebind_restarts_a_suspended_process() {
        let mut c = base();
        let mut p = Process::ready(name("move"), name("mvRand"), 0, 3);
        p.state = ProcessState::Suspended {
            resume_tick: 50,
            cursor: crate::model::Cursor::Native { step: 1, draws: 0 },
        };
        c.entity_mut("w", "ch").unwrap().processes.insert(name("move"), p);
        let b = bucket(vec![entry(
            "w.cornOfWisdom.beenEaten",
            0,
            CoreUpdate::RebindProcess {
                world: name("w"),
                entity: name("ch"),
                process: name("move"),
                transition: name("mvSmart"),
            },
        )]);
        let (next, _) = apply_bucket(c.clone(), &b, &c, ConflictPolicy::LastWriterWins).unwrap();
        let p = next.process("w", "ch", "move").unwrap();
        assert_eq!(p.transition, name("mvSmart"));
        assert_eq!(p.state, ProcessState::Ready);
        assert_eq!(p.iteration, 3);
    }
}
