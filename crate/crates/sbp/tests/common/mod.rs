//! Random configurations and update batches, plus a brute-force model of
//! how a tick's buckets commit.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sbp_core::name::name;
use sbp_core::update::{BucketEntry, CompareOp, Expanded, KeyFilter, UpdateBucket};
use sbp_core::{
    Configuration, ConflictPolicy, CoreUpdate, Cursor, Entity, Guard, Name, Path, Process, ProcessState,
    TransitionDescription, Value, World,
};

pub const WORLDS: [&str; 4] = ["w0", "w1", "w2", "w3"];
pub const ENTITIES: [&str; 6] = ["e0", "e1", "e2", "e3", "e4", "e5"];
pub const DATA: [&str; 3] = ["k0", "k1", "k2"];
pub const TRANSITIONS: [&str; 2] = ["t0", "t1"];
pub const PROCESSES: [&str; 2] = ["p0", "p1"];
pub const EMITTERS: [&str; 3] = ["w0.e0.p0", "w0.e1.p0", "w1.e0.p1"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty pool")
}

fn transition(key: &str) -> TransitionDescription {
    TransitionDescription::new(
        name(key),
        name("tdl"),
        &format!("return {{ set_data me.k0 = {} }}", key.len()),
    )
}

pub fn random_config(rng: &mut ChaCha8Rng) -> Configuration {
    let mut c = Configuration::new();
    c.tick = rng.random_range(0..10);
    let nworlds = rng.random_range(1..=3);
    for w in WORLDS.iter().take(nworlds) {
        let mut world = World::default();
        let nent = rng.random_range(0..=5);
        let chosen: Vec<&str> = ENTITIES
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.7))
            .take(nent)
            .collect();
        for e in chosen {
            let mut ent = Entity::default();
            for k in DATA {
                if rng.random_bool(0.5) {
                    ent.data.insert(name(k), Value::Int(rng.random_range(0..4)));
                }
            }
            for t in TRANSITIONS {
                if rng.random_bool(0.5) {
                    ent.transitions.insert(name(t), transition(t));
                }
            }
            for p in PROCESSES {
                if rng.random_bool(0.4) {
                    let mut pr = Process::ready(name(p), name(pick(rng, &TRANSITIONS)), 0, rng.random_range(0..3));
                    if rng.random_bool(0.5) {
                        pr.state = ProcessState::Suspended {
                            resume_tick: c.tick + rng.random_range(1..5),
                            cursor: Cursor::Tdl {
                                resume: vec![1],
                                bindings: vec![],
                                draws: 0,
                            },
                        };
                    }
                    ent.processes.insert(name(p), pr);
                }
            }
            world.entities.insert(name(e), ent);
        }
        c.worlds.insert(name(w), world);
    }
    c
}

fn any_key(rng: &mut ChaCha8Rng) -> Name {
    let all: Vec<&str> = DATA.iter().chain(&TRANSITIONS).chain(&PROCESSES).copied().collect();
    name(pick(rng, &all))
}

pub fn random_core(rng: &mut ChaCha8Rng, world: &str, entity: &str) -> CoreUpdate {
    let (w, e) = (name(world), name(entity));
    match rng.random_range(0..12) {
        0 => CoreUpdate::SetData {
            world: w,
            entity: e,
            key: if rng.random_bool(0.8) {
                name(pick(rng, &DATA))
            } else {
                any_key(rng)
            },
            value: Value::Int(rng.random_range(0..4)),
        },
        1 => CoreUpdate::DeleteData {
            world: w,
            entity: e,
            key: name(pick(rng, &DATA)),
        },
        2 => {
            let key = if rng.random_bool(0.8) {
                name(pick(rng, &TRANSITIONS))
            } else {
                any_key(rng)
            };
            CoreUpdate::SetTransition {
                world: w,
                entity: e,
                transition: transition(key.as_str()),
                key,
            }
        }
        3 => CoreUpdate::DeleteTransition {
            world: w,
            entity: e,
            key: name(pick(rng, &TRANSITIONS)),
        },
        4 => CoreUpdate::StartProcess {
            world: w,
            entity: e,
            process: if rng.random_bool(0.8) {
                name(pick(rng, &PROCESSES))
            } else {
                any_key(rng)
            },
            transition: name(pick(rng, &TRANSITIONS)),
        },
        5 => CoreUpdate::CancelProcess {
            world: w,
            entity: e,
            process: name(pick(rng, &PROCESSES)),
        },
        6 => CoreUpdate::RebindProcess {
            world: w,
            entity: e,
            process: name(pick(rng, &PROCESSES)),
            transition: name(pick(rng, &TRANSITIONS)),
        },
        7 => CoreUpdate::CreateEntity { world: w, entity: e },
        8 => CoreUpdate::DeleteEntity { world: w, entity: e },
        9 => CoreUpdate::CopyProperties {
            src_world: name(pick(rng, &WORLDS[..3])),
            src_entity: name(pick(rng, &ENTITIES)),
            dst_world: w,
            dst_entity: e,
            keys: if rng.random_bool(0.3) {
                KeyFilter::All
            } else {
                let n = rng.random_range(1..=3);
                KeyFilter::Keys((0..n).map(|_| any_key(rng)).collect())
            },
        },
        10 => CoreUpdate::AddWorld {
            world: w,
            copy_from: rng.random_bool(0.5).then(|| name(pick(rng, &WORLDS))),
        },
        _ => CoreUpdate::DeleteWorld { world: w },
    }
}

pub fn random_guard(rng: &mut ChaCha8Rng) -> Guard {
    let w = name(pick(rng, &WORLDS[..3]));
    let e = name(pick(rng, &ENTITIES));
    let path = match rng.random_range(0..4) {
        0 => Path::entity(w, e),
        _ => Path::property(w, e, any_key(rng)),
    };
    let v = Value::Int(rng.random_range(0..4));
    match rng.random_range(0..4) {
        0 => Guard::Exists(path),
        1 => Guard::NotExists(path),
        2 => Guard::Equals(path, v),
        _ => Guard::Compare(
            path,
            *[
                CompareOp::Lt,
                CompareOp::Le,
                CompareOp::Gt,
                CompareOp::Ge,
                CompareOp::Ne,
            ]
            .choose(rng)
            .expect("ops"),
            v,
        ),
    }
}

pub fn random_entry(rng: &mut ChaCha8Rng, seqs: &mut BTreeMap<&'static str, u32>, core: CoreUpdate) -> BucketEntry {
    let emitter = pick(rng, &EMITTERS);
    let seq = seqs.entry(emitter).or_default();
    let entry = BucketEntry {
        emitter: Path::parse(emitter).expect("emitter path"),
        seq: *seq,
        update: Expanded {
            guard: rng.random_bool(0.3).then(|| random_guard(rng)),
            core,
        },
    };
    *seq += 1;
    entry
}

/// Up to `max_total` entries, grouped into buckets of at most `per_bucket`.
pub fn random_buckets(
    rng: &mut ChaCha8Rng,
    snapshot: &Configuration,
    max_total: usize,
    per_bucket: usize,
) -> Vec<UpdateBucket> {
    let mut seqs = BTreeMap::new();
    let n = rng.random_range(1..=max_total);
    let mut entries = Vec::new();
    // A few hot targets, mostly existing entities, so conflicts and
    // successful commits are both common.
    let existing: Vec<(&str, &str)> = snapshot
        .worlds
        .iter()
        .flat_map(|(w, world)| world.entities.keys().map(move |e| (w.as_str(), e.as_str())))
        .collect();
    let hot: Vec<(&str, &str)> = (0..3)
        .map(|_| match existing.choose(rng) {
            Some(t) if rng.random_bool(0.8) => *t,
            _ => (pick(rng, &WORLDS[..3]), pick(rng, &ENTITIES[..3])),
        })
        .collect();
    for _ in 0..n {
        let (w, e) = if rng.random_bool(0.7) {
            *hot.choose(rng).expect("hot")
        } else {
            (pick(rng, &WORLDS), pick(rng, &ENTITIES))
        };
        let core = random_core(rng, w, e);
        entries.push(random_entry(rng, &mut seqs, core));
    }
    let mut buckets = sbp_core::update::into_buckets(entries);
    for b in &mut buckets {
        b.entries.truncate(per_bucket);
    }
    buckets
}

// ---------------------------------------------------------------------------
// oracle

#[derive(Debug, Clone, PartialEq)]
enum Claim {
    Everything,
    Birth,
    Death,
    Keys(BTreeSet<String>),
}

fn source_keys(snapshot: &Configuration, w: &str, e: &str, filter: &KeyFilter) -> BTreeSet<String> {
    let Some(src) = snapshot.worlds.get(w).and_then(|w| w.entities.get(e)) else {
        return BTreeSet::new();
    };
    let present: BTreeSet<String> = src
        .data
        .keys()
        .chain(src.transitions.keys())
        .map(|k| k.to_string())
        .collect();
    match filter {
        KeyFilter::All => present,
        KeyFilter::Keys(ks) => ks
            .iter()
            .map(|k| k.to_string())
            .filter(|k| present.contains(k))
            .collect(),
    }
}

fn claim(u: &CoreUpdate, snapshot: &Configuration) -> Claim {
    use CoreUpdate::*;
    let one = |k: &Name| Claim::Keys([k.to_string()].into_iter().collect());
    match u {
        SetData { key, .. } | DeleteData { key, .. } | SetTransition { key, .. } | DeleteTransition { key, .. } => {
            one(key)
        }
        StartProcess { process, .. } | CancelProcess { process, .. } | RebindProcess { process, .. } => one(process),
        CreateEntity { .. } => Claim::Birth,
        DeleteEntity { .. } => Claim::Death,
        AddWorld { .. } | DeleteWorld { .. } => Claim::Everything,
        CopyProperties {
            src_world,
            src_entity,
            keys,
            ..
        } => Claim::Keys(source_keys(snapshot, src_world.as_str(), src_entity.as_str(), keys)),
    }
}

fn clash(a: &Claim, ea: &Path, b: &Claim, eb: &Path) -> bool {
    match (a, b) {
        (Claim::Everything, _) | (_, Claim::Everything) => true,
        (Claim::Birth | Claim::Death, Claim::Birth | Claim::Death) => true,
        (Claim::Death, Claim::Keys(_)) | (Claim::Keys(_), Claim::Death) => ea != eb,
        (Claim::Birth, Claim::Keys(_)) | (Claim::Keys(_), Claim::Birth) => false,
        (Claim::Keys(x), Claim::Keys(y)) => !x.is_disjoint(y),
    }
}

/// Survivor mask by exhaustive search over subsets. Returns `None` under
/// `FailTick` when any pair clashes.
fn survivors(entries: &[BucketEntry], snapshot: &Configuration, policy: ConflictPolicy) -> Option<Vec<bool>> {
    let n = entries.len();
    let claims: Vec<Claim> = entries.iter().map(|e| claim(&e.update.core, snapshot)).collect();
    let c = |i: usize, j: usize| clash(&claims[i], &entries[i].emitter, &claims[j], &entries[j].emitter);
    let any_pair = (0..n).any(|i| (0..n).any(|j| i != j && c(i, j)));
    match policy {
        ConflictPolicy::FailTick => (!any_pair).then(|| vec![true; n]),
        ConflictPolicy::DropConflicting => Some((0..n).map(|i| !(0..n).any(|j| j != i && c(i, j))).collect()),
        ConflictPolicy::LastWriterWins | ConflictPolicy::FirstWins => {
            let later = policy == ConflictPolicy::LastWriterWins;
            let mut found = Vec::new();
            for mask in 0u32..(1 << n) {
                let ok = (0..n).all(|i| {
                    let inside = mask & (1 << i) != 0;
                    let beaten = (0..n)
                        .filter(|&j| if later { j > i } else { j < i })
                        .any(|j| mask & (1 << j) != 0 && c(i, j));
                    inside == !beaten
                });
                if ok {
                    found.push(mask);
                }
            }
            assert_eq!(found.len(), 1, "the survivor set is unique");
            Some((0..n).map(|i| found[0] & (1 << i) != 0).collect())
        }
    }
}

fn lookup<'a>(c: &'a Configuration, p: &Path) -> Option<Option<&'a Value>> {
    let w = c.worlds.get(p.world.as_str())?;
    let Some(e) = &p.entity else { return Some(None) };
    let ent = w.entities.get(e.as_str())?;
    let Some(k) = &p.property else { return Some(None) };
    if let Some(v) = ent.data.get(k.as_str()) {
        return Some(Some(v));
    }
    (ent.transitions.contains_key(k.as_str()) || ent.processes.contains_key(k.as_str())).then_some(None)
}

fn guard_holds(g: &Guard, snapshot: &Configuration) -> bool {
    let int = |p: &Path| match lookup(snapshot, p) {
        Some(Some(Value::Int(i))) => Some(*i),
        _ => None,
    };
    match g {
        Guard::Exists(p) => lookup(snapshot, p).is_some(),
        Guard::NotExists(p) => lookup(snapshot, p).is_none(),
        Guard::Equals(p, Value::Int(v)) => int(p) == Some(*v),
        Guard::Compare(p, op, Value::Int(v)) => match int(p) {
            None => false,
            Some(x) => match op {
                CompareOp::Lt => x < *v,
                CompareOp::Le => x <= *v,
                CompareOp::Gt => x > *v,
                CompareOp::Ge => x >= *v,
                CompareOp::Ne => x != *v,
            },
        },
        other => panic!("generator only makes integer guards: {other:?}"),
    }
}

enum Outcome {
    Done,
    Missing,
    Clash,
}

fn apply_one(c: &mut Configuration, u: &CoreUpdate, snapshot: &Configuration) -> Outcome {
    use CoreUpdate::*;
    let next = snapshot.tick + 1;
    macro_rules! ent {
        ($w:expr, $e:expr) => {
            match c
                .worlds
                .get_mut($w.as_str())
                .and_then(|w| w.entities.get_mut($e.as_str()))
            {
                Some(x) => x,
                None => return Outcome::Missing,
            }
        };
    }
    let used =
        |x: &Entity, k: &Name| x.data.contains_key(k) || x.transitions.contains_key(k) || x.processes.contains_key(k);
    match u {
        SetData {
            world,
            entity,
            key,
            value,
        } => {
            let x = ent!(world, entity);
            if x.transitions.contains_key(key) || x.processes.contains_key(key) {
                return Outcome::Clash;
            }
            x.data.insert(key.clone(), value.clone());
        }
        DeleteData { world, entity, key } => {
            if ent!(world, entity).data.remove(key).is_none() {
                return Outcome::Missing;
            }
        }
        SetTransition {
            world,
            entity,
            key,
            transition,
        } => {
            let x = ent!(world, entity);
            if x.data.contains_key(key) || x.processes.contains_key(key) {
                return Outcome::Clash;
            }
            let mut t = transition.clone();
            t.name = key.clone();
            x.transitions.insert(key.clone(), t);
        }
        DeleteTransition { world, entity, key } => {
            if ent!(world, entity).transitions.remove(key).is_none() {
                return Outcome::Missing;
            }
        }
        StartProcess {
            world,
            entity,
            process,
            transition,
        } => {
            let x = ent!(world, entity);
            if used(x, process) {
                return Outcome::Clash;
            }
            x.processes.insert(
                process.clone(),
                Process::ready(process.clone(), transition.clone(), next, 0),
            );
        }
        CancelProcess { world, entity, process } => {
            if ent!(world, entity).processes.remove(process).is_none() {
                return Outcome::Missing;
            }
        }
        RebindProcess {
            world,
            entity,
            process,
            transition,
        } => {
            let Some(p) = ent!(world, entity).processes.get_mut(process) else {
                return Outcome::Missing;
            };
            if p.transition != *transition {
                p.transition = transition.clone();
                p.state = ProcessState::Ready;
                p.begin_tick = next;
            }
        }
        CreateEntity { world, entity } => {
            let Some(w) = c.worlds.get_mut(world) else {
                return Outcome::Missing;
            };
            if w.entities.contains_key(entity) {
                return Outcome::Clash;
            }
            w.entities.insert(entity.clone(), Entity::default());
        }
        DeleteEntity { world, entity } => {
            let Some(w) = c.worlds.get_mut(world) else {
                return Outcome::Missing;
            };
            if w.entities.remove(entity).is_none() {
                return Outcome::Missing;
            }
        }
        AddWorld { world, copy_from } => {
            if c.worlds.contains_key(world) {
                return Outcome::Clash;
            }
            let fresh = match copy_from {
                None => World::default(),
                Some(src) => {
                    let Some(src) = snapshot.worlds.get(src) else {
                        return Outcome::Missing;
                    };
                    let mut w = src.clone();
                    for e in w.entities.values_mut() {
                        for p in e.processes.values_mut() {
                            p.state = ProcessState::Ready;
                            p.begin_tick = next;
                        }
                    }
                    w
                }
            };
            c.worlds.insert(world.clone(), fresh);
        }
        DeleteWorld { world } => {
            if c.worlds.remove(world).is_none() {
                return Outcome::Missing;
            }
        }
        CopyProperties {
            src_world,
            src_entity,
            dst_world,
            dst_entity,
            keys,
        } => {
            let Some(src) = snapshot.worlds.get(src_world).and_then(|w| w.entities.get(src_entity)) else {
                return Outcome::Missing;
            };
            let ks = source_keys(snapshot, src_world.as_str(), src_entity.as_str(), keys);
            let x = ent!(dst_world, dst_entity);
            for k in &ks {
                let bad = if src.data.contains_key(k.as_str()) {
                    x.transitions.contains_key(k.as_str()) || x.processes.contains_key(k.as_str())
                } else {
                    x.data.contains_key(k.as_str()) || x.processes.contains_key(k.as_str())
                };
                if bad {
                    return Outcome::Clash;
                }
            }
            for k in ks {
                if let Some(v) = src.data.get(k.as_str()) {
                    x.data.insert(name(&k), v.clone());
                } else {
                    x.transitions.insert(name(&k), src.transitions[k.as_str()].clone());
                }
            }
        }
    }
    Outcome::Done
}

/// What committing `buckets` on top of `snapshot` should produce: the next
/// configuration and the committed `(emitter, seq)` list, or `None` for an
/// aborted tick.
pub fn oracle(
    snapshot: &Configuration,
    buckets: &[UpdateBucket],
    policy: ConflictPolicy,
) -> Option<(Configuration, Vec<(String, u32)>)> {
    let mut grouped: BTreeMap<(u8, String, String), Vec<BucketEntry>> = BTreeMap::new();
    for b in buckets {
        for e in &b.entries {
            let key = match &e.update.core {
                CoreUpdate::AddWorld { world, .. } | CoreUpdate::DeleteWorld { world } => {
                    (0, world.to_string(), String::new())
                }
                other => {
                    let t = other.target();
                    match t {
                        sbp_core::update::BucketKey::Entity(w, en) => (1, w.to_string(), en.to_string()),
                        sbp_core::update::BucketKey::World(w) => (0, w.to_string(), String::new()),
                    }
                }
            };
            grouped.entry(key).or_default().push(e.clone());
        }
    }
    let mut plan: Vec<((u8, String, String, u8), BucketEntry)> = Vec::new();
    for ((class, w, en), mut entries) in grouped {
        entries.sort_by_key(|e| (e.emitter.to_string(), e.seq));
        let keep = survivors(&entries, snapshot, policy)?;
        for (e, k) in entries.into_iter().zip(keep) {
            if !k {
                continue;
            }
            let phase = match e.update.core {
                CoreUpdate::CreateEntity { .. } | CoreUpdate::AddWorld { .. } => 0,
                CoreUpdate::DeleteEntity { .. } | CoreUpdate::DeleteWorld { .. } => 2,
                _ => 1,
            };
            let class = match (class, &e.update.core) {
                (0, CoreUpdate::DeleteWorld { .. }) => 2,
                (c, _) => c,
            };
            plan.push(((class, w.clone(), en.clone(), phase), e));
        }
    }
    plan.sort_by(|(ka, a), (kb, b)| {
        ka.cmp(kb)
            .then_with(|| (a.emitter.to_string(), a.seq).cmp(&(b.emitter.to_string(), b.seq)))
    });
    let mut c = snapshot.clone();
    let mut committed = Vec::new();
    for (_, e) in plan {
        if let Some(g) = &e.update.guard {
            if !guard_holds(g, snapshot) {
                continue;
            }
        }
        match apply_one(&mut c, &e.update.core, snapshot) {
            Outcome::Done => committed.push((e.emitter.to_string(), e.seq)),
            Outcome::Missing => {}
            Outcome::Clash if policy == ConflictPolicy::FailTick => return None,
            Outcome::Clash => {}
        }
    }
    c.tick = snapshot.tick + 1;
    Some((c, committed))
}

pub const POLICIES: [ConflictPolicy; 4] = [
    ConflictPolicy::LastWriterWins,
    ConflictPolicy::FirstWins,
    ConflictPolicy::DropConflicting,
    ConflictPolicy::FailTick,
];

/// Buckets over `config` whose targets do not overlap: two distinct entity
/// buckets in existing worlds.
pub fn disjoint_pair(rng: &mut ChaCha8Rng, config: &Configuration) -> (UpdateBucket, UpdateBucket) {
    let mut seqs = BTreeMap::new();
    let worlds: Vec<&str> = config.worlds.keys().map(|w| w.as_str()).collect();
    let a = (pick(rng, &worlds), pick(rng, &ENTITIES));
    let b = loop {
        let b = (pick(rng, &worlds), pick(rng, &ENTITIES));
        if b != a {
            break b;
        }
    };
    let mut make = |(w, e): (&str, &str)| {
        let n = rng.random_range(1..=8);
        let entries: Vec<BucketEntry> = (0..n)
            .map(|_| {
                let core = loop {
                    let u = random_core(rng, w, e);
                    if !matches!(u, CoreUpdate::AddWorld { .. } | CoreUpdate::DeleteWorld { .. }) {
                        break u;
                    }
                };
                random_entry(rng, &mut seqs, core)
            })
            .collect();
        UpdateBucket {
            key: sbp_core::update::BucketKey::Entity(name(w), name(e)),
            entries,
        }
    };
    let first = make(a);
    let second = make(b);
    (first, second)
}
