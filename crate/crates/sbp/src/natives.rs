//! Native behaviours shipped with the crate.
//!
//! A scenario binds one with
//!
//! ```toml
//! [semantics.walker]
//! kind = "native"
//! behaviour = "route_walker"
//! ```
//!
//! and the transition's `source` is handed to the behaviour as its
//! parameter text.

use std::sync::Arc;

use sbp_core::name::Name;
use sbp_core::semantics::{NativeBehaviour, NativeCtx, NativeNext, NativeResult};
use sbp_core::text::parse_value;
use sbp_core::{Configuration, CoreUpdate, Update, Value, World};

pub const NAMES: &[&str] = &["route_walker", "village_sync"];

pub fn lookup(name: &str) -> Option<Arc<dyn NativeBehaviour>> {
    match name {
        "route_walker" => Some(Arc::new(RouteWalker)),
        "village_sync" => Some(Arc::new(VillageSync)),
        _ => None,
    }
}

/// Walks the owning entity along a fixed route, one waypoint per tick.
///
/// Source: a list of coordinates, e.g. `[(0,0),(1,0),(2,0)]`. Step `i`
/// sets `loc` to waypoint `i` and waits one tick; after the last waypoint
/// the process finishes with `cont = true`, so a respawn walks the route
/// again.
pub struct RouteWalker;

impl NativeBehaviour for RouteWalker {
    fn step(&self, ctx: NativeCtx<'_>) -> Result<NativeResult, String> {
        let route = match parse_value(ctx.source) {
            Ok(Value::List(items)) => items,
            Ok(other) => return Err(format!("route must be a list, got {}", other.kind())),
            Err(e) => return Err(format!("bad route: {e}")),
        };
        let i = ctx.step as usize;
        let Some(waypoint) = route.get(i) else {
            return Ok(NativeResult {
                updates: Vec::new(),
                next: NativeNext::Finished { cont: true },
            });
        };
        if !matches!(waypoint, Value::Coord(..)) {
            return Err(format!("waypoint {i} is not a coordinate"));
        }
        Ok(NativeResult {
            updates: vec![Update::Core(CoreUpdate::SetData {
                world: ctx.world.clone(),
                entity: ctx.entity.clone(),
                key: key("loc"),
                value: waypoint.clone(),
            })],
            next: NativeNext::Wait {
                ticks: 1,
                step: ctx.step + 1,
            },
        })
    }
}

/// Hands a village over between its detailed and approximated worlds.
///
/// Runs on the village marker entity, which names the two worlds in its
/// data entries `act` and `apx` (world references) and its centre in
/// `loc`. Source `act` switches to the detailed world, `apx` back.
///
/// Conventions of the two worlds:
/// - the detailed world has a `template` entity carrying the `wander`
///   transition; inhabitants are entities whose `types` contain
///   `"inhabitant"` and run `wander` as their process `live`;
/// - the approximated world has a `stats` entity with a `population`
///   count and a `grow` transition run as process `tick`.
///
/// Switching to `act` cancels every process of the approximated world,
/// creates or deletes inhabitants until their number equals `population`
/// and starts `live` on each. Switching to `apx` cancels every process of
/// the detailed world, stores the inhabitant count as `population` and
/// starts `tick`. Both switches commit in one tick.
pub struct VillageSync;

fn key(s: &str) -> Name {
    Name::new(s).expect("static names are valid")
}

fn world_ref(snapshot: &Configuration, world: &Name, entity: &Name, k: &str) -> Result<Name, String> {
    match snapshot.data(world, entity, k) {
        Some(Value::WorldRef(w)) => Ok(w.clone()),
        other => Err(format!(
            "{world}.{entity}.{k} should be a world reference, got {other:?}"
        )),
    }
}

fn is_inhabitant(e: &sbp_core::Entity) -> bool {
    matches!(e.data.get("types"), Some(Value::List(ts)) if ts.contains(&Value::text("inhabitant")))
}

fn cancel_all(world_name: &Name, world: &World, out: &mut Vec<Update>) {
    for (en, e) in &world.entities {
        for pn in e.processes.keys() {
            out.push(Update::Core(CoreUpdate::CancelProcess {
                world: world_name.clone(),
                entity: en.clone(),
                process: pn.clone(),
            }));
        }
    }
}

impl NativeBehaviour for VillageSync {
    fn step(&self, ctx: NativeCtx<'_>) -> Result<NativeResult, String> {
        let snap = ctx.snapshot;
        let act = world_ref(snap, ctx.world, ctx.entity, "act")?;
        let apx = world_ref(snap, ctx.world, ctx.entity, "apx")?;
        let act_w = snap
            .worlds
            .get(&act)
            .ok_or_else(|| format!("world `{act}` does not exist"))?;
        let apx_w = snap
            .worlds
            .get(&apx)
            .ok_or_else(|| format!("world `{apx}` does not exist"))?;
        let stats = key("stats");
        let mut updates = Vec::new();
        match ctx.source.trim() {
            "act" => {
                cancel_all(&apx, apx_w, &mut updates);
                let population = match snap.data(&apx, &stats, "population") {
                    Some(Value::Int(n)) if *n >= 0 => *n as usize,
                    other => return Err(format!("{apx}.stats.population should be a count, got {other:?}")),
                };
                let centre = match act_w.entities.get("template").and_then(|t| t.data.get("home")) {
                    Some(Value::Coord(x, y)) => (*x, *y),
                    _ => (0, 0),
                };
                let existing: Vec<&Name> = act_w
                    .entities
                    .iter()
                    .filter(|(_, e)| is_inhabitant(e))
                    .map(|(n, _)| n)
                    .collect();
                let mut living: Vec<Name> = existing.iter().take(population).map(|n| (*n).clone()).collect();
                for n in existing.iter().skip(population) {
                    updates.push(Update::Core(CoreUpdate::DeleteEntity {
                        world: act.clone(),
                        entity: (*n).clone(),
                    }));
                }
                let mut i = 0;
                while living.len() < population {
                    let n = key(&format!("villager{i}"));
                    i += 1;
                    if act_w.entities.contains_key(&n) {
                        continue;
                    }
                    let home = Value::Coord(centre.0 + (i as i64 % 5) - 2, centre.1 + (i as i64 / 5 % 5) - 2);
                    updates.push(Update::Core(CoreUpdate::CreateEntity {
                        world: act.clone(),
                        entity: n.clone(),
                    }));
                    for (k, v) in [
                        ("types", Value::List(vec![Value::text("inhabitant")])),
                        ("home", home.clone()),
                        ("loc", home),
                    ] {
                        updates.push(Update::Core(CoreUpdate::SetData {
                            world: act.clone(),
                            entity: n.clone(),
                            key: key(k),
                            value: v,
                        }));
                    }
                    living.push(n);
                }
                for n in living {
                    updates.push(Update::Core(CoreUpdate::CopyProperties {
                        src_world: act.clone(),
                        src_entity: key("template"),
                        dst_world: act.clone(),
                        dst_entity: n.clone(),
                        keys: sbp_core::update::KeyFilter::Keys(vec![key("wander")]),
                    }));
                    updates.push(Update::Core(CoreUpdate::StartProcess {
                        world: act.clone(),
                        entity: n,
                        process: key("live"),
                        transition: key("wander"),
                    }));
                }
            }
            "apx" => {
                cancel_all(&act, act_w, &mut updates);
                let count = act_w.entities.values().filter(|e| is_inhabitant(e)).count();
                updates.push(Update::Core(CoreUpdate::SetData {
                    world: apx.clone(),
                    entity: stats.clone(),
                    key: key("population"),
                    value: Value::Int(count as i64),
                }));
                updates.push(Update::Core(CoreUpdate::StartProcess {
                    world: apx.clone(),
                    entity: stats,
                    process: key("tick"),
                    transition: key("grow"),
                }));
            }
            other => return Err(format!("village_sync source must be `act` or `apx`, got `{other}`")),
        }
        Ok(NativeResult {
            updates,
            next: NativeNext::Finished { cont: false },
        })
    }
}
