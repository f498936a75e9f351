//! Builders for the bundled example scenarios.
//!
//! The files under `fixtures/` are `save()` of these builders with default
//! parameters; `sbp generate-fixtures` rewrites them.

use std::collections::BTreeMap;

use sbp_core::name::name;
use sbp_core::rng::Stream;
use sbp_core::{ConflictPolicy, Entity, Path, Process, TransitionDescription, Value, World};

use crate::scenario::{Binding, MacroDecl, Scenario};

/// File name and builder output for every shipped fixture.
pub fn all() -> Vec<(&'static str, Scenario)> {
    vec![
        ("chicken.scenario", chicken(&ChickenParams::default())),
        ("barker.scenario", barker()),
        ("village.scenario", village()),
        ("monkeys_guarded.scenario", monkeys(true)),
        ("monkeys_unguarded.scenario", monkeys(false)),
    ]
}

fn text_list(items: &[&str]) -> Value {
    Value::List(items.iter().map(|s| Value::text(s)).collect())
}

fn data(e: &mut Entity, key: &str, v: Value) {
    e.data.insert(name(key), v);
}

fn transition(e: &mut Entity, key: &str, semantics: &str, source: &str) {
    e.transitions.insert(
        name(key),
        TransitionDescription::new(name(key), name(semantics), source),
    );
}

fn tdl(e: &mut Entity, key: &str, source: &str) {
    transition(e, key, "tdl", source);
}

fn process(e: &mut Entity, key: &str, transition: &str) {
    e.processes
        .insert(name(key), Process::ready(name(key), name(transition), 0, 0));
}

fn put(w: &mut World, key: &str, e: Entity) {
    w.entities.insert(name(key), e);
}

fn macro_decl(s: &mut Scenario, key: &str, params: &[&str], body: &str) {
    s.macros.insert(
        name(key),
        MacroDecl {
            params: params.iter().map(|p| p.to_string()).collect(),
            body: body.to_string(),
        },
    );
}

// ---------------------------------------------------------------------------
// chickens

#[derive(Debug, Clone, PartialEq)]
pub struct ChickenParams {
    pub chickens: usize,
    /// Corn besides the pieces under each chicken and the wisdom corn.
    pub corn: usize,
    /// Corn and chickens are placed in `[-half_extent, half_extent]^2`.
    pub half_extent: i64,
    /// `mvRand` waits `randomValue(1..move_wait)` before each step.
    pub move_wait: i64,
    /// `mvSmart` waits `randomValue(1..smart_wait)` before each step.
    pub smart_wait: i64,
    /// Put the wisdom corn under the first chicken instead of at a random
    /// spot.
    pub wisdom_under_first: bool,
    pub placement_seed: u64,
}

impl Default for ChickenParams {
    fn default() -> Self {
        ChickenParams {
            chickens: 6,
            corn: 40,
            half_extent: 10,
            move_wait: 5000,
            smart_wait: 1000,
            wisdom_under_first: false,
            placement_seed: 1,
        }
    }
}

impl ChickenParams {
    /// The first chicken eats the wisdom corn on tick 0 and then has plenty
    /// of corn to walk to with short waits.
    pub fn wisdom_trail() -> Self {
        ChickenParams {
            corn: 120,
            smart_wait: 10,
            wisdom_under_first: true,
            ..Self::default()
        }
    }
}

const FIND_CORN: &str = r#"select en in myworld where en != me and exists(en.types) and en.types contains "corn" and exists(en.loc) and en.loc == me.loc {
  return { eatCorn(en) }
}
"#;

const CORN_EATEN: &str = "return stop { delete_me }\n";

const WISDOM_EATEN: &str = r#"let ch = me.eatenBy
return stop { delete_me, copyTransition("mvSmart", ch), changeTransition(ch, "move", "mvSmart") }
"#;

fn mv_rand(wait: i64) -> String {
    format!(
        r#"wait randomValue(1..{wait})
switch randomValue(1..4) {{
  case 1: return {{ mv_up }}
  case 2: return {{ mv_right }}
  case 3: return {{ mv_down }}
  case 4: return {{ mv_left }}
}}
"#
    )
}

fn mv_smart(wait: i64) -> String {
    format!(
        r#"wait randomValue(1..{wait})
select c in myworld where exists(c.types) and c.types contains "corn" and exists(c.loc) minimizing distance(me.loc, c.loc) {{
  let (dx, dy) = c.loc - me.loc
  if abs(dx) > abs(dy) {{
    if dx > 0 {{ return {{ mv_right }} }}
    return {{ mv_left }}
  }}
  if dy > 0 {{ return {{ mv_down }} }}
  if dy < 0 {{ return {{ mv_up }} }}
}}
"#
    )
}

pub fn chicken(p: &ChickenParams) -> Scenario {
    let mut s = Scenario {
        policy: ConflictPolicy::LastWriterWins,
        seed: Some(42),
        ..Scenario::default()
    };
    macro_decl(&mut s, "mv_up", &[], "return { set_data me.loc = me.loc + (0, -1) }");
    macro_decl(&mut s, "mv_down", &[], "return { set_data me.loc = me.loc + (0, 1) }");
    macro_decl(&mut s, "mv_left", &[], "return { set_data me.loc = me.loc + (-1, 0) }");
    macro_decl(&mut s, "mv_right", &[], "return { set_data me.loc = me.loc + (1, 0) }");
    macro_decl(
        &mut s,
        "eatCorn",
        &["en"],
        "return { delete_data $en.loc, set_data $en.eatenBy = me, start_process $en.eaten = beenEaten }",
    );
    macro_decl(&mut s, "delete_me", &[], "return { delete_entity me }");
    macro_decl(
        &mut s,
        "copyTransition",
        &["t", "ch"],
        "return { copy_properties me -> $ch [$t] }",
    );
    macro_decl(
        &mut s,
        "changeTransition",
        &["ch", "p", "t"],
        "return { rebind_process $ch.($p) = ($t) }",
    );

    let mut rng = Stream::new(p.placement_seed, &Path::world(name("placement")), 0);
    let e = p.half_extent;
    let mut spot = move || Value::Coord(rng.range_inclusive(-e, e), rng.range_inclusive(-e, e));

    let mut farm = World::default();
    let mut starts = Vec::new();
    for i in 0..p.chickens {
        let loc = spot();
        starts.push(loc.clone());
        let mut ch = Entity::default();
        data(&mut ch, "loc", loc);
        data(&mut ch, "types", text_list(&["chicken"]));
        tdl(&mut ch, "mvRand", &mv_rand(p.move_wait));
        tdl(&mut ch, "findCorn", FIND_CORN);
        process(&mut ch, "move", "mvRand");
        process(&mut ch, "eat", "findCorn");
        put(&mut farm, &format!("ch{i}"), ch);
    }
    let corn_at = |loc: Value| {
        let mut c = Entity::default();
        data(&mut c, "loc", loc);
        data(&mut c, "types", text_list(&["corn"]));
        tdl(&mut c, "beenEaten", CORN_EATEN);
        c
    };
    let total = starts.len() + p.corn;
    let width = total.to_string().len();
    let mut wisdom_loc = None;
    for (i, loc) in starts.iter().enumerate() {
        if i == 0 && p.wisdom_under_first {
            wisdom_loc = Some(loc.clone());
            continue;
        }
        put(&mut farm, &format!("corn{i:0width$}"), corn_at(loc.clone()));
    }
    for i in starts.len()..total {
        put(&mut farm, &format!("corn{i:0width$}"), corn_at(spot()));
    }
    let mut wisdom = Entity::default();
    data(&mut wisdom, "loc", wisdom_loc.unwrap_or_else(&mut spot));
    data(&mut wisdom, "types", text_list(&["corn", "wisdom"]));
    tdl(&mut wisdom, "beenEaten", WISDOM_EATEN);
    tdl(&mut wisdom, "mvSmart", &mv_smart(p.smart_wait));
    put(&mut farm, "cornOfWisdom", wisdom);

    s.config.worlds.insert(name("w"), farm);
    s
}

// ---------------------------------------------------------------------------
// barker and the vegetarian

const WATCH_PEOPLE: &str = r#"wait randomValue(50)
select en in myworld where exists(en.types) and en.types contains "human" and en.eatingHabits == "unknown" and distance(me.loc, en.loc) <= 2 {
  let country = entity(myworld, en.looksLike)
  let prototype = country.inhPrototype
  return { setEatingHabits(en, prototype), setPotentialCustomer(en) }
}
"#;

const MAKE_OFFER: &str = r#"let cus = me.potentialCustomer
let guest = entity(@@w', name(cus))
emit {
  add_world @@w' from myworld,
  cancel_process entity(@@w', name(me)).watch,
  cancel_process entity(@@w', name(me)).offer,
  set_data guest.availableFood = @restaurant.availableFood,
  set_data guest.hungry = true,
  start_process guest.dinner = startDinner
}
await guest.dinner
let food = guest.selectedFood
return stop { praiseFood(cus, food), delete_world @@w' }
"#;

const START_DINNER: &str = r#"wait 2
if me.hungry and me.availableFood contains me.preferredDish {
  return stop { set_data me.selectedFood = me.preferredDish, set_data me.hungry = false }
}
return stop { set_data me.selectedFood = "nothing" }
"#;

const EXPLAIN: &str = r#"wait 1
let pers = me.talkingTo
if exists(pers.offers) and me.meatDishes contains pers.offers {
  let w_pers = world("w_" + name(pers))
  return stop { tellEatingHabits(w_pers), start_process entity(w_pers, name(pers)).offer = makeOffer }
}
"#;

pub fn barker() -> Scenario {
    let mut s = Scenario {
        policy: ConflictPolicy::LastWriterWins,
        seed: Some(7),
        ..Scenario::default()
    };
    macro_decl(
        &mut s,
        "setEatingHabits",
        &["p1", "p2"],
        "return { copy_properties $p2 -> $p1 [eatingHabits, diet, preferredDish, startDinner] }",
    );
    macro_decl(
        &mut s,
        "setPotentialCustomer",
        &["p"],
        "return { set_data me.potentialCustomer = $p, start_process me.offer = makeOffer }",
    );
    macro_decl(
        &mut s,
        "praiseFood",
        &["cus", "food"],
        r#"return { set_data me.offered = $food, set_data entity(world("w_" + name($cus)), name(me)).offers = $food }"#,
    );
    macro_decl(
        &mut s,
        "tellEatingHabits",
        &["w"],
        "return { copy_properties me -> entity($w, name(me)) [eatingHabits, diet, preferredDish, startDinner] }",
    );

    let mut wb = World::default();
    let mut barker = Entity::default();
    data(&mut barker, "loc", Value::Coord(0, 0));
    tdl(&mut barker, "watchPeople", WATCH_PEOPLE);
    tdl(&mut barker, "makeOffer", MAKE_OFFER);
    process(&mut barker, "watch", "watchPeople");
    put(&mut wb, "barker", barker);
    let mut ada = Entity::default();
    data(&mut ada, "loc", Value::Coord(1, 0));
    data(&mut ada, "types", text_list(&["human"]));
    data(&mut ada, "looksLike", Value::text("england"));
    data(&mut ada, "eatingHabits", Value::text("unknown"));
    put(&mut wb, "ada", ada);
    let mut england = Entity::default();
    data(&mut england, "inhPrototype", Value::EntityRef(name("englishProto")));
    put(&mut wb, "england", england);
    let mut proto = Entity::default();
    data(&mut proto, "eatingHabits", Value::text("english"));
    data(&mut proto, "diet", Value::text("omnivore"));
    data(&mut proto, "preferredDish", Value::text("blood pudding"));
    tdl(&mut proto, "startDinner", START_DINNER);
    put(&mut wb, "englishProto", proto);
    let mut restaurant = Entity::default();
    data(
        &mut restaurant,
        "availableFood",
        text_list(&["blood pudding", "roast beef", "vegetable curry"]),
    );
    put(&mut wb, "restaurant", restaurant);
    s.config.worlds.insert(name("w_barker"), wb);

    let mut wa = World::default();
    let mut ada = Entity::default();
    data(&mut ada, "eatingHabits", Value::text("own"));
    data(&mut ada, "diet", Value::text("vegetarian"));
    data(&mut ada, "preferredDish", Value::text("vegetable curry"));
    data(&mut ada, "meatDishes", text_list(&["blood pudding", "roast beef"]));
    data(&mut ada, "talkingTo", Value::EntityRef(name("barker")));
    tdl(&mut ada, "explainEatingHabits", EXPLAIN);
    tdl(&mut ada, "startDinner", START_DINNER);
    process(&mut ada, "explain", "explainEatingHabits");
    put(&mut wa, "ada", ada);
    put(&mut wa, "barker", Entity::default());
    s.config.worlds.insert(name("w_ada"), wa);
    s
}

// ---------------------------------------------------------------------------
// village level of detail

const WATCH_PLAYER: &str = r#"wait 1
let near = distance(me.loc, @player.loc) <= me.radius
if near and me.mode == "apx" {
  return { set_data me.mode = "act", start_process me.enter = syncToAct }
}
if not near and me.mode == "act" {
  return { set_data me.mode = "apx", start_process me.leave = syncToApx }
}
"#;

const WANDER: &str = r#"wait randomValue(1..3)
let (x, y) = me.loc
let (hx, hy) = me.home
let nx = x + randomValue(-1..1)
if abs(nx - hx) <= 2 {
  return { set_data me.loc = (nx, y) }
}
"#;

const GROW: &str = r#"wait 40
if me.population < me.capacity {
  return { set_data me.population = me.population + 1 }
}
"#;

/// A route from `(0,0)` to `(to,0)` and back.
pub fn back_and_forth(to: i64) -> Value {
    let out = (0..=to).chain((0..to).rev());
    Value::List(out.map(|x| Value::Coord(x, 0)).collect())
}

pub fn village() -> Scenario {
    let mut s = Scenario {
        policy: ConflictPolicy::LastWriterWins,
        seed: Some(3),
        ..Scenario::default()
    };
    s.semantics.insert(
        name("walker"),
        Binding::Native {
            behaviour: "route_walker".into(),
        },
    );
    s.semantics.insert(
        name("sync"),
        Binding::Native {
            behaviour: "village_sync".into(),
        },
    );
    let mut over = World::default();
    let mut player = Entity::default();
    data(&mut player, "loc", Value::Coord(0, 0));
    transition(&mut player, "walk", "walker", &back_and_forth(50).to_string());
    process(&mut player, "walking", "walk");
    put(&mut over, "player", player);
    let villages: BTreeMap<&str, (i64, i64)> = [("v1", (12, 5)), ("v2", (40, 8))].into_iter().collect();
    for (v, (x, population)) in villages {
        let act = format!("{v}_act");
        let apx = format!("{v}_apx");
        let mut marker = Entity::default();
        data(&mut marker, "loc", Value::Coord(x, 0));
        data(&mut marker, "radius", Value::Int(4));
        data(&mut marker, "mode", Value::text("apx"));
        data(&mut marker, "act", Value::WorldRef(name(&act)));
        data(&mut marker, "apx", Value::WorldRef(name(&apx)));
        tdl(&mut marker, "watch", WATCH_PLAYER);
        transition(&mut marker, "syncToAct", "sync", "act");
        transition(&mut marker, "syncToApx", "sync", "apx");
        process(&mut marker, "watching", "watch");
        put(&mut over, v, marker);

        let mut wa = World::default();
        let mut template = Entity::default();
        data(&mut template, "types", text_list(&["template"]));
        data(&mut template, "home", Value::Coord(x, 0));
        tdl(&mut template, "wander", WANDER);
        put(&mut wa, "template", template);
        s.config.worlds.insert(name(&act), wa);

        let mut wp = World::default();
        let mut stats = Entity::default();
        data(&mut stats, "population", Value::Int(population));
        data(&mut stats, "capacity", Value::Int(population * 2));
        tdl(&mut stats, "grow", GROW);
        process(&mut stats, "tick", "grow");
        put(&mut wp, "stats", stats);
        s.config.worlds.insert(name(&apx), wp);
    }
    s.config.worlds.insert(name("overworld"), over);
    s
}

// ---------------------------------------------------------------------------
// two monkeys, one banana

const GRAB_GUARDED: &str = r#"wait randomValue(1..3)
emit { when not exists(myworld.banana.heldBy) then set_data myworld.banana.heldBy = me }
wait 1
if exists(myworld.banana.heldBy) and myworld.banana.heldBy == me {
  return stop { set_data me.holds_banana = true }
}
return stop
"#;

const GRAB_UNGUARDED: &str = r#"wait me.reach
return stop { set_data myworld.banana.heldBy = me, set_data me.holds_banana = true }
"#;

/// Both monkeys reach for the banana. The guarded grab checks that nobody
/// holds it; the unguarded one writes regardless, and with equal `reach`
/// both writes land on the same tick.
pub fn monkeys(guarded: bool) -> Scenario {
    let mut s = Scenario {
        policy: ConflictPolicy::LastWriterWins,
        seed: Some(1),
        ..Scenario::default()
    };
    let mut w = World::default();
    let mut banana = Entity::default();
    data(&mut banana, "loc", Value::Coord(5, 5));
    put(&mut w, "banana", banana);
    for m in ["monkey1", "monkey2"] {
        let mut e = Entity::default();
        data(&mut e, "types", text_list(&["monkey"]));
        if guarded {
            tdl(&mut e, "grab", GRAB_GUARDED);
        } else {
            data(&mut e, "reach", Value::Int(3));
            tdl(&mut e, "grab", GRAB_UNGUARDED);
        }
        process(&mut e, "grabbing", "grab");
        put(&mut w, m, e);
    }
    s.config.worlds.insert(name("jungle"), w);
    s
}
