use proptest::prelude::*;
use sbp_core::name::name;
use sbp_core::rng::Stream;
use sbp_core::scheduler::Engine;
use sbp_core::semantics::SemanticsHost;
use sbp_core::text::{parse_update, parse_value};
use sbp_core::update::{apply_all, into_buckets, BucketEntry, KeyFilter, UpdateBucket};
use sbp_core::{Configuration, ConflictPolicy, CoreUpdate, Entity, Name, Path, Update, Value, World};

fn ident() -> impl Strategy<Value = Name> + Clone {
    "[a-z][a-z0-9]{0,5}".prop_map(|s| name(&format!("x_{s}")))
}

fn value() -> impl Strategy<Value = Value> + Clone {
    let leaf = prop_oneof![
        Just(Value::Unit),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        (-1e12f64..1e12).prop_map(Value::Float),
        "[ -~\n\t\"\\\\é]{0,12}".prop_map(Value::Text),
        (any::<i32>(), any::<i32>()).prop_map(|(x, y)| Value::Coord(x.into(), y.into())),
        ident().prop_map(Value::EntityRef),
        ident().prop_map(Value::WorldRef),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop::collection::vec(inner, 0..4).prop_map(Value::List)
    })
}

fn core_update() -> impl Strategy<Value = CoreUpdate> {
    let we = (ident(), ident());
    prop_oneof![
        (we.clone(), ident(), value()).prop_map(|((world, entity), key, value)| CoreUpdate::SetData {
            world,
            entity,
            key,
            value
        }),
        (we.clone(), ident()).prop_map(|((world, entity), key)| CoreUpdate::DeleteData { world, entity, key }),
        (we.clone(), ident(), ident()).prop_map(|((world, entity), process, transition)| {
            CoreUpdate::StartProcess {
                world,
                entity,
                process,
                transition,
            }
        }),
        (we.clone(), ident()).prop_map(|((world, entity), process)| CoreUpdate::CancelProcess {
            world,
            entity,
            process
        }),
        we.clone()
            .prop_map(|(world, entity)| CoreUpdate::CreateEntity { world, entity }),
        we.clone()
            .prop_map(|(world, entity)| CoreUpdate::DeleteEntity { world, entity }),
        (ident(), proptest::option::of(ident()))
            .prop_map(|(world, copy_from)| CoreUpdate::AddWorld { world, copy_from }),
        ident().prop_map(|world| CoreUpdate::DeleteWorld { world }),
        (we.clone(), we, prop::collection::vec(ident(), 0..3)).prop_map(|((sw, se), (dw, de), keys)| {
            CoreUpdate::CopyProperties {
                src_world: sw,
                src_entity: se,
                dst_world: dw,
                dst_entity: de,
                keys: if keys.is_empty() {
                    KeyFilter::All
                } else {
                    KeyFilter::Keys(keys)
                },
            }
        }),
    ]
}

proptest! {
    #[test]
    fn value_text_round_trips(v in value()) {
        let text = v.to_string();
        prop_assert_eq!(parse_value(&text).unwrap(), v, "{}", text);
    }

    #[test]
    fn update_text_round_trips(u in core_update()) {
        let text = u.to_string();
        prop_assert_eq!(parse_update(&text).unwrap(), Update::Core(u), "{}", text);
    }

    #[test]
    fn streams_are_reproducible_and_resumable(seed: u64, iteration in 0u64..100, split in 0usize..20, lo in -50i64..50, width in 0i64..50) {
        let p = Path::property(name("w"), name("e"), name("p"));
        let draw = |s: &mut Stream| s.range_inclusive(lo, lo + width);
        let mut a = Stream::new(seed, &p, iteration);
        let full: Vec<i64> = (0..20).map(|_| draw(&mut a)).collect();
        prop_assert!(full.iter().all(|x| (lo..=lo + width).contains(x)));
        let mut b = Stream::resume(seed, &p, iteration, split as u64);
        let tail: Vec<i64> = (split..20).map(|_| draw(&mut b)).collect();
        prop_assert_eq!(&full[split..], &tail[..]);
    }

    #[test]
    fn apply_all_ignores_bucket_order_and_splitting(
        updates in prop::collection::vec((0usize..3, 0usize..3, 0u32..4, 0i64..3), 1..12),
        rotate in 0usize..12,
        policy in prop_oneof![
            Just(ConflictPolicy::LastWriterWins),
            Just(ConflictPolicy::FirstWins),
            Just(ConflictPolicy::DropConflicting),
            Just(ConflictPolicy::FailTick),
        ],
    ) {
        let mut snapshot = Configuration::new();
        let mut w = World::default();
        for e in ["a", "b"] {
            w.entities.insert(name(e), Entity::default());
        }
        snapshot.worlds.insert(name("w"), w);
        let emitters = ["w.a.p", "w.b.p", "w.c.p"];
        let keys = ["k", "m", "n"];
        let entries: Vec<BucketEntry> = updates
            .iter()
            .enumerate()
            .map(|(i, &(em, target, kind, v))| {
                let entity = name(["a", "b", "c"][target]);
                let core = match kind {
                    0 | 1 => CoreUpdate::SetData { world: name("w"), entity, key: name(keys[v as usize]), value: Value::Int(v) },
                    2 => CoreUpdate::DeleteData { world: name("w"), entity, key: name(keys[v as usize]) },
                    _ => CoreUpdate::DeleteEntity { world: name("w"), entity },
                };
                BucketEntry { emitter: Path::parse(emitters[em]).unwrap(), seq: i as u32, update: core.into() }
            })
            .collect();
        let grouped = into_buckets(entries.clone());
        let mut shuffled = grouped.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rotate % n);
        let singles: Vec<UpdateBucket> = entries
            .into_iter()
            .rev()
            .map(|e| UpdateBucket { key: e.update.core.target(), entries: vec![e] })
            .collect();
        let go = |b: &[UpdateBucket]| apply_all(snapshot.clone(), b, &snapshot, policy).map(|(c, r)| (c, r.committed));
        let base = go(&grouped);
        prop_assert_eq!(&base, &go(&shuffled));
        prop_assert_eq!(&base, &go(&singles));
        if let Ok((c, _)) = &base {
            prop_assert_eq!(c.tick, snapshot.tick + 1);
        }
    }
}

#[test]
fn engines_can_move_between_threads() {
    fn send<T: Send>() {}
    send::<Engine>();
    send::<SemanticsHost>();
    send::<Configuration>();
}
