use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sbp::scenario::{self, Scenario};
use sbp_core::name::name;
use sbp_core::{Entity, Value, World};

fn sbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbp"))
        .args(args)
        .env_remove("SBP_TRACE_DIR")
        .output()
        .expect("run sbp")
}

fn fixture(file: &str) -> String {
    format!("{}/fixtures/{file}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, file: &str, text: &str) -> PathBuf {
    let p = dir.join(file);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_accepts_every_fixture() {
    for f in ["chicken", "barker", "village", "monkeys_guarded", "monkeys_unguarded"] {
        let o = sbp(&["validate", &fixture(&format!("{f}.scenario"))]);
        assert_eq!(o.status.code(), Some(0), "{f}: {}", stdout(&o));
        assert!(stdout(&o).trim_end().ends_with(": ok"));
    }
}

#[test]
fn validate_reports_broken_sources_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("monkeys_guarded.scenario"))
        .unwrap()
        .replace("wait 1\n", "wait\n");
    let p = write(dir.path(), "broken.scenario", &text);
    let o = sbp(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("grab"), "{}", stdout(&o));
}

#[test]
fn inspect_prints_the_canonical_value() {
    let mut s = Scenario::default();
    let mut ch = Entity::default();
    ch.data.insert(name("loc"), Value::Coord(2, 5));
    let mut w = World::default();
    w.entities.insert(name("ch"), ch);
    s.config.worlds.insert(name("w"), w);
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "snap.snapshot", &scenario::save(&s));
    let o = sbp(&["inspect", p.to_str().unwrap(), "w.ch.loc"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "(2,5)\n");
    let o = sbp(&["inspect", p.to_str().unwrap(), "w.nobody.loc"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_trace_and_snapshots_that_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let trace = d.join("run.trace");
    let save = d.join("end.snapshot");
    let o = sbp(&[
        "run",
        &fixture("barker.scenario"),
        "--ticks",
        "80",
        "--trace",
        trace.to_str().unwrap(),
        "--snapshot-every",
        "40",
        "--snapshot-dir",
        d.to_str().unwrap(),
        "--save",
        save.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    let hash = summary
        .lines()
        .find_map(|l| l.strip_prefix("replay_hash: "))
        .unwrap_or_else(|| panic!("no hash in {summary}"))
        .to_string();

    let lines = std::fs::read_to_string(&trace).unwrap();
    let events: Vec<_> = lines.lines().map(|l| sbp::trace::parse_line(l).unwrap()).collect();
    let closes = events.iter().filter(|e| e.kind() == "tick_close").count();
    assert_eq!(closes, 80);
    assert!(lines.contains(r#""update":"set_data w_ada.barker.offers=\"blood pudding\"""#));

    for tick in [40, 80] {
        assert!(d.join(format!("tick{tick:08}.snapshot")).exists(), "tick {tick}");
    }
    let o = sbp(&[
        "replay-check",
        &fixture("barker.scenario"),
        "--ticks",
        "80",
        "--expected",
        &hash,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = sbp(&[
        "replay-check",
        &fixture("barker.scenario"),
        "--ticks",
        "79",
        "--expected",
        &hash,
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).starts_with("mismatch"));

    let o = sbp(&["inspect", save.to_str().unwrap(), "w_ada.barker.offers"]);
    assert_eq!(stdout(&o), "\"vegetable curry\"\n");
}

#[test]
fn aborted_ticks_exit_3() {
    let f = fixture("monkeys_unguarded.scenario");
    let o = sbp(&["run", &f, "--ticks", "10", "--policy", "fail_tick"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let o = sbp(&["run", &f, "--ticks", "10"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sbp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sbp(&["run", "/nonexistent/x.scenario"]).status.code(), Some(1));
    let o = sbp(&["run", &fixture("chicken.scenario"), "--policy", "coin_flip"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generated_fixtures_match_the_shipped_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    let o = sbp(&["generate-fixtures", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for (file, _) in sbp::fixtures::all() {
        let fresh = std::fs::read_to_string(out.join(file)).unwrap();
        let shipped = std::fs::read_to_string(fixture(file)).unwrap();
        assert_eq!(fresh, shipped, "{file} is stale; rerun generate-fixtures");
    }
}
