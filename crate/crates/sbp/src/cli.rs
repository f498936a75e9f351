//! The `sbp` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 validation or schema
//! failure, 3 run failure (aborted tick, watchdog, driver setup), 4 replay
//! hash mismatch.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use sbp_core::scheduler::{Engine, StopReason};
use sbp_core::trace::{hex, NullSink, TraceSink};
use sbp_core::{resolve_path, ConflictPolicy, Located, Path, ProcessState, Severity};

use crate::driver::{self, Script};
use crate::fixtures;
use crate::scenario::{self, Scenario};
use crate::trace::{Counting, JsonlSink};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUN_FAILED: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "sbp",
    version,
    about = "Run, trace and replay simulation-based programming scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario or resume a snapshot.
    Run {
        scenario: PathBuf,
        /// Root seed; defaults to the document's seed, else 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        ticks: u64,
        /// last_writer_wins, first_wins, drop_conflicting or fail_tick.
        #[arg(long)]
        policy: Option<String>,
        /// Write the JSON-lines trace here. Defaults to a file under
        /// $SBP_TRACE_DIR when that is set.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write a snapshot every N ticks.
        #[arg(long)]
        snapshot_every: Option<u64>,
        #[arg(long, default_value = ".")]
        snapshot_dir: PathBuf,
        /// Write the final state as a snapshot.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Connect every external binding to this channel (`stdio` or
        /// `tcp:<host>:<port>`) instead of its own.
        #[arg(long)]
        external: Option<String>,
        /// Abort the run after this many seconds of wall-clock time.
        #[arg(long)]
        wallclock_limit: Option<f64>,
    },
    /// Check a scenario or snapshot and print every diagnostic.
    Validate { scenario: PathBuf },
    /// Print the item at a path, e.g. `w.ch1.loc`.
    Inspect { snapshot: PathBuf, path: String },
    /// Run and compare the replay hash with an expected value.
    ReplayCheck {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        ticks: u64,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        expected: String,
    },
    /// Act as an external agent on stdio, answering from a response script.
    Drive {
        #[arg(long)]
        script: PathBuf,
    },
    /// Write the bundled example scenarios.
    GenerateFixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

struct Failure(i32, String);

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Failure(EXIT_USAGE, m.into())
    }
}

type Res<T = ()> = Result<T, Failure>;

/// Runs the command line and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure(code, message)) => {
            if !message.is_empty() {
                eprintln!("sbp: {message}");
            }
            code
        }
    }
}

fn dispatch(cmd: Command) -> Res {
    match cmd {
        Command::Run {
            scenario,
            seed,
            ticks,
            policy,
            trace,
            snapshot_every,
            snapshot_dir,
            save,
            external,
            wallclock_limit,
        } => run(RunArgs {
            scenario,
            seed,
            ticks,
            policy,
            trace,
            snapshot_every,
            snapshot_dir,
            save,
            external,
            wallclock_limit,
        }),
        Command::Validate { scenario } => validate(&scenario),
        Command::Inspect { snapshot, path } => inspect(&snapshot, &path),
        Command::ReplayCheck {
            scenario,
            seed,
            ticks,
            policy,
            expected,
        } => replay_check(&scenario, seed, ticks, policy.as_deref(), &expected),
        Command::Drive { script } => drive(&script),
        Command::GenerateFixtures { out } => generate(&out),
    }
}

fn read(path: &FsPath) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load(path: &FsPath) -> Res<Scenario> {
    scenario::load(&read(path)?).map_err(|e| Failure(EXIT_INVALID, format!("{}:\n{e}", path.display())))
}

fn policy(s: Option<&str>) -> Res<Option<ConflictPolicy>> {
    match s {
        None => Ok(None),
        Some(p) => ConflictPolicy::parse(p)
            .map(Some)
            .ok_or_else(|| Failure::usage(format!("unknown policy `{p}`"))),
    }
}

fn engine(s: &Scenario, seed: Option<u64>, policy: Option<ConflictPolicy>, external: Option<&str>) -> Res<Engine> {
    let mut engine = s.engine(seed).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
    if let Some(p) = policy {
        engine.policy = p;
    }
    for channel in s.external_channels() {
        let target = external.unwrap_or(&channel);
        let d = driver::connect(target).map_err(|e| Failure(EXIT_RUN_FAILED, format!("channel `{target}`: {e}")))?;
        engine.host.attach_driver(&channel, d);
    }
    Ok(engine)
}

struct RunArgs {
    scenario: PathBuf,
    seed: Option<u64>,
    ticks: u64,
    policy: Option<String>,
    trace: Option<PathBuf>,
    snapshot_every: Option<u64>,
    snapshot_dir: PathBuf,
    save: Option<PathBuf>,
    external: Option<String>,
    wallclock_limit: Option<f64>,
}

fn write_file(path: &FsPath, text: &str) -> Res {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn run(a: RunArgs) -> Res {
    let s = load(&a.scenario)?;
    let policy = policy(a.policy.as_deref())?;
    let mut engine = engine(&s, a.seed, policy, a.external.as_deref())?;
    let trace_path = a.trace.clone().or_else(|| {
        let dir = std::env::var_os("SBP_TRACE_DIR")?;
        let stem = a
            .scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Some(PathBuf::from(dir).join(format!("{stem}-seed{}.trace", engine.host.seed)))
    });
    let mut file_sink = match &trace_path {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            Some(JsonlSink::new(io::BufWriter::new(f)))
        }
        None => None,
    };
    let mut null = NullSink;
    let inner: &mut dyn TraceSink = match file_sink.as_mut() {
        Some(s) => s,
        None => &mut null,
    };
    let mut sink = Counting::new(inner);
    let limit = a.wallclock_limit.map(Duration::from_secs_f64);
    let started = Instant::now();
    let mut ran = 0;
    let mut stop = StopReason::TickLimit;
    while ran < a.ticks {
        if limit.is_some_and(|l| started.elapsed() > l) {
            return Err(Failure(
                EXIT_RUN_FAILED,
                format!("wall-clock limit reached after {ran} ticks"),
            ));
        }
        let report = engine.step(&mut sink);
        if let Some(aborted) = report.aborted {
            stop = StopReason::Aborted(aborted);
            break;
        }
        ran += 1;
        if let Some(n) = a.snapshot_every.filter(|n| *n > 0) {
            if engine.tick() % n == 0 {
                let p = a.snapshot_dir.join(format!("tick{:08}.snapshot", engine.tick()));
                write_file(&p, &scenario::save(&s.snapshot_of(&engine)))?;
            }
        }
        if engine.config.process_count() == 0 {
            stop = StopReason::Quiescent;
            break;
        }
    }
    let events = sink.total();
    if let Some(f) = file_sink {
        f.finish().map_err(|e| Failure::usage(format!("trace: {e}")))?;
    }
    if let Some(p) = &a.save {
        write_file(p, &scenario::save(&s.snapshot_of(&engine)))?;
    }
    let stop_text = match &stop {
        StopReason::TickLimit => "tick_limit".to_string(),
        StopReason::Quiescent => "quiescent".to_string(),
        StopReason::Aborted(ab) => format!("aborted at tick {} ({} conflicts)", engine.tick(), ab.conflicts.len()),
    };
    let summary = format!(
        "ticks: {ran}\nevents: {events}\nreplay_hash: {}\nstop: {stop_text}\n",
        hex(&engine.replay_hash())
    );
    // With the protocol on stdout the summary goes to stderr.
    if a.external.as_deref() == Some("stdio") {
        eprint!("{summary}");
    } else {
        print!("{summary}");
    }
    match stop {
        StopReason::Aborted(_) => Err(Failure(EXIT_RUN_FAILED, "tick aborted".into())),
        _ => Ok(()),
    }
}

fn validate(path: &FsPath) -> Res {
    let (_, problems) = scenario::check(&read(path)?);
    for p in &problems {
        println!("{}: {p}", path.display());
    }
    let errors = problems.iter().filter(|p| p.severity() == Severity::Error).count();
    if errors > 0 {
        return Err(Failure(EXIT_INVALID, format!("{errors} error(s)")));
    }
    println!("{}: ok", path.display());
    Ok(())
}

fn describe_state(s: &ProcessState) -> String {
    match s {
        ProcessState::Ready => "ready".into(),
        ProcessState::Suspended { resume_tick, .. } => format!("suspended until {resume_tick}"),
        ProcessState::Awaiting { target, .. } => format!("awaiting {target}"),
        ProcessState::FinishedPending { .. } => "finished".into(),
    }
}

fn inspect(file: &FsPath, path: &str) -> Res {
    let s = load(file)?;
    let p = Path::parse(path).map_err(|e| Failure::usage(format!("path `{path}`: {e}")))?;
    let located = resolve_path(&s.config, &p).map_err(|e| Failure(EXIT_INVALID, format!("{path}: {e}")))?;
    let mut out = String::new();
    match located {
        Located::Data(v) => out = format!("{v}\n"),
        Located::World(w) => {
            for n in w.entities.keys() {
                out += &format!("{n}\n");
            }
        }
        Located::Entity(e) => {
            for (k, v) in &e.data {
                out += &format!("{k} = {v}\n");
            }
            for (k, t) in &e.transitions {
                out += &format!("{k}: transition ({})\n", t.semantics);
            }
            for (k, p) in &e.processes {
                out += &format!("{k}: process {} {}\n", p.transition, describe_state(&p.state));
            }
        }
        Located::Transition(t) => out = format!("semantics = {}\n{}", t.semantics, t.source),
        Located::Process(p) => {
            out = format!(
                "transition = {}\nbegin_tick = {}\niteration = {}\nstate = {}\n",
                p.transition,
                p.begin_tick,
                p.iteration,
                describe_state(&p.state)
            )
        }
    }
    print!("{out}");
    Ok(())
}

fn replay_check(path: &FsPath, seed: Option<u64>, ticks: u64, pol: Option<&str>, expected: &str) -> Res {
    let s = load(path)?;
    let mut engine = engine(&s, seed, policy(pol)?, None)?;
    engine.run(ticks, &mut NullSink);
    let got = hex(&engine.replay_hash());
    if got.eq_ignore_ascii_case(expected.trim()) {
        println!("match: {got}");
        Ok(())
    } else {
        println!("mismatch: expected {}, got {got}", expected.trim());
        Err(Failure(EXIT_MISMATCH, String::new()))
    }
}

fn drive(script: &FsPath) -> Res {
    let script = Script::parse(&read(script)?).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    driver::serve(BufReader::new(stdin.lock()), stdout.lock(), |r| script.respond(&r))
        .map_err(|e| Failure(EXIT_RUN_FAILED, e))?;
    Ok(())
}

fn generate(out: &FsPath) -> Res {
    fs::create_dir_all(out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    let mut stdout = io::stdout();
    for (file, s) in fixtures::all() {
        let p = out.join(file);
        write_file(&p, &scenario::save(&s))?;
        let _ = writeln!(stdout, "wrote {}", p.display());
    }
    Ok(())
}
