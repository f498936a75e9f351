//! Semantics registry and the host that runs one process segment.
//!
//! A transition description names its semantics. Three kinds exist: the
//! built-in TDL interpreter, native behaviours implemented in Rust, and
//! external agents reached through an [`ExternalDriver`].

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::macros::MacroRegistry;
use crate::model::{
    resolve_path, Configuration, Cursor, Located, Path, PendingRequest, Process, Tick, TransitionDescription,
};
use crate::name::Name;
use crate::rng::Stream;
use crate::tdl::{self, ast::Program, interp, CheckOptions};
use crate::update::{CoreUpdate, Update};
use crate::value::Value;

/// What a segment produced and how the process continues.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub updates: Vec<Update>,
    pub next: Next,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Next {
    SuspendUntil { resume_tick: Tick, cursor: Cursor },
    Await { target: Path, cursor: Cursor },
    Finished { cont: bool },
}

// ---------------------------------------------------------------------------
// native behaviours

pub struct NativeCtx<'a> {
    pub snapshot: &'a Configuration,
    pub world: &'a Name,
    pub entity: &'a Name,
    pub process: &'a Name,
    /// Source text of the transition description.
    pub source: &'a str,
    pub tick: Tick,
    /// 0 on a fresh start, otherwise the step stored at the last suspension.
    pub step: u32,
    pub rng: &'a mut Stream,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NativeNext {
    Wait { ticks: Tick, step: u32 },
    Finished { cont: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeResult {
    pub updates: Vec<Update>,
    pub next: NativeNext,
}

pub trait NativeBehaviour: Send + Sync {
    fn step(&self, ctx: NativeCtx<'_>) -> Result<NativeResult, String>;
}

// ---------------------------------------------------------------------------
// external agents

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalRequest {
    /// `"{tick}:{process path}"`
    pub id: String,
    pub process: Path,
    pub transition: Name,
    pub source: Arc<str>,
    pub tick: Tick,
    /// Path text to value: the entity's own data plus whitelisted paths.
    pub view: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalResponse {
    pub id: String,
    pub updates: Vec<Update>,
    /// Suspend this many ticks before the next request; 0 finishes the
    /// process.
    pub wait: Tick,
    pub cont: bool,
}

pub trait ExternalDriver: Send {
    fn submit(&mut self, request: ExternalRequest) -> Result<(), String>;
    /// `Ok(None)` when the response has not arrived yet.
    fn poll(&mut self, id: &str) -> Result<Option<ExternalResponse>, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutPolicy {
    Cancel,
    EmptyResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalBinding {
    pub channel: String,
    pub timeout_ticks: Tick,
    pub on_timeout: TimeoutPolicy,
    /// Data paths visible to the agent besides its own entity.
    pub read_view: Vec<Path>,
}

#[derive(Clone)]
pub enum SemanticsKind {
    Tdl,
    Native(Arc<dyn NativeBehaviour>),
    External(ExternalBinding),
}

impl core::fmt::Debug for SemanticsKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SemanticsKind::Tdl => f.write_str("Tdl"),
            SemanticsKind::Native(_) => f.write_str("Native(..)"),
            SemanticsKind::External(b) => f.debug_tuple("External").field(b).finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentFault {
    #[error("unknown semantics `{0}`")]
    UnknownSemantics(Name),
    #[error("transition does not compile: {0}")]
    Compile(String),
    #[error("runtime fault: {0}")]
    Runtime(String),
    #[error("native behaviour failed: {0}")]
    Native(String),
    #[error("external agent: {0}")]
    External(String),
    #[error("cursor does not belong to this semantics")]
    CursorMismatch,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SwapError {
    #[error("process {0} does not exist")]
    ProcessMissing(Path),
    #[error("transition `{0}` does not exist")]
    TransitionMissing(Name),
    #[error("unknown semantics `{0}`")]
    UnknownSemantics(Name),
}

/// Runs segments for every semantics kind.
pub struct SemanticsHost {
    pub seed: u64,
    macros: MacroRegistry,
    registry: BTreeMap<Name, SemanticsKind>,
    drivers: BTreeMap<String, Box<dyn ExternalDriver>>,
    programs: BTreeMap<Arc<str>, Result<Arc<Program>, String>>,
}

impl SemanticsHost {
    /// A host with `tdl` registered.
    pub fn new(seed: u64) -> Self {
        let mut registry = BTreeMap::new();
        registry.insert(crate::name::name("tdl"), SemanticsKind::Tdl);
        SemanticsHost {
            seed,
            macros: MacroRegistry::default(),
            registry,
            drivers: BTreeMap::new(),
            programs: BTreeMap::new(),
        }
    }

    pub fn macros(&self) -> &MacroRegistry {
        &self.macros
    }

    pub fn define_macro(
        &mut self,
        name: Name,
        params: Vec<String>,
        body: &str,
    ) -> Result<(), crate::macros::MacroError> {
        self.macros.define(name, params, body)?;
        // cached programs were checked against the old macro table
        self.programs.clear();
        Ok(())
    }

    pub fn register(&mut self, name: Name, kind: SemanticsKind) {
        self.registry.insert(name, kind);
    }

    pub fn semantics(&self, name: &str) -> Option<&SemanticsKind> {
        self.registry.get(name)
    }

    pub fn semantics_names(&self) -> impl Iterator<Item = &Name> {
        self.registry.keys()
    }

    pub fn attach_driver(&mut self, channel: &str, driver: Box<dyn ExternalDriver>) {
        self.drivers.insert(channel.into(), driver);
    }

    /// Parses and checks a TDL source once; later calls hit the cache.
    pub fn compile(&mut self, source: &Arc<str>) -> Result<Arc<Program>, String> {
        if let Some(p) = self.programs.get(source) {
            return p.clone();
        }
        let result = compile_tdl(source, &self.macros);
        self.programs.insert(source.clone(), result.clone());
        result
    }

    pub fn run_segment(
        &mut self,
        snapshot: &Configuration,
        path: &Path,
        process: &Process,
        transition: &TransitionDescription,
        cursor: Option<&Cursor>,
    ) -> Result<Outcome, SegmentFault> {
        let kind = self
            .registry
            .get(&transition.semantics)
            .cloned()
            .ok_or_else(|| SegmentFault::UnknownSemantics(transition.semantics.clone()))?;
        let world = path.world.clone();
        let entity = path.entity.clone().expect("process paths have three segments");
        let tick = snapshot.tick;
        match kind {
            SemanticsKind::Tdl => {
                let draws = match cursor {
                    None => 0,
                    Some(Cursor::Tdl { draws, .. }) => *draws,
                    Some(_) => return Err(SegmentFault::CursorMismatch),
                };
                let program = self.compile(&transition.source).map_err(SegmentFault::Compile)?;
                let mut rng = Stream::resume(self.seed, path, process.iteration, draws);
                let mut ctx = interp::Ctx {
                    snapshot,
                    world,
                    entity,
                    tick,
                    rng: Some(&mut rng),
                    params: &[],
                };
                interp::run_segment(&program, &mut ctx, cursor).map_err(|f| SegmentFault::Runtime(f.message))
            }
            SemanticsKind::Native(behaviour) => {
                let (step, draws) = match cursor {
                    None => (0, 0),
                    Some(Cursor::Native { step, draws }) => (*step, *draws),
                    Some(_) => return Err(SegmentFault::CursorMismatch),
                };
                let mut rng = Stream::resume(self.seed, path, process.iteration, draws);
                let process_name = path.property.clone().expect("process paths have three segments");
                let result = behaviour
                    .step(NativeCtx {
                        snapshot,
                        world: &world,
                        entity: &entity,
                        process: &process_name,
                        source: &transition.source,
                        tick,
                        step,
                        rng: &mut rng,
                    })
                    .map_err(SegmentFault::Native)?;
                let next = match result.next {
                    NativeNext::Wait { ticks, step } => Next::SuspendUntil {
                        resume_tick: tick + ticks.max(1),
                        cursor: Cursor::Native {
                            step,
                            draws: rng.draws(),
                        },
                    },
                    NativeNext::Finished { cont } => Next::Finished { cont },
                };
                Ok(Outcome {
                    updates: result.updates,
                    next,
                })
            }
            SemanticsKind::External(binding) => self.run_external(snapshot, path, transition, cursor, &binding),
        }
    }

    fn run_external(
        &mut self,
        snapshot: &Configuration,
        path: &Path,
        transition: &TransitionDescription,
        cursor: Option<&Cursor>,
        binding: &ExternalBinding,
    ) -> Result<Outcome, SegmentFault> {
        let tick = snapshot.tick;
        let pending = match cursor {
            None => None,
            Some(Cursor::External { pending }) => pending.clone(),
            Some(_) => return Err(SegmentFault::CursorMismatch),
        };
        let driver = self
            .drivers
            .get_mut(&binding.channel)
            .ok_or_else(|| SegmentFault::External(format!("no driver attached to channel `{}`", binding.channel)))?;
        let pending = match pending {
            Some(p) => p,
            None => {
                let request = external_request(snapshot, path, transition, binding);
                let id = request.id.clone();
                driver.submit(request).map_err(SegmentFault::External)?;
                PendingRequest {
                    id,
                    deadline: tick + binding.timeout_ticks,
                }
            }
        };
        match driver.poll(&pending.id).map_err(SegmentFault::External)? {
            Some(resp) => {
                if resp.id != pending.id {
                    return Err(SegmentFault::External(format!(
                        "response `{}` does not answer request `{}`",
                        resp.id, pending.id
                    )));
                }
                let next = if resp.wait > 0 {
                    Next::SuspendUntil {
                        resume_tick: tick + resp.wait,
                        cursor: Cursor::External { pending: None },
                    }
                } else {
                    Next::Finished { cont: resp.cont }
                };
                Ok(Outcome {
                    updates: resp.updates,
                    next,
                })
            }
            None if tick >= pending.deadline => match binding.on_timeout {
                TimeoutPolicy::Cancel => Err(SegmentFault::External(format!("request `{}` timed out", pending.id))),
                TimeoutPolicy::EmptyResult => Ok(Outcome {
                    updates: Vec::new(),
                    next: Next::Finished { cont: true },
                }),
            },
            None => Ok(Outcome {
                updates: Vec::new(),
                next: Next::SuspendUntil {
                    resume_tick: tick + 1,
                    cursor: Cursor::External { pending: Some(pending) },
                },
            }),
        }
    }

    /// Updates that move a running process onto a copy of its transition
    /// interpreted by `semantics`. Applying them restarts the process under
    /// the new semantics from the next tick.
    pub fn swap_control(
        &self,
        config: &Configuration,
        process: &Path,
        semantics: &Name,
    ) -> Result<Vec<Update>, SwapError> {
        if !self.registry.contains_key(semantics) {
            return Err(SwapError::UnknownSemantics(semantics.clone()));
        }
        let (Some(entity_name), Some(pname)) = (&process.entity, &process.property) else {
            return Err(SwapError::ProcessMissing(process.clone()));
        };
        let entity = config
            .entity(&process.world, entity_name)
            .ok_or_else(|| SwapError::ProcessMissing(process.clone()))?;
        let p = entity
            .processes
            .get(pname)
            .ok_or_else(|| SwapError::ProcessMissing(process.clone()))?;
        let t = entity
            .transitions
            .get(&p.transition)
            .ok_or_else(|| SwapError::TransitionMissing(p.transition.clone()))?;
        if &t.semantics == semantics {
            return Ok(Vec::new());
        }
        let copy_name = Name::new(&format!("{}_{}", t.name, semantics)).expect("joined names are valid");
        let copy = TransitionDescription {
            name: copy_name.clone(),
            semantics: semantics.clone(),
            source: t.source.clone(),
        };
        let (world, entity) = (process.world.clone(), entity_name.clone());
        Ok(alloc::vec![
            Update::Core(CoreUpdate::SetTransition {
                world: world.clone(),
                entity: entity.clone(),
                key: copy_name.clone(),
                transition: copy,
            }),
            Update::Core(CoreUpdate::RebindProcess {
                world,
                entity,
                process: pname.clone(),
                transition: copy_name,
            }),
        ])
    }
}

pub fn compile_tdl(source: &str, macros: &MacroRegistry) -> Result<Arc<Program>, String> {
    let program = tdl::parse_program(source).map_err(|ds| render_all(source, &ds))?;
    let lookup = |n: &str| macros.arity(n);
    let diags = tdl::check(
        &program,
        CheckOptions {
            macro_params: None,
            macros: Some(&lookup),
        },
    );
    let errors: Vec<_> = diags
        .into_iter()
        .filter(|d| d.severity == crate::model::Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(Arc::new(program))
    } else {
        Err(render_all(source, &errors))
    }
}

pub(crate) fn render_all(source: &str, diags: &[tdl::Diagnostic]) -> String {
    diags.iter().map(|d| d.render(source)).collect::<Vec<_>>().join("; ")
}

fn external_request(
    snapshot: &Configuration,
    path: &Path,
    transition: &TransitionDescription,
    binding: &ExternalBinding,
) -> ExternalRequest {
    let mut view = BTreeMap::new();
    if let (Some(e), Some(ent)) = (
        &path.entity,
        path.entity.as_ref().and_then(|e| snapshot.entity(&path.world, e)),
    ) {
        for (k, v) in &ent.data {
            view.insert(
                Path::property(path.world.clone(), e.clone(), k.clone()).to_string(),
                v.clone(),
            );
        }
    }
    for p in &binding.read_view {
        if let Ok(Located::Data(v)) = resolve_path(snapshot, p) {
            view.insert(p.to_string(), v.clone());
        }
    }
    ExternalRequest {
        id: format!("{}:{}", snapshot.tick, path),
        process: path.clone(),
        transition: transition.name.clone(),
        source: transition.source.clone(),
        tick: snapshot.tick,
        view,
    }
}
