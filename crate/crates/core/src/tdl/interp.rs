//! Segment-at-a-time evaluation of TDL programs.
//!
//! A segment runs from the resume point to the next `wait`, `await` or
//! `return` (or the end of the body). All reads go to the tick-open
//! snapshot. When a segment suspends, the resume position and the bindings
//! in scope are stored in a [`Cursor::Tdl`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ast::*;
use crate::model::{Configuration, Cursor, Entity, Path, Tick};
use crate::name::Name;
use crate::rng::Stream;
use crate::semantics::{Next, Outcome};
use crate::update::{order_values, values_equal, CompareOp, CoreUpdate, Guard, KeyFilter, Update};
use crate::value::{Datum, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct RuntimeFault {
    pub message: String,
    pub span: Span,
}

/// Evaluation context of one segment.
pub struct Ctx<'a> {
    pub snapshot: &'a Configuration,
    pub world: Name,
    pub entity: Name,
    pub tick: Tick,
    /// `None` when random draws are not allowed (macro bodies).
    pub rng: Option<&'a mut Stream>,
    pub params: &'a [(String, Value)],
}

enum Flow {
    Next,
    Wait(Tick, Vec<u32>),
    Await(Path, Vec<u32>),
    Return(bool, Vec<Update>),
}

fn prefixed(mut path: Vec<u32>, idx: usize, branch: u32) -> Vec<u32> {
    path.splice(0..0, [idx as u32, branch]);
    path
}

fn lets_before(stmts: &[Stmt], idx: usize) -> usize {
    stmts[..idx.min(stmts.len())]
        .iter()
        .map(|s| match &s.kind {
            StmtKind::Let(p, _) => p.names().len(),
            _ => 0,
        })
        .sum()
}

type R<T> = Result<T, RuntimeFault>;

struct Interp<'c, 'a> {
    ctx: &'c mut Ctx<'a>,
    env: Vec<(String, Datum)>,
    emitted: Vec<Update>,
}

/// Runs one segment of `program`. `cursor` is `None` for a fresh start.
pub fn run_segment(program: &Program, ctx: &mut Ctx<'_>, cursor: Option<&Cursor>) -> R<Outcome> {
    let (resume, env) = match cursor {
        None => (None, Vec::new()),
        Some(Cursor::Tdl { resume, bindings, .. }) => (Some(resume.as_slice()), bindings.clone()),
        Some(other) => {
            return Err(RuntimeFault {
                message: format!("cannot resume a TDL program from {other:?}"),
                span: Span::default(),
            })
        }
    };
    let mut it = Interp {
        ctx,
        env,
        emitted: Vec::new(),
    };
    let flow = it.block(&program.body, resume, 0)?;
    let draws = it.ctx.rng.as_ref().map_or(0, |r| r.draws());
    let mut updates = core::mem::take(&mut it.emitted);
    let next = match flow {
        Flow::Next => Next::Finished { cont: true },
        Flow::Return(stop, mut returned) => {
            updates.append(&mut returned);
            Next::Finished { cont: !stop }
        }
        Flow::Wait(delay, resume) => Next::SuspendUntil {
            resume_tick: it.ctx.tick + delay,
            cursor: Cursor::Tdl {
                resume,
                bindings: it.env,
                draws,
            },
        },
        Flow::Await(target, resume) => Next::Await {
            target,
            cursor: Cursor::Tdl {
                resume,
                bindings: it.env,
                draws,
            },
        },
    };
    Ok(Outcome { updates, next })
}

fn fault<T>(span: Span, message: impl Into<String>) -> R<T> {
    Err(RuntimeFault {
        message: message.into(),
        span,
    })
}

fn to_name(span: Span, s: &str) -> R<Name> {
    Name::new(s).or_else(|e| fault(span, format!("invalid name {s:?}: {e}")))
}

fn compare_op(op: BinOp) -> Option<CompareOp> {
    Some(match op {
        BinOp::Ne => CompareOp::Ne,
        BinOp::Lt => CompareOp::Lt,
        BinOp::Le => CompareOp::Le,
        BinOp::Gt => CompareOp::Gt,
        BinOp::Ge => CompareOp::Ge,
        _ => return None,
    })
}

/// Where a place expression points.
enum Place {
    Property(Name, Name, Name),
    /// `world.name`, used by `create_entity` and `exists`.
    Entity(Name, Name),
}

impl<'a> Interp<'_, 'a> {
    fn datum_eq(&self, a: &Datum, b: &Datum) -> bool {
        match (a, b) {
            (Datum::Value(x), Datum::Value(y)) => values_equal(x, y),
            (Datum::Entity { world: w1, entity: e1 }, Datum::Entity { world: w2, entity: e2 }) => w1 == w2 && e1 == e2,
            (Datum::Entity { entity, .. }, Datum::Value(Value::EntityRef(n)))
            | (Datum::Value(Value::EntityRef(n)), Datum::Entity { entity, .. }) => entity == n,
            _ => false,
        }
    }

    fn located(&self, v: Value) -> Datum {
        match v {
            Value::EntityRef(n) => Datum::Entity {
                world: self.ctx.world.clone(),
                entity: n,
            },
            v => Datum::Value(v),
        }
    }

    // -- statements --------------------------------------------------------

    fn block(&mut self, stmts: &[Stmt], resume: Option<&[u32]>, mark: usize) -> R<Flow> {
        let mut start = 0;
        if let Some(path) = resume {
            let idx = *path.first().unwrap_or(&0) as usize;
            if path.len() > 1 {
                let Some(stmt) = stmts.get(idx) else {
                    return fault(Span::default(), "corrupt resume position");
                };
                let inner_mark = mark + lets_before(stmts, idx);
                match self.resume_into(stmt, idx, path[1], &path[2..], inner_mark)? {
                    Flow::Next => {}
                    other => return Ok(other),
                }
                start = idx + 1;
            } else {
                start = idx;
            }
        }
        for (i, s) in stmts.iter().enumerate().skip(start) {
            match self.stmt(s, i)? {
                Flow::Next => {}
                other => return Ok(other),
            }
        }
        self.env.truncate(mark);
        Ok(Flow::Next)
    }

    fn branch(&mut self, body: &[Stmt], resume: Option<&[u32]>, idx: usize, branch: u32, mark: usize) -> R<Flow> {
        Ok(match self.block(body, resume, mark)? {
            Flow::Wait(d, p) => Flow::Wait(d, prefixed(p, idx, branch)),
            Flow::Await(t, p) => Flow::Await(t, prefixed(p, idx, branch)),
            other => other,
        })
    }

    fn resume_into(&mut self, stmt: &Stmt, idx: usize, branch: u32, inner: &[u32], mark: usize) -> R<Flow> {
        let corrupt = || fault(stmt.span, "corrupt resume position");
        match &stmt.kind {
            StmtKind::If { then, otherwise, .. } => match (branch, otherwise) {
                (0, _) => self.branch(then, Some(inner), idx, 0, mark),
                (1, Some(b)) => self.branch(b, Some(inner), idx, 1, mark),
                _ => corrupt(),
            },
            StmtKind::Switch { cases, default, .. } => {
                let b = branch as usize;
                if b < cases.len() {
                    self.branch(&cases[b].body, Some(inner), idx, branch, mark)
                } else if let (true, Some(d)) = (b == cases.len(), default) {
                    self.branch(d, Some(inner), idx, branch, mark)
                } else {
                    corrupt()
                }
            }
            StmtKind::Select { body, otherwise, .. } => match (branch, otherwise) {
                (0, _) => {
                    let flow = self.branch(body, Some(inner), idx, 0, mark + 1)?;
                    if matches!(flow, Flow::Next) {
                        self.env.truncate(mark);
                    }
                    Ok(flow)
                }
                (1, Some(b)) => self.branch(b, Some(inner), idx, 1, mark),
                _ => corrupt(),
            },
            _ => corrupt(),
        }
    }

    fn stmt(&mut self, s: &Stmt, idx: usize) -> R<Flow> {
        match &s.kind {
            StmtKind::Wait(e) => {
                let d = match self.value(e)? {
                    Value::Int(d) => d,
                    other => return fault(e.span, format!("`wait` needs an int, got {}", other.kind())),
                };
                Ok(Flow::Wait(d.max(1) as Tick, alloc::vec![idx as u32 + 1]))
            }
            StmtKind::Let(pat, e) => {
                let v = self.eval(e)?;
                match pat {
                    Pattern::Name(n) => self.env.push((n.clone(), v)),
                    Pattern::Pair(a, b) => match v {
                        Datum::Value(Value::Coord(x, y)) => {
                            self.env.push((a.clone(), Datum::Value(Value::Int(x))));
                            self.env.push((b.clone(), Datum::Value(Value::Int(y))));
                        }
                        other => return fault(e.span, format!("cannot destructure {other} as a pair")),
                    },
                }
                Ok(Flow::Next)
            }
            StmtKind::If { cond, then, otherwise } => {
                let mark = self.env.len();
                if self.truth(cond)? {
                    self.branch(then, None, idx, 0, mark)
                } else if let Some(b) = otherwise {
                    self.branch(b, None, idx, 1, mark)
                } else {
                    Ok(Flow::Next)
                }
            }
            StmtKind::Switch {
                scrutinee,
                cases,
                default,
            } => {
                let v = self.eval(scrutinee)?;
                let mark = self.env.len();
                for (i, case) in cases.iter().enumerate() {
                    let c = self.eval(&case.value)?;
                    if self.datum_eq(&v, &c) {
                        return self.branch(&case.body, None, idx, i as u32, mark);
                    }
                }
                match default {
                    Some(d) => self.branch(d, None, idx, cases.len() as u32, mark),
                    None => Ok(Flow::Next),
                }
            }
            StmtKind::Select {
                binder,
                domain,
                filter,
                minimizing,
                body,
                otherwise,
            } => {
                let world = self.world_of(domain)?;
                let snapshot = self.ctx.snapshot;
                let Some(w) = snapshot.worlds.get(&world) else {
                    return fault(domain.span, format!("world `{world}` does not exist"));
                };
                let mark = self.env.len();
                let mut best: Option<(Datum, Option<Value>)> = None;
                for name in w.entities.keys() {
                    let cand = Datum::Entity {
                        world: world.clone(),
                        entity: name.clone(),
                    };
                    self.env.push((binder.clone(), cand.clone()));
                    let ok = match filter {
                        Some(f) => self.truth(f)?,
                        None => true,
                    };
                    let key = match (ok, minimizing) {
                        (true, Some(m)) => Some(self.value(m)?),
                        _ => None,
                    };
                    self.env.truncate(mark);
                    if !ok {
                        continue;
                    }
                    match (&best, key) {
                        (None, key) => best = Some((cand, key)),
                        (Some((_, Some(bk))), Some(k)) => match order_values(&k, bk) {
                            Some(core::cmp::Ordering::Less) => best = Some((cand, Some(k))),
                            Some(_) => {}
                            None => {
                                return fault(
                                    minimizing.as_ref().map_or(s.span, |m| m.span),
                                    "`minimizing` needs numbers",
                                )
                            }
                        },
                        (Some(_), _) => {
                            if minimizing.is_none() {
                                break;
                            }
                        }
                    }
                }
                match best {
                    Some((chosen, _)) => {
                        self.env.push((binder.clone(), chosen));
                        let flow = self.branch(body, None, idx, 0, mark + 1)?;
                        if matches!(flow, Flow::Next) {
                            self.env.truncate(mark);
                        }
                        Ok(flow)
                    }
                    None => match otherwise {
                        Some(b) => self.branch(b, None, idx, 1, mark),
                        None => Ok(Flow::Next),
                    },
                }
            }
            StmtKind::Return { stop, updates } => {
                let mut out = Vec::with_capacity(updates.len());
                for u in updates {
                    out.push(self.update(u)?);
                }
                Ok(Flow::Return(*stop, out))
            }
            StmtKind::Emit(updates) => {
                for u in updates {
                    let u = self.update(u)?;
                    self.emitted.push(u);
                }
                Ok(Flow::Next)
            }
            StmtKind::Await(e) => {
                let target = match self.place(e)? {
                    Place::Property(w, en, p) => Path::property(w, en, p),
                    Place::Entity(..) => return fault(e.span, "`await` needs a process place"),
                };
                Ok(Flow::Await(target, alloc::vec![idx as u32 + 1]))
            }
        }
    }

    // -- places and updates ------------------------------------------------

    fn slot(&mut self, slot: &NameSlot, span: Span) -> R<Name> {
        match slot {
            NameSlot::Lit(s) => to_name(span, s),
            NameSlot::Dyn(e) => match self.value(e)? {
                Value::Text(s) => to_name(e.span, &s),
                other => fault(e.span, format!("a property name must be text, got {}", other.kind())),
            },
        }
    }

    fn entity_of(&self, d: &Datum, span: Span) -> R<(Name, Name)> {
        match d {
            Datum::Entity { world, entity } => Ok((world.clone(), entity.clone())),
            Datum::Value(Value::EntityRef(n)) => Ok((self.ctx.world.clone(), n.clone())),
            other => fault(span, format!("expected an entity, got {other}")),
        }
    }

    fn world_of(&mut self, e: &Expr) -> R<Name> {
        match self.eval(e)? {
            Datum::Value(Value::WorldRef(w)) => Ok(w),
            Datum::Value(Value::Text(s)) => to_name(e.span, &s),
            other => fault(e.span, format!("expected a world, got {other}")),
        }
    }

    fn place(&mut self, e: &Expr) -> R<Place> {
        let Some((base, slot)) = e.as_place() else {
            return fault(e.span, "expected a place");
        };
        let key = self.slot(slot, e.span)?;
        match self.eval(base)? {
            Datum::Value(Value::WorldRef(w)) => Ok(Place::Entity(w, key)),
            d => {
                let (w, en) = self.entity_of(&d, base.span)?;
                Ok(Place::Property(w, en, key))
            }
        }
    }

    fn property(&mut self, e: &Expr) -> R<(Name, Name, Name)> {
        match self.place(e)? {
            Place::Property(w, en, k) => Ok((w, en, k)),
            Place::Entity(..) => fault(e.span, "expected an entity property, got a world member"),
        }
    }

    fn guard_path(&mut self, e: &Expr) -> R<Path> {
        Ok(match self.place(e)? {
            Place::Property(w, en, k) => Path::property(w, en, k),
            Place::Entity(w, en) => Path::entity(w, en),
        })
    }

    fn update(&mut self, u: &UpdateExpr) -> R<Update> {
        Ok(match u {
            UpdateExpr::Guarded(g, inner) => {
                let guard = match g {
                    GuardExpr::Exists(p) => Guard::Exists(self.guard_path(p)?),
                    GuardExpr::NotExists(p) => Guard::NotExists(self.guard_path(p)?),
                    GuardExpr::Compare(op, p, v) => {
                        let path = self.guard_path(p)?;
                        let v = self.eval(v)?.into_value();
                        match compare_op(*op) {
                            Some(c) => Guard::Compare(path, c, v),
                            None => Guard::Equals(path, v),
                        }
                    }
                };
                match self.update(inner)? {
                    Update::Core(inner) => Update::Guarded { guard, inner },
                    _ => unreachable!("the parser only allows core updates under a guard"),
                }
            }
            UpdateExpr::Macro { name, args, span } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a)?.into_value());
                }
                Update::Macro {
                    name: to_name(*span, name)?,
                    args: vals,
                }
            }
            core => Update::Core(self.core_update(core)?),
        })
    }

    fn core_update(&mut self, u: &UpdateExpr) -> R<CoreUpdate> {
        Ok(match u {
            UpdateExpr::SetData(p, v) => {
                let (world, entity, key) = self.property(p)?;
                let value = self.eval(v)?.into_value();
                CoreUpdate::SetData {
                    world,
                    entity,
                    key,
                    value,
                }
            }
            UpdateExpr::DeleteData(p) => {
                let (world, entity, key) = self.property(p)?;
                CoreUpdate::DeleteData { world, entity, key }
            }
            UpdateExpr::SetTransition {
                place,
                semantics,
                source,
            } => {
                let (world, entity, key) = self.property(place)?;
                let semantics = self.slot(semantics, place.span)?;
                let source = match self.value(source)? {
                    Value::Text(s) => s,
                    other => {
                        return fault(
                            source.span,
                            format!("transition source must be text, got {}", other.kind()),
                        )
                    }
                };
                let transition = crate::model::TransitionDescription::new(key.clone(), semantics, &source);
                CoreUpdate::SetTransition {
                    world,
                    entity,
                    key,
                    transition,
                }
            }
            UpdateExpr::DeleteTransition(p) => {
                let (world, entity, key) = self.property(p)?;
                CoreUpdate::DeleteTransition { world, entity, key }
            }
            UpdateExpr::StartProcess(p, t) => {
                let (world, entity, process) = self.property(p)?;
                let transition = self.slot(t, p.span)?;
                CoreUpdate::StartProcess {
                    world,
                    entity,
                    process,
                    transition,
                }
            }
            UpdateExpr::CancelProcess(p) => {
                let (world, entity, process) = self.property(p)?;
                CoreUpdate::CancelProcess { world, entity, process }
            }
            UpdateExpr::RebindProcess(p, t) => {
                let (world, entity, process) = self.property(p)?;
                let transition = self.slot(t, p.span)?;
                CoreUpdate::RebindProcess {
                    world,
                    entity,
                    process,
                    transition,
                }
            }
            UpdateExpr::CreateEntity(p) => match self.place(p)? {
                Place::Entity(world, entity) => CoreUpdate::CreateEntity { world, entity },
                Place::Property(..) => return fault(p.span, "`create_entity` needs `world.name`"),
            },
            UpdateExpr::DeleteEntity(e) => {
                let d = self.eval(e)?;
                let (world, entity) = self.entity_of(&d, e.span)?;
                CoreUpdate::DeleteEntity { world, entity }
            }
            UpdateExpr::AddWorld { world, from } => {
                let world = self.world_of(world)?;
                let copy_from = match from {
                    Some(f) => Some(self.world_of(f)?),
                    None => None,
                };
                CoreUpdate::AddWorld { world, copy_from }
            }
            UpdateExpr::DeleteWorld(e) => CoreUpdate::DeleteWorld {
                world: self.world_of(e)?,
            },
            UpdateExpr::CopyProperties { src, dst, keys } => {
                let s = self.eval(src)?;
                let (src_world, src_entity) = self.entity_of(&s, src.span)?;
                let d = self.eval(dst)?;
                let (dst_world, dst_entity) = self.entity_of(&d, dst.span)?;
                let keys = match keys {
                    None => KeyFilter::All,
                    Some(slots) => {
                        let mut ks = Vec::with_capacity(slots.len());
                        for k in slots {
                            ks.push(self.slot(k, src.span)?);
                        }
                        KeyFilter::Keys(ks)
                    }
                };
                CoreUpdate::CopyProperties {
                    src_world,
                    src_entity,
                    dst_world,
                    dst_entity,
                    keys,
                }
            }
            UpdateExpr::Guarded(..) | UpdateExpr::Macro { .. } => unreachable!("handled by update"),
        })
    }

    // -- expressions -------------------------------------------------------

    fn truth(&mut self, e: &Expr) -> R<bool> {
        match self.value(e)? {
            Value::Bool(b) => Ok(b),
            other => fault(e.span, format!("expected a bool, got {}", other.kind())),
        }
    }

    /// Evaluates to a plain value; located entities are an error.
    /// The entity a `me` or bound-variable base denotes, looked up without
    /// allocating. `None` sends the caller down the general path.
    fn quick_entity(&self, base: &Expr) -> Option<Option<&'a Entity>> {
        let snapshot: &'a Configuration = self.ctx.snapshot;
        match &base.kind {
            ExprKind::Me => Some(snapshot.entity(&self.ctx.world, &self.ctx.entity)),
            ExprKind::Var(v) => match self.env.iter().rev().find(|(n, _)| n == v) {
                Some((_, Datum::Entity { world, entity })) => Some(snapshot.entity(world, entity)),
                _ => None,
            },
            _ => None,
        }
    }

    /// Borrows the data value at `base.key` straight from the snapshot.
    fn peek(&self, e: &Expr) -> Option<&'a Value> {
        let ExprKind::Field(base, NameSlot::Lit(key)) = &e.kind else {
            return None;
        };
        let v = self.quick_entity(base)??.data.get(key.as_str())?;
        (!matches!(v, Value::EntityRef(_))).then_some(v)
    }

    fn value(&mut self, e: &Expr) -> R<Value> {
        if let Some(v) = self.peek(e) {
            return Ok(v.clone());
        }
        match self.eval(e)? {
            Datum::Value(v) => Ok(v),
            d @ Datum::Entity { .. } => fault(e.span, format!("expected a value, got entity {d}")),
        }
    }

    fn int(&mut self, e: &Expr) -> R<i64> {
        match self.value(e)? {
            Value::Int(i) => Ok(i),
            other => fault(e.span, format!("expected an int, got {}", other.kind())),
        }
    }

    fn read(&self, d: &Datum, key: &Name, span: Span) -> R<Datum> {
        match d {
            Datum::Value(Value::WorldRef(w)) => Ok(Datum::Entity {
                world: w.clone(),
                entity: key.clone(),
            }),
            _ => {
                let (w, en) = self.entity_of(d, span)?;
                let Some(ent) = self.ctx.snapshot.entity(&w, &en) else {
                    return fault(span, format!("entity {w}.{en} does not exist"));
                };
                match ent.data.get(key) {
                    Some(Value::EntityRef(n)) => Ok(Datum::Entity {
                        world: w,
                        entity: n.clone(),
                    }),
                    Some(v) => Ok(Datum::Value(v.clone())),
                    None => fault(span, format!("{w}.{en} has no data `{key}`")),
                }
            }
        }
    }

    fn eval(&mut self, e: &Expr) -> R<Datum> {
        Ok(match &e.kind {
            ExprKind::Lit(v) => Datum::Value(v.clone()),
            ExprKind::Unit => Datum::Value(Value::Unit),
            ExprKind::Pair(a, b) => Datum::Value(Value::Coord(self.int(a)?, self.int(b)?)),
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for x in items {
                    out.push(self.eval(x)?.into_value());
                }
                Datum::Value(Value::List(out))
            }
            ExprKind::EntityLit(n) => Datum::Entity {
                world: self.ctx.world.clone(),
                entity: to_name(e.span, n)?,
            },
            ExprKind::WorldLit(n) => Datum::Value(Value::WorldRef(to_name(e.span, n)?)),
            ExprKind::Me => Datum::Entity {
                world: self.ctx.world.clone(),
                entity: self.ctx.entity.clone(),
            },
            ExprKind::MyWorld => Datum::Value(Value::WorldRef(self.ctx.world.clone())),
            ExprKind::Param(p) => match self.ctx.params.iter().find(|(n, _)| n == p) {
                Some((_, v)) => self.located(v.clone()),
                None => return fault(e.span, format!("unknown parameter `${p}`")),
            },
            ExprKind::Var(v) => match self.env.iter().rev().find(|(n, _)| n == v) {
                Some((_, d)) => d.clone(),
                None => return fault(e.span, format!("unbound name `{v}`")),
            },
            ExprKind::Field(base, slot) => {
                if let Some(v) = self.peek(e) {
                    return Ok(Datum::Value(v.clone()));
                }
                let b = self.eval(base)?;
                let key = self.slot(slot, e.span)?;
                self.read(&b, &key, e.span)?
            }
            ExprKind::Call(f, args) => self.call(f, args, e.span)?,
            ExprKind::Range(..) => return fault(e.span, "a range is not a value"),
            ExprKind::Unary(op, x) => {
                let v = self.value(x)?;
                Datum::Value(match (op, v) {
                    (UnOp::Neg, Value::Int(i)) => match i.checked_neg() {
                        Some(n) => Value::Int(n),
                        None => return fault(e.span, "integer overflow"),
                    },
                    (UnOp::Neg, Value::Float(f)) => Value::Float(-f),
                    (UnOp::Neg, Value::Coord(x, y)) => Value::Coord(-x, -y),
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    (op, v) => return fault(e.span, format!("cannot apply {op:?} to {}", v.kind())),
                })
            }
            ExprKind::Binary(op, a, b) => self.binary(*op, a, b, e.span)?,
        })
    }

    fn binary(&mut self, op: BinOp, a: &Expr, b: &Expr, span: Span) -> R<Datum> {
        match op {
            BinOp::And | BinOp::Or => {
                let l = self.truth(a)?;
                let short = if op == BinOp::And { !l } else { l };
                if short {
                    return Ok(Datum::Value(Value::Bool(l)));
                }
                return Ok(Datum::Value(Value::Bool(self.truth(b)?)));
            }
            BinOp::Eq | BinOp::Ne => {
                if let (Some(l), Some(r)) = (self.peek(a), self.peek(b)) {
                    let eq = values_equal(l, r);
                    return Ok(Datum::Value(Value::Bool(if op == BinOp::Eq { eq } else { !eq })));
                }
                let l = self.eval(a)?;
                let r = self.eval(b)?;
                let eq = self.datum_eq(&l, &r);
                return Ok(Datum::Value(Value::Bool(if op == BinOp::Eq { eq } else { !eq })));
            }
            BinOp::Contains => {
                let owned;
                let hay = match self.peek(a) {
                    Some(v) => v,
                    None => {
                        owned = self.value(a)?;
                        &owned
                    }
                };
                let needle = self.eval(b)?;
                let found = match (hay, &needle) {
                    (Value::List(items), Datum::Value(n)) => items.iter().any(|x| values_equal(x, n)),
                    (Value::List(items), _) => items.iter().any(|x| self.datum_eq(&Datum::Value(x.clone()), &needle)),
                    (Value::Text(s), Datum::Value(Value::Text(t))) => s.contains(t.as_str()),
                    _ => return fault(span, format!("`contains` needs a list or text, got {}", hay.kind())),
                };
                return Ok(Datum::Value(Value::Bool(found)));
            }
            _ => {}
        }
        let l = self.value(a)?;
        let r = self.value(b)?;
        let overflow = || fault(span, "integer overflow");
        let v = match op {
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let Some(o) = order_values(&l, &r) else {
                    return fault(span, format!("cannot order {} and {}", l.kind(), r.kind()));
                };
                use core::cmp::Ordering::*;
                Value::Bool(match op {
                    BinOp::Lt => o == Less,
                    BinOp::Le => o != Greater,
                    BinOp::Gt => o == Greater,
                    _ => o != Less,
                })
            }
            _ => match (op, l, r) {
                (BinOp::Add, Value::Int(x), Value::Int(y)) => Value::Int(x.checked_add(y).map_or_else(overflow, Ok)?),
                (BinOp::Sub, Value::Int(x), Value::Int(y)) => Value::Int(x.checked_sub(y).map_or_else(overflow, Ok)?),
                (BinOp::Mul, Value::Int(x), Value::Int(y)) => Value::Int(x.checked_mul(y).map_or_else(overflow, Ok)?),
                (BinOp::Div | BinOp::Rem, Value::Int(_), Value::Int(0)) => return fault(span, "division by zero"),
                (BinOp::Div, Value::Int(x), Value::Int(y)) => Value::Int(x.checked_div(y).map_or_else(overflow, Ok)?),
                (BinOp::Rem, Value::Int(x), Value::Int(y)) => Value::Int(x.checked_rem(y).map_or_else(overflow, Ok)?),
                (BinOp::Add, Value::Coord(a, b), Value::Coord(c, d)) => Value::Coord(a + c, b + d),
                (BinOp::Sub, Value::Coord(a, b), Value::Coord(c, d)) => Value::Coord(a - c, b - d),
                (BinOp::Add, Value::Text(x), Value::Text(y)) => Value::Text(x + &y),
                (BinOp::Add, Value::List(mut x), Value::List(y)) => {
                    x.extend(y);
                    Value::List(x)
                }
                (op, l, r) => match (num(&l), num(&r)) {
                    (Some(x), Some(y)) => Value::Float(match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => x / y,
                        _ => libm::fmod(x, y),
                    }),
                    _ => {
                        return fault(
                            span,
                            format!("cannot apply `{}` to {} and {}", op.symbol(), l.kind(), r.kind()),
                        )
                    }
                },
            },
        };
        Ok(Datum::Value(v))
    }

    fn call(&mut self, f: &str, args: &[Expr], span: Span) -> R<Datum> {
        let arg = |i: usize| &args[i];
        match super::check::builtin_arity(f) {
            Some((lo, hi)) if (lo..=hi).contains(&args.len()) => {}
            _ => return fault(span, format!("bad call to `{f}`")),
        }
        let v = match f {
            "randomValue" => {
                let (lo, hi) = match &arg(0).kind {
                    ExprKind::Range(lo, hi) => (self.int(lo)?, self.int(hi)?),
                    _ => match self.value(arg(0))? {
                        Value::Int(n) => (1, n),
                        Value::List(items) => {
                            if items.is_empty() {
                                return fault(span, "`randomValue` of an empty list");
                            }
                            let i = self.draw(0, items.len() as i64 - 1, span)?;
                            return Ok(self.located(items[i as usize].clone()));
                        }
                        other => {
                            return fault(
                                span,
                                format!("`randomValue` needs a range, int or list, got {}", other.kind()),
                            )
                        }
                    },
                };
                if hi < lo {
                    return fault(span, format!("empty range {lo}..{hi}"));
                }
                Value::Int(self.draw(lo, hi, span)?)
            }
            "abs" => match self.value(arg(0))? {
                Value::Int(i) => Value::Int(i.checked_abs().map_or_else(|| fault(span, "integer overflow"), Ok)?),
                Value::Float(x) => Value::Float(libm::fabs(x)),
                other => return fault(span, format!("`abs` needs a number, got {}", other.kind())),
            },
            "distance" => match (self.value(arg(0))?, self.value(arg(1))?) {
                (Value::Coord(a, b), Value::Coord(c, d)) => {
                    let dx = (a - c) as f64;
                    let dy = (b - d) as f64;
                    Value::Float(libm::sqrt(dx * dx + dy * dy))
                }
                _ => return fault(span, "`distance` needs two coordinates"),
            },
            "exists" => Value::Bool(self.exists(arg(0))?),
            "entity" => {
                let w = self.world_of(arg(0))?;
                let n = match self.eval(arg(1))? {
                    Datum::Value(Value::Text(s)) => to_name(span, &s)?,
                    Datum::Value(Value::EntityRef(n)) | Datum::Entity { entity: n, .. } => n,
                    other => return fault(span, format!("`entity` needs a name, got {other}")),
                };
                return Ok(Datum::Entity { world: w, entity: n });
            }
            "world" => match self.value(arg(0))? {
                Value::Text(s) => Value::WorldRef(to_name(span, &s)?),
                w @ Value::WorldRef(_) => w,
                other => return fault(span, format!("`world` needs text, got {}", other.kind())),
            },
            "name" => match self.eval(arg(0))? {
                Datum::Entity { entity, .. } => Value::Text(entity.as_str().to_string()),
                Datum::Value(Value::EntityRef(n) | Value::WorldRef(n)) => Value::Text(n.as_str().to_string()),
                other => return fault(span, format!("`name` needs an entity or world, got {other}")),
            },
            "len" => match self.value(arg(0))? {
                Value::List(items) => Value::Int(items.len() as i64),
                Value::Text(s) => Value::Int(s.chars().count() as i64),
                other => return fault(span, format!("`len` needs a list or text, got {}", other.kind())),
            },
            "min" | "max" => {
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.value(a)?);
                }
                if let [Value::List(items)] = &vals[..] {
                    vals = items.clone();
                }
                let mut best: Option<Value> = None;
                for v in vals {
                    if num(&v).is_none() {
                        return fault(span, format!("`{f}` needs numbers, got {}", v.kind()));
                    }
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            let o = order_values(&v, &b).unwrap_or(core::cmp::Ordering::Equal);
                            let take = if f == "min" { o.is_lt() } else { o.is_gt() };
                            if take {
                                v
                            } else {
                                b
                            }
                        }
                    });
                }
                match best {
                    Some(v) => v,
                    None => return fault(span, format!("`{f}` of an empty list")),
                }
            }
            _ => unreachable!("checked above"),
        };
        Ok(Datum::Value(v))
    }

    fn draw(&mut self, lo: i64, hi: i64, span: Span) -> R<i64> {
        match self.ctx.rng.as_deref_mut() {
            Some(rng) => Ok(rng.range_inclusive(lo, hi)),
            None => fault(span, "random draws are not available here"),
        }
    }

    fn exists(&mut self, e: &Expr) -> R<bool> {
        let snapshot = self.ctx.snapshot;
        if let ExprKind::Field(base, NameSlot::Lit(key)) = &e.kind {
            if let Some(ent) = self.quick_entity(base) {
                return Ok(ent.is_some_and(|x| x.has_property(key.as_str())));
            }
        }
        if e.as_place().is_some() {
            return Ok(match self.place(e)? {
                Place::Property(w, en, k) => snapshot.entity(&w, &en).is_some_and(|x| x.has_property(&k)),
                Place::Entity(w, en) => snapshot.entity(&w, &en).is_some(),
            });
        }
        Ok(match self.eval(e)? {
            Datum::Value(Value::WorldRef(w)) => snapshot.worlds.contains_key(&w),
            d => {
                let (w, en) = self.entity_of(&d, e.span)?;
                snapshot.entity(&w, &en).is_some()
            }
        })
    }
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, World};
    use crate::name::name;
    use crate::tdl::parse_program;
    use alloc::vec;

    fn config() -> Configuration {
        let mut w = World::default();
        let mut ch = Entity::default();
        ch.data.insert(name("loc"), Value::Coord(3, 5));
        ch.data.insert(name("friend"), Value::EntityRef(name("corn2")));
        w.entities.insert(name("ch"), ch);
        for (n, loc) in [("corn1", (9, 9)), ("corn2", (3, 6)), ("corn3", (3, 4))] {
            let mut c = Entity::default();
            c.data.insert(name("loc"), Value::Coord(loc.0, loc.1));
            c.data.insert(name("types"), Value::List(vec![Value::text("corn")]));
            w.entities.insert(name(n), c);
        }
        let mut c = Configuration::new();
        c.worlds.insert(name("w"), w);
        c.tick = 10;
        c
    }

    fn run(src: &str, cursor: Option<&Cursor>, rng: &mut Stream) -> Outcome {
        let snapshot = config();
        let program = parse_program(src).unwrap();
        let mut ctx = Ctx {
            snapshot: &snapshot,
            world: name("w"),
            entity: name("ch"),
            tick: 10,
            rng: Some(rng),
            params: &[],
        };
        run_segment(&program, &mut ctx, cursor).unwrap()
    }

    fn stream() -> Stream {
        Stream::new(1, &Path::parse("w.ch.move").unwrap(), 0)
    }

    #[test]
    fn suspends_and_resumes_with_bindings() {
        let src = "let (x, y) = me.loc\nif x > 1 { let z = x + y\n wait 3\n return { set_data me.loc = (z, y) } }";
        let mut rng = stream();
        let first = run(src, None, &mut rng);
        let Next::SuspendUntil { resume_tick, cursor } = first.next else {
            panic!("expected a suspension")
        };
        assert_eq!(resume_tick, 13);
        assert_eq!(
            cursor,
            Cursor::Tdl {
                resume: vec![1, 0, 2],
                bindings: vec![
                    ("x".into(), Datum::Value(Value::Int(3))),
                    ("y".into(), Datum::Value(Value::Int(5))),
                    ("z".into(), Datum::Value(Value::Int(8))),
                ],
                draws: 0,
            }
        );
        let second = run(src, Some(&cursor), &mut rng);
        assert_eq!(second.next, Next::Finished { cont: true });
        assert_eq!(second.updates[0].to_string(), "set_data w.ch.loc=(8,5)");
    }

    #[test]
    fn select_minimizing_breaks_ties_by_name() {
        let src = r#"select c in myworld where c != me and exists(c.types) and c.types contains "corn"
                       minimizing distance(c.loc, me.loc) { return stop { delete_entity c } }"#;
        let out = run(src, None, &mut stream());
        assert_eq!(out.next, Next::Finished { cont: false });
        assert_eq!(out.updates[0].to_string(), "delete_entity w.corn2");
    }

    #[test]
    fn emits_before_return_and_falls_off() {
        let src = "emit { set_data me.a = 1 } emit { delete_data me.b }";
        let out = run(src, None, &mut stream());
        assert_eq!(out.updates.len(), 2);
        assert_eq!(out.next, Next::Finished { cont: true });
    }

    #[test]
    fn entity_refs_read_as_located_entities() {
        let out = run("return { set_data me.target = me.friend.loc }", None, &mut stream());
        assert_eq!(out.updates[0].to_string(), "set_data w.ch.target=(3,6)");
    }

    #[test]
    fn missing_reads_fault_and_booleans_are_explicit() {
        let snapshot = config();
        let mut rng = stream();
        for src in ["wait me.nothing", "if 1 { }", "wait 1 / 0", "wait randomValue(5..1)"] {
            let program = parse_program(src).unwrap();
            let mut ctx = Ctx {
                snapshot: &snapshot,
                world: name("w"),
                entity: name("ch"),
                tick: 10,
                rng: Some(&mut rng),
                params: &[],
            };
            assert!(run_segment(&program, &mut ctx, None).is_err(), "{src}");
        }
    }

    #[test]
    fn draws_continue_across_segments() {
        let src = "wait randomValue(1..100)\nreturn { set_data me.r = randomValue(1..100) }";
        let mut rng = stream();
        let first = run(src, None, &mut rng);
        let Next::SuspendUntil { cursor, .. } = first.next else {
            panic!()
        };
        let Cursor::Tdl { draws, .. } = &cursor else { panic!() };
        assert_eq!(*draws, 1);
        let mut resumed = Stream::resume(1, &Path::parse("w.ch.move").unwrap(), 0, *draws);
        let a = run(src, Some(&cursor), &mut resumed);
        let b = run(src, Some(&cursor), &mut rng);
        assert_eq!(a.updates, b.updates);
    }
}
