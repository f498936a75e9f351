//! Static checks run before a transition or macro is accepted.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ast::*;
use super::Diagnostic;

/// Builtin functions with their accepted argument counts.
pub const BUILTINS: [(&str, usize, usize); 10] = [
    ("randomValue", 1, 1),
    ("abs", 1, 1),
    ("distance", 2, 2),
    ("exists", 1, 1),
    ("entity", 2, 2),
    ("world", 1, 1),
    ("name", 1, 1),
    ("len", 1, 1),
    ("min", 1, usize::MAX),
    ("max", 1, usize::MAX),
];

pub fn builtin_arity(name: &str) -> Option<(usize, usize)> {
    BUILTINS.iter().find(|(n, ..)| *n == name).map(|(_, lo, hi)| (*lo, *hi))
}

pub type MacroArity<'a> = dyn Fn(&str) -> Option<usize> + 'a;

#[derive(Clone, Copy, Default)]
pub struct CheckOptions<'a> {
    /// `Some(params)` checks a macro body with these parameters.
    pub macro_params: Option<&'a [String]>,
    /// Arity lookup for macros; unknown macros are only reported when set.
    pub macros: Option<&'a MacroArity<'a>>,
}

struct Checker<'a> {
    opts: CheckOptions<'a>,
    scope: Vec<String>,
    out: Vec<Diagnostic>,
}

/// Returns errors and warnings; the program is acceptable when no error is
/// among them.
pub fn check(program: &Program, opts: CheckOptions<'_>) -> Vec<Diagnostic> {
    let mut c = Checker {
        opts,
        scope: Vec::new(),
        out: Vec::new(),
    };
    c.block(&program.body);
    c.out
}

impl Checker<'_> {
    fn macro_mode(&self) -> bool {
        self.opts.macro_params.is_some()
    }

    fn err(&mut self, span: Span, msg: impl Into<String>) {
        self.out.push(Diagnostic::error(span, msg));
    }

    fn block(&mut self, stmts: &[Stmt]) {
        let mark = self.scope.len();
        let mut returned = false;
        for s in stmts {
            if returned {
                self.out
                    .push(Diagnostic::warning(s.span, "unreachable statement after `return`"));
                returned = false;
            }
            self.stmt(s);
            if matches!(s.kind, StmtKind::Return { .. }) {
                returned = true;
            }
        }
        self.scope.truncate(mark);
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Wait(e) => {
                if self.macro_mode() {
                    self.err(s.span, "`wait` is not allowed in a macro");
                }
                self.expr(e);
            }
            StmtKind::Let(pat, e) => {
                self.expr(e);
                for n in pat.names() {
                    self.scope.push(n.into());
                }
            }
            StmtKind::If { cond, then, otherwise } => {
                self.expr(cond);
                self.block(then);
                if let Some(b) = otherwise {
                    self.block(b);
                }
            }
            StmtKind::Switch {
                scrutinee,
                cases,
                default,
            } => {
                self.expr(scrutinee);
                for case in cases {
                    let literal = match &case.value.kind {
                        ExprKind::Lit(_) => true,
                        ExprKind::Unary(UnOp::Neg, inner) => matches!(inner.kind, ExprKind::Lit(_)),
                        _ => false,
                    };
                    if !literal {
                        self.err(case.value.span, "`case` needs a literal");
                    }
                    self.block(&case.body);
                }
                if let Some(b) = default {
                    self.block(b);
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
                self.expr(domain);
                self.scope.push(binder.clone());
                if let Some(f) = filter {
                    self.expr(f);
                }
                if let Some(m) = minimizing {
                    self.expr(m);
                }
                self.block(body);
                self.scope.pop();
                if let Some(b) = otherwise {
                    self.block(b);
                }
            }
            StmtKind::Return { updates, .. } => {
                for u in updates {
                    self.update(u);
                }
            }
            StmtKind::Emit(updates) => {
                if self.macro_mode() {
                    self.err(s.span, "`emit` is not allowed in a macro");
                }
                for u in updates {
                    self.update(u);
                }
            }
            StmtKind::Await(e) => {
                if self.macro_mode() {
                    self.err(s.span, "`await` is not allowed in a macro");
                }
                if e.as_place().is_none() {
                    self.err(e.span, "`await` needs a process place such as `x.proc`");
                }
                self.expr(e);
            }
        }
    }

    fn slot(&mut self, slot: &NameSlot) {
        if let NameSlot::Dyn(e) = slot {
            self.expr(e);
        }
    }

    fn guard(&mut self, g: &GuardExpr) {
        match g {
            GuardExpr::Exists(p) | GuardExpr::NotExists(p) => {
                if p.as_place().is_none() {
                    self.err(p.span, "a guard needs a place such as `x.key`");
                }
                self.expr(p);
            }
            GuardExpr::Compare(_, p, v) => {
                self.expr(p);
                self.expr(v);
            }
        }
    }

    fn update(&mut self, u: &UpdateExpr) {
        match u {
            UpdateExpr::SetData(p, v) => {
                self.expr(p);
                self.expr(v);
            }
            UpdateExpr::SetTransition {
                place,
                semantics,
                source,
            } => {
                self.expr(place);
                self.slot(semantics);
                self.expr(source);
            }
            UpdateExpr::StartProcess(p, t) | UpdateExpr::RebindProcess(p, t) => {
                self.expr(p);
                self.slot(t);
            }
            UpdateExpr::DeleteData(e)
            | UpdateExpr::DeleteTransition(e)
            | UpdateExpr::CancelProcess(e)
            | UpdateExpr::CreateEntity(e)
            | UpdateExpr::DeleteEntity(e)
            | UpdateExpr::DeleteWorld(e) => self.expr(e),
            UpdateExpr::AddWorld { world, from } => {
                self.expr(world);
                if let Some(f) = from {
                    self.expr(f);
                }
            }
            UpdateExpr::CopyProperties { src, dst, keys } => {
                self.expr(src);
                self.expr(dst);
                for k in keys.iter().flatten() {
                    self.slot(k);
                }
            }
            UpdateExpr::Guarded(g, inner) => {
                self.guard(g);
                self.update(inner);
            }
            UpdateExpr::Macro { name, args, span } => {
                if self.macro_mode() {
                    self.err(*span, format!("macro `{name}` cannot be used inside a macro"));
                } else if let Some(lookup) = self.opts.macros {
                    match lookup(name) {
                        None => self.err(*span, format!("unknown macro `{name}`")),
                        Some(n) if n != args.len() => self.err(
                            *span,
                            format!("macro `{name}` takes {n} argument(s), got {}", args.len()),
                        ),
                        Some(_) => {}
                    }
                }
                for a in args {
                    self.expr(a);
                }
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Lit(_)
            | ExprKind::Unit
            | ExprKind::EntityLit(_)
            | ExprKind::WorldLit(_)
            | ExprKind::Me
            | ExprKind::MyWorld => {}
            ExprKind::Pair(a, b) => {
                self.expr(a);
                self.expr(b);
            }
            ExprKind::List(items) => items.iter().for_each(|x| self.expr(x)),
            ExprKind::Param(p) => match self.opts.macro_params {
                None => self.err(e.span, format!("`${p}` outside a macro body")),
                Some(ps) if !ps.iter().any(|x| x == p) => self.err(e.span, format!("unknown parameter `${p}`")),
                Some(_) => {}
            },
            ExprKind::Var(v) => {
                if !self.scope.iter().any(|x| x == v) {
                    self.err(e.span, format!("unbound name `{v}`"));
                }
            }
            ExprKind::Field(base, slot) => {
                self.expr(base);
                self.slot(slot);
            }
            ExprKind::Call(f, args) => {
                match builtin_arity(f) {
                    None => self.err(e.span, format!("unknown function `{f}`")),
                    Some((lo, hi)) if args.len() < lo || args.len() > hi => {
                        self.err(e.span, format!("`{f}` does not take {} argument(s)", args.len()))
                    }
                    Some(_) => {}
                }
                if f == "randomValue" && self.macro_mode() {
                    self.err(e.span, "`randomValue` is not allowed in a macro");
                }
                for a in args {
                    if let ExprKind::Range(lo, hi) = &a.kind {
                        if f != "randomValue" {
                            self.err(a.span, "ranges are only allowed in `randomValue`");
                        }
                        self.expr(lo);
                        self.expr(hi);
                    } else {
                        self.expr(a);
                    }
                }
            }
            ExprKind::Range(lo, hi) => {
                self.err(e.span, "ranges are only allowed in `randomValue`");
                self.expr(lo);
                self.expr(hi);
            }
            ExprKind::Unary(_, x) => self.expr(x),
            ExprKind::Binary(_, a, b) => {
                self.expr(a);
                self.expr(b);
            }
        }
    }
}
