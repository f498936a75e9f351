//! Source rendering of TDL programs. Parsing the output yields a program
//! equal to the input.

use alloc::string::String;
use core::fmt::Write;

use super::ast::*;
use super::lexer::{is_ident_continue, is_ident_start};
use crate::value::{write_quoted, Value};

pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    block_body(&mut out, &program.body, 0);
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_continue)
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn block_body(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        indent(out, depth);
        stmt(out, s, depth);
        out.push('\n');
    }
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    out.push_str("{\n");
    block_body(out, stmts, depth + 1);
    indent(out, depth);
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Wait(e) => {
            out.push_str("wait ");
            expr(out, e);
        }
        StmtKind::Let(p, e) => {
            match p {
                Pattern::Name(n) => {
                    let _ = write!(out, "let {n} = ");
                }
                Pattern::Pair(a, b) => {
                    let _ = write!(out, "let ({a}, {b}) = ");
                }
            }
            expr(out, e);
        }
        StmtKind::If { cond, then, otherwise } => {
            out.push_str("if ");
            expr(out, cond);
            out.push(' ');
            block(out, then, depth);
            match otherwise.as_deref() {
                None => {}
                Some([only]) if matches!(only.kind, StmtKind::If { .. }) => {
                    out.push_str(" else ");
                    stmt(out, only, depth);
                }
                Some(b) => {
                    out.push_str(" else ");
                    block(out, b, depth);
                }
            }
        }
        StmtKind::Switch {
            scrutinee,
            cases,
            default,
        } => {
            out.push_str("switch ");
            expr(out, scrutinee);
            out.push_str(" {\n");
            for c in cases {
                indent(out, depth + 1);
                out.push_str("case ");
                expr(out, &c.value);
                out.push_str(":\n");
                block_body(out, &c.body, depth + 2);
            }
            if let Some(d) = default {
                indent(out, depth + 1);
                out.push_str("default:\n");
                block_body(out, d, depth + 2);
            }
            indent(out, depth);
            out.push('}');
        }
        StmtKind::Select {
            binder,
            domain,
            filter,
            minimizing,
            body,
            otherwise,
        } => {
            let _ = write!(out, "select {binder} in ");
            expr(out, domain);
            if let Some(f) = filter {
                out.push_str(" where ");
                expr(out, f);
            }
            if let Some(m) = minimizing {
                out.push_str(" minimizing ");
                expr(out, m);
            }
            out.push(' ');
            block(out, body, depth);
            if let Some(b) = otherwise {
                out.push_str(" else ");
                block(out, b, depth);
            }
        }
        StmtKind::Return { stop, updates } => {
            out.push_str("return");
            if *stop {
                out.push_str(" stop");
            }
            if !updates.is_empty() {
                out.push(' ');
                update_list(out, updates);
            }
        }
        StmtKind::Emit(updates) => {
            out.push_str("emit ");
            update_list(out, updates);
        }
        StmtKind::Await(e) => {
            out.push_str("await ");
            expr(out, e);
        }
    }
}

fn update_list(out: &mut String, updates: &[UpdateExpr]) {
    out.push('{');
    for (i, u) in updates.iter().enumerate() {
        out.push_str(if i == 0 { " " } else { ", " });
        update(out, u);
    }
    out.push_str(" }");
}

fn slot(out: &mut String, s: &NameSlot) {
    match s {
        NameSlot::Lit(n) => name(out, n),
        NameSlot::Dyn(e) => match &e.kind {
            ExprKind::Param(p) => {
                let _ = write!(out, "${p}");
            }
            _ => {
                out.push('(');
                expr(out, e);
                out.push(')');
            }
        },
    }
}

fn name(out: &mut String, n: &str) {
    if is_ident(n) {
        out.push_str(n);
    } else {
        let _ = write_quoted(out, n);
    }
}

fn guard(out: &mut String, g: &GuardExpr) {
    match g {
        GuardExpr::Exists(p) => {
            out.push_str("exists(");
            expr(out, p);
            out.push(')');
        }
        GuardExpr::NotExists(p) => {
            out.push_str("not exists(");
            expr(out, p);
            out.push(')');
        }
        GuardExpr::Compare(op, p, v) => {
            operand(out, p);
            let _ = write!(out, " {} ", op.symbol());
            operand(out, v);
        }
    }
}

fn update(out: &mut String, u: &UpdateExpr) {
    let kw_place = |out: &mut String, kw: &str, p: &Expr| {
        out.push_str(kw);
        out.push(' ');
        operand(out, p);
    };
    match u {
        UpdateExpr::SetData(p, v) => {
            kw_place(out, "set_data", p);
            out.push_str(" = ");
            expr(out, v);
        }
        UpdateExpr::DeleteData(p) => kw_place(out, "delete_data", p),
        UpdateExpr::SetTransition {
            place,
            semantics,
            source,
        } => {
            kw_place(out, "set_transition", place);
            out.push_str(" = ");
            slot(out, semantics);
            out.push(' ');
            operand(out, source);
        }
        UpdateExpr::DeleteTransition(p) => kw_place(out, "delete_transition", p),
        UpdateExpr::StartProcess(p, t) => {
            kw_place(out, "start_process", p);
            out.push_str(" = ");
            slot(out, t);
        }
        UpdateExpr::CancelProcess(p) => kw_place(out, "cancel_process", p),
        UpdateExpr::RebindProcess(p, t) => {
            kw_place(out, "rebind_process", p);
            out.push_str(" = ");
            slot(out, t);
        }
        UpdateExpr::CreateEntity(p) => kw_place(out, "create_entity", p),
        UpdateExpr::DeleteEntity(e) => kw_place(out, "delete_entity", e),
        UpdateExpr::AddWorld { world, from } => {
            kw_place(out, "add_world", world);
            if let Some(f) = from {
                out.push_str(" from ");
                operand(out, f);
            }
        }
        UpdateExpr::DeleteWorld(e) => kw_place(out, "delete_world", e),
        UpdateExpr::CopyProperties { src, dst, keys } => {
            kw_place(out, "copy_properties", src);
            out.push_str(" -> ");
            operand(out, dst);
            out.push_str(" [");
            match keys {
                None => out.push('*'),
                Some(ks) => {
                    for (i, k) in ks.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        slot(out, k);
                    }
                }
            }
            out.push(']');
        }
        UpdateExpr::Guarded(g, inner) => {
            out.push_str("when ");
            guard(out, g);
            out.push_str(" then ");
            update(out, inner);
        }
        UpdateExpr::Macro { name: n, args, .. } => {
            out.push_str(n);
            if !args.is_empty() {
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    expr(out, a);
                }
                out.push(')');
            }
        }
    }
}

/// Prints an operand, parenthesized unless it is atomic.
fn operand(out: &mut String, e: &Expr) {
    if matches!(e.kind, ExprKind::Binary(..) | ExprKind::Unary(..)) {
        out.push('(');
        expr(out, e);
        out.push(')');
    } else {
        expr(out, e);
    }
}

fn lit(out: &mut String, v: &Value) {
    match v {
        Value::Text(s) => {
            let _ = write_quoted(out, s);
        }
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

fn expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Lit(v) => lit(out, v),
        ExprKind::Unit => out.push_str("()"),
        ExprKind::Pair(a, b) => {
            out.push('(');
            expr(out, a);
            out.push_str(", ");
            expr(out, b);
            out.push(')');
        }
        ExprKind::List(items) => {
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, x);
            }
            out.push(']');
        }
        ExprKind::EntityLit(n) => {
            out.push('@');
            name(out, n);
        }
        ExprKind::WorldLit(n) => {
            out.push_str("@@");
            name(out, n);
        }
        ExprKind::Me => out.push_str("me"),
        ExprKind::MyWorld => out.push_str("myworld"),
        ExprKind::Param(p) => {
            let _ = write!(out, "${p}");
        }
        ExprKind::Var(v) => out.push_str(v),
        ExprKind::Field(base, key) => {
            operand(out, base);
            out.push('.');
            slot(out, key);
        }
        ExprKind::Call(f, args) => {
            out.push_str(f);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, a);
            }
            out.push(')');
        }
        ExprKind::Range(lo, hi) => {
            operand(out, lo);
            out.push_str("..");
            operand(out, hi);
        }
        ExprKind::Unary(op, x) => {
            out.push_str(match op {
                UnOp::Neg => "-",
                UnOp::Not => "not ",
            });
            operand(out, x);
        }
        ExprKind::Binary(op, a, b) => {
            operand(out, a);
            let _ = write!(out, " {} ", op.symbol());
            operand(out, b);
        }
    }
}
