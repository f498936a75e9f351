use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ast::*;
use super::lexer::{lex, Tok};
use super::Diagnostic;
use crate::text::is_core_keyword;
use crate::value::Value;

pub(crate) const RESERVED: [&str; 27] = [
    "wait",
    "let",
    "if",
    "else",
    "switch",
    "case",
    "default",
    "select",
    "in",
    "where",
    "minimizing",
    "return",
    "stop",
    "emit",
    "await",
    "and",
    "or",
    "not",
    "true",
    "false",
    "me",
    "myworld",
    "contains",
    "when",
    "then",
    "from",
    "exists",
];

const STMT_START: [&str; 8] = ["wait", "let", "if", "switch", "select", "return", "emit", "await"];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    errors: Vec<Diagnostic>,
}

/// Parses a transition or macro body. Syntax errors are collected with
/// statement-level recovery, so one call reports every broken statement.
pub fn parse_program(src: &str) -> Result<Program, Vec<Diagnostic>> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        errors: Vec::new(),
    };
    let mut body = Vec::new();
    loop {
        body.extend(p.stmts(|t| matches!(t, Tok::Eof)));
        if matches!(p.peek(), Tok::Eof) {
            break;
        }
        let d = Diagnostic::error(p.span(), format!("unexpected {}", p.peek().describe()));
        p.errors.push(d);
        p.bump();
    }
    if p.errors.is_empty() {
        Ok(Program { body })
    } else {
        Err(p.errors)
    }
}

fn ident_is(t: &Tok, word: &str) -> bool {
    matches!(t, Tok::Ident(s) if s == word)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_kw(&self, word: &str) -> bool {
        ident_is(self.peek(), word)
    }

    fn eat_kw(&mut self, word: &str) -> bool {
        if self.at_kw(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::error(self.span(), msg))
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        self.error(format!("expected {what}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.expected(&t.describe())
        }
    }

    fn expect_kw(&mut self, word: &str) -> PResult<()> {
        if self.eat_kw(word) {
            Ok(())
        } else {
            self.expected(&format!("`{word}`"))
        }
    }

    fn binder(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.expected("a name"),
        }
    }

    /// Skips to the start of the next statement after an error in the
    /// statement that began at token `stmt_start`.
    fn recover(&mut self, end: fn(&Tok) -> bool, stmt_start: usize) {
        let mut depth: isize = 0;
        for i in stmt_start..self.pos {
            match &self.toks[i].0 {
                Tok::LBrace => depth += 1,
                Tok::RBrace => depth -= 1,
                // The failing token may already have been consumed.
                Tok::Ident(s) if i > stmt_start && depth == 0 && STMT_START.contains(&s.as_str()) => {
                    self.pos = i;
                    return;
                }
                _ => {}
            }
        }
        loop {
            let t = self.peek();
            if matches!(t, Tok::Eof) {
                return;
            }
            if depth <= 0 && self.pos > stmt_start {
                if end(t) || matches!(t, Tok::RBrace) {
                    return;
                }
                if let Tok::Ident(s) = t {
                    if STMT_START.contains(&s.as_str()) {
                        return;
                    }
                }
            }
            match t {
                Tok::LBrace => depth += 1,
                Tok::RBrace => depth -= 1,
                _ => {}
            }
            self.bump();
        }
    }

    fn stmts(&mut self, end: fn(&Tok) -> bool) -> Vec<Stmt> {
        let mut out = Vec::new();
        while !end(self.peek()) && !matches!(self.peek(), Tok::RBrace | Tok::Eof) {
            let start = self.pos;
            match self.stmt() {
                Ok(s) => out.push(s),
                Err(d) => {
                    self.errors.push(d);
                    self.recover(end, start);
                }
            }
        }
        out
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(&Tok::LBrace)?;
        let body = self.stmts(|_| false);
        self.expect(&Tok::RBrace)?;
        Ok(body)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.expected("a statement"),
        };
        let kind = match word.as_str() {
            "wait" => {
                self.bump();
                StmtKind::Wait(self.expr()?)
            }
            "let" => {
                self.bump();
                let pat = if self.eat(&Tok::LParen) {
                    let a = self.binder()?;
                    self.expect(&Tok::Comma)?;
                    let b = self.binder()?;
                    self.expect(&Tok::RParen)?;
                    Pattern::Pair(a, b)
                } else {
                    Pattern::Name(self.binder()?)
                };
                self.expect(&Tok::Assign)?;
                StmtKind::Let(pat, self.expr()?)
            }
            "if" => return self.if_stmt(),
            "switch" => {
                self.bump();
                let scrutinee = self.expr()?;
                self.expect(&Tok::LBrace)?;
                let mut cases = Vec::new();
                let mut default = None;
                loop {
                    if self.eat(&Tok::RBrace) {
                        break;
                    }
                    if self.eat_kw("case") {
                        if default.is_some() {
                            return self.error("`case` after `default`");
                        }
                        let value = self.unary()?;
                        self.expect(&Tok::Colon)?;
                        let body = self.stmts(|t| ident_is(t, "case") || ident_is(t, "default"));
                        cases.push(Case { value, body });
                    } else if self.eat_kw("default") {
                        if default.is_some() {
                            return self.error("duplicate `default`");
                        }
                        self.expect(&Tok::Colon)?;
                        default = Some(self.stmts(|t| ident_is(t, "case") || ident_is(t, "default")));
                    } else {
                        return self.expected("`case`, `default` or `}`");
                    }
                }
                StmtKind::Switch {
                    scrutinee,
                    cases,
                    default,
                }
            }
            "select" => {
                self.bump();
                let binder = self.binder()?;
                self.expect_kw("in")?;
                let domain = self.expr()?;
                let filter = if self.eat_kw("where") { Some(self.expr()?) } else { None };
                let minimizing = if self.eat_kw("minimizing") {
                    Some(self.expr()?)
                } else {
                    None
                };
                let body = self.block()?;
                let otherwise = if self.eat_kw("else") { Some(self.block()?) } else { None };
                StmtKind::Select {
                    binder,
                    domain,
                    filter,
                    minimizing,
                    body,
                    otherwise,
                }
            }
            "return" => {
                self.bump();
                let stop = self.eat_kw("stop");
                let updates = if matches!(self.peek(), Tok::LBrace) {
                    self.update_list()?
                } else {
                    Vec::new()
                };
                StmtKind::Return { stop, updates }
            }
            "emit" => {
                self.bump();
                StmtKind::Emit(self.update_list()?)
            }
            "await" => {
                self.bump();
                StmtKind::Await(self.expr()?)
            }
            _ => return self.expected("a statement"),
        };
        Ok(Stmt {
            kind,
            span: start.to(self.prev_span()),
        })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        self.expect_kw("if")?;
        let cond = self.expr()?;
        let then = self.block()?;
        let otherwise = if self.eat_kw("else") {
            if self.at_kw("if") {
                Some(alloc::vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt {
            kind: StmtKind::If { cond, then, otherwise },
            span: start.to(self.prev_span()),
        })
    }

    // -- updates -----------------------------------------------------------

    fn update_list(&mut self) -> PResult<Vec<UpdateExpr>> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBrace) {
            out.push(self.update()?);
            if !self.eat(&Tok::Comma) {
                self.expect(&Tok::RBrace)?;
                break;
            }
        }
        Ok(out)
    }

    fn name_slot(&mut self) -> PResult<NameSlot> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::Str(s) => {
                self.bump();
                Ok(NameSlot::Lit(s))
            }
            Tok::Param(p) => {
                let span = self.span();
                self.bump();
                Ok(NameSlot::Dyn(Box::new(Expr::new(ExprKind::Param(p), span))))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(NameSlot::Dyn(Box::new(e)))
            }
            _ => self.expected("a name"),
        }
    }

    fn place(&mut self) -> PResult<Expr> {
        let start = self.span();
        let e = self.postfix()?;
        if e.as_place().is_none() {
            return Err(Diagnostic::error(
                start.to(self.prev_span()),
                "expected a place of the form `base.key`",
            ));
        }
        Ok(e)
    }

    fn guard(&mut self) -> PResult<GuardExpr> {
        let negated = (self.at_kw("not") || matches!(self.peek(), Tok::Bang)) && ident_is(self.peek_at(1), "exists");
        if negated {
            self.bump();
        }
        if self.eat_kw("exists") {
            self.expect(&Tok::LParen)?;
            let p = self.expr()?;
            self.expect(&Tok::RParen)?;
            return Ok(if negated {
                GuardExpr::NotExists(p)
            } else {
                GuardExpr::Exists(p)
            });
        }
        if negated {
            return self.expected("`exists`");
        }
        let place = self.place()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return self.expected("a comparison"),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(GuardExpr::Compare(op, place, rhs))
    }

    fn update(&mut self) -> PResult<UpdateExpr> {
        let span = self.span();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.expected("an update"),
        };
        self.bump();
        if word == "when" {
            let guard = self.guard()?;
            self.expect_kw("then")?;
            let inner = self.update()?;
            if matches!(inner, UpdateExpr::Guarded(..) | UpdateExpr::Macro { .. }) {
                return Err(Diagnostic::error(
                    span.to(self.prev_span()),
                    "a guard must wrap a core update",
                ));
            }
            return Ok(UpdateExpr::Guarded(guard, Box::new(inner)));
        }
        if !is_core_keyword(&word) {
            if is_reserved(&word) {
                return Err(Diagnostic::error(span, format!("expected an update, found `{word}`")));
            }
            let mut args = Vec::new();
            if self.eat(&Tok::LParen) && !self.eat(&Tok::RParen) {
                loop {
                    args.push(self.expr()?);
                    if self.eat(&Tok::RParen) {
                        break;
                    }
                    self.expect(&Tok::Comma)?;
                }
            }
            return Ok(UpdateExpr::Macro {
                name: word,
                args,
                span: span.to(self.prev_span()),
            });
        }
        Ok(match word.as_str() {
            "set_data" => {
                let place = self.place()?;
                self.expect(&Tok::Assign)?;
                UpdateExpr::SetData(place, self.expr()?)
            }
            "delete_data" => UpdateExpr::DeleteData(self.place()?),
            "set_transition" => {
                let place = self.place()?;
                self.expect(&Tok::Assign)?;
                let semantics = self.name_slot()?;
                let source = self.unary()?;
                UpdateExpr::SetTransition {
                    place,
                    semantics,
                    source,
                }
            }
            "delete_transition" => UpdateExpr::DeleteTransition(self.place()?),
            "start_process" => {
                let place = self.place()?;
                self.expect(&Tok::Assign)?;
                UpdateExpr::StartProcess(place, self.name_slot()?)
            }
            "cancel_process" => UpdateExpr::CancelProcess(self.place()?),
            "rebind_process" => {
                let place = self.place()?;
                self.expect(&Tok::Assign)?;
                UpdateExpr::RebindProcess(place, self.name_slot()?)
            }
            "create_entity" => UpdateExpr::CreateEntity(self.place()?),
            "delete_entity" => UpdateExpr::DeleteEntity(self.additive()?),
            "add_world" => {
                let world = self.additive()?;
                let from = if self.eat_kw("from") {
                    Some(self.additive()?)
                } else {
                    None
                };
                UpdateExpr::AddWorld { world, from }
            }
            "delete_world" => UpdateExpr::DeleteWorld(self.additive()?),
            "copy_properties" => {
                let src = self.additive()?;
                self.expect(&Tok::Arrow)?;
                let dst = self.additive()?;
                self.expect(&Tok::LBracket)?;
                let keys = if self.eat(&Tok::Star) {
                    None
                } else {
                    let mut ks = Vec::new();
                    if !matches!(self.peek(), Tok::RBracket) {
                        loop {
                            ks.push(self.name_slot()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    Some(ks)
                };
                self.expect(&Tok::RBracket)?;
                UpdateExpr::CopyProperties { src, dst, keys }
            }
            _ => unreachable!("core keyword"),
        })
    }

    // -- expressions -------------------------------------------------------

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = if min_prec <= 3 { self.not_expr()? } else { self.unary()? };
        loop {
            let op = match self.peek() {
                Tok::Ident(s) if s == "or" => BinOp::Or,
                Tok::Ident(s) if s == "and" => BinOp::And,
                Tok::Ident(s) if s == "contains" => BinOp::Contains,
                Tok::EqEq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            if prec == 4 {
                if let ExprKind::Binary(inner, ..) = &lhs.kind {
                    if inner.precedence() == 4 {
                        return Err(Diagnostic::error(
                            lhs.span.to(rhs.span),
                            "comparisons do not chain; add parentheses",
                        ));
                    }
                }
            }
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.at_kw("not") || matches!(self.peek(), Tok::Bang) {
            let start = self.span();
            self.bump();
            let inner = self.not_expr()?;
            let span = start.to(inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(inner)), span));
        }
        self.binary(4)
    }

    fn additive(&mut self) -> PResult<Expr> {
        self.binary(5)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if matches!(self.peek(), Tok::Minus) {
            let start = self.span();
            self.bump();
            let inner = self.unary()?;
            let span = start.to(inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(inner)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat(&Tok::Dot) {
            let slot = self.name_slot()?;
            let span = e.span.to(self.prev_span());
            e = Expr::new(ExprKind::Field(Box::new(e), slot), span);
        }
        Ok(e)
    }

    fn entity_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.expected("a name"),
        }
    }

    fn call_arg(&mut self) -> PResult<Expr> {
        let e = self.expr()?;
        if self.eat(&Tok::DotDot) {
            let hi = self.expr()?;
            let span = e.span.to(hi.span);
            return Ok(Expr::new(ExprKind::Range(Box::new(e), Box::new(hi)), span));
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let tok = self.peek().clone();
        let kind = match tok {
            Tok::Int(i) => {
                self.bump();
                ExprKind::Lit(Value::Int(i))
            }
            Tok::Float(x) => {
                self.bump();
                ExprKind::Lit(Value::Float(x))
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Lit(Value::Text(s))
            }
            Tok::Param(p) => {
                self.bump();
                ExprKind::Param(p)
            }
            Tok::At => {
                self.bump();
                ExprKind::EntityLit(self.entity_name()?)
            }
            Tok::AtAt => {
                self.bump();
                ExprKind::WorldLit(self.entity_name()?)
            }
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    ExprKind::Unit
                } else {
                    let first = self.expr()?;
                    if self.eat(&Tok::Comma) {
                        let second = self.expr()?;
                        self.expect(&Tok::RParen)?;
                        ExprKind::Pair(Box::new(first), Box::new(second))
                    } else {
                        self.expect(&Tok::RParen)?;
                        return Ok(Expr::new(first.kind, start.to(self.prev_span())));
                    }
                }
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if self.eat(&Tok::RBracket) {
                            break;
                        }
                        self.expect(&Tok::Comma)?;
                    }
                }
                ExprKind::List(items)
            }
            Tok::Ident(word) => {
                self.bump();
                match word.as_str() {
                    "true" => ExprKind::Lit(Value::Bool(true)),
                    "false" => ExprKind::Lit(Value::Bool(false)),
                    "me" => ExprKind::Me,
                    "myworld" => ExprKind::MyWorld,
                    _ if matches!(self.peek(), Tok::LParen) => {
                        if is_reserved(&word) && word != "exists" {
                            return Err(Diagnostic::error(start, format!("`{word}` is a keyword")));
                        }
                        self.bump();
                        let mut args = Vec::new();
                        if !self.eat(&Tok::RParen) {
                            loop {
                                args.push(self.call_arg()?);
                                if self.eat(&Tok::RParen) {
                                    break;
                                }
                                self.expect(&Tok::Comma)?;
                            }
                        }
                        ExprKind::Call(word, args)
                    }
                    _ if is_reserved(&word) => {
                        return Err(Diagnostic::error(
                            start,
                            format!("expected an expression, found `{word}`"),
                        ));
                    }
                    _ => ExprKind::Var(word),
                }
            }
            _ => return self.expected("an expression"),
        };
        Ok(Expr::new(kind, start.to(self.prev_span())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_transition() {
        let src = r#"
            wait randomValue(1..5000)
            let (x, y) = me.loc
            switch randomValue(1..4) {
              case 1: return { mv_up }
              case 2: return { set_data me.loc = (x + 1, y) }
              default: return
            }
        "#;
        let p = parse_program(src).unwrap();
        assert_eq!(p.body.len(), 3);
        let StmtKind::Switch { cases, default, .. } = &p.body[2].kind else {
            panic!("not a switch")
        };
        assert_eq!(cases.len(), 2);
        assert!(default.is_some());
    }

    #[test]
    fn reports_multiple_errors() {
        let src = "wait\nlet = 3\nreturn { set_data me = 1 }\nwait 1";
        let errs = parse_program(src).unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert_eq!(errs[1].span.line_col(src).0, 2);
    }

    #[test]
    fn guards_and_dynamic_names() {
        let src =
            "return { when not exists(b.heldBy) then set_data b.heldBy = me, rebind_process $who.($proc) = ($t) }";
        let p = parse_program(src).unwrap();
        let StmtKind::Return { updates, .. } = &p.body[0].kind else {
            panic!()
        };
        assert!(matches!(updates[0], UpdateExpr::Guarded(GuardExpr::NotExists(_), _)));
        assert!(matches!(updates[1], UpdateExpr::RebindProcess(_, NameSlot::Dyn(_))));
    }

    #[test]
    fn comparisons_do_not_chain() {
        assert!(parse_program("if 1 < 2 < 3 { }").is_err());
        assert!(parse_program("if not a == b and c { }").is_ok());
    }
}
