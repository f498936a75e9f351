//! Canonical text forms of values, guards and updates, and their parsers.
//!
//! Updates render as one line each, for example
//! `set_data w.ch.loc=(2,5)`, `copy_properties w.a->w.b[diet,served]` or
//! `when exists(w.banana.loc) then delete_data w.banana.loc`. These lines
//! feed the replay hash and the trace, so rendering is stable.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::model::{Path, TransitionDescription};
use crate::name::{is_bare_char, Name};
use crate::update::{CompareOp, CoreUpdate, Expanded, Guard, KeyFilter, Update};
use crate::value::{write_name, write_quoted, Datum, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at byte {pos}: {msg}")]
pub struct TextError {
    pub pos: usize,
    pub msg: String,
}

pub(crate) struct Scanner<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Scanner { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TextError> {
        Err(TextError {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.ws();
        self.rest().chars().next()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), TextError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.err(format!("expected `{token}`"))
        }
    }

    fn at_end(&mut self) -> bool {
        self.ws();
        self.pos == self.src.len()
    }

    fn finish(&mut self) -> Result<(), TextError> {
        if self.at_end() {
            Ok(())
        } else {
            self.err("trailing input")
        }
    }

    fn bare_word(&mut self) -> Option<&'a str> {
        self.ws();
        let rest = self.rest();
        let len = rest.find(|c: char| !is_bare_char(c)).unwrap_or(rest.len());
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&rest[..len])
    }

    /// Peeks at the next bare word without consuming it.
    fn peek_word(&mut self) -> Option<&'a str> {
        let save = self.pos;
        let w = self.bare_word();
        self.pos = save;
        w
    }

    fn quoted(&mut self) -> Result<String, TextError> {
        self.ws();
        let start = self.pos;
        let mut chars = self.rest().char_indices();
        match chars.next() {
            Some((_, '"')) => {}
            _ => return self.err("expected a string"),
        }
        let mut out = String::new();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos = start + i + 1;
                    return Ok(out);
                }
                '\\' => {
                    let Some((_, e)) = chars.next() else { break };
                    match e {
                        '"' => out.push('"'),
                        '\\' => out.push('\\'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        'u' => {
                            if !matches!(chars.next(), Some((_, '{'))) {
                                break;
                            }
                            let mut hex = String::new();
                            for (_, h) in chars.by_ref() {
                                if h == '}' {
                                    break;
                                }
                                hex.push(h);
                            }
                            match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                                Some(ch) => out.push(ch),
                                None => return self.err("invalid unicode escape"),
                            }
                        }
                        _ => return self.err(format!("unknown escape `\\{e}`")),
                    }
                }
                c => out.push(c),
            }
        }
        self.pos = start;
        self.err("unterminated string")
    }

    /// Reads a string literal at the start of the input; returns it with
    /// the number of bytes consumed.
    pub(crate) fn quoted_prefix(mut self) -> Result<(String, usize), String> {
        match self.quoted() {
            Ok(s) => Ok((s, self.pos)),
            Err(e) => Err(e.msg),
        }
    }

    fn name(&mut self) -> Result<Name, TextError> {
        let text = if self.peek() == Some('"') {
            self.quoted()?
        } else {
            match self.bare_word() {
                Some(w) => String::from(w),
                None => return self.err("expected a name"),
            }
        };
        Name::new(&text).or_else(|e| self.err(format!("{e}")))
    }

    /// Reads `name(.name)*` with at most `max` segments.
    fn names(&mut self, max: usize) -> Result<Vec<Name>, TextError> {
        let mut out = alloc::vec![self.name()?];
        while out.len() < max && self.rest().starts_with('.') {
            self.pos += 1;
            out.push(self.name()?);
        }
        Ok(out)
    }

    fn path(&mut self) -> Result<Path, TextError> {
        let mut it = self.names(3)?.into_iter();
        Ok(Path {
            world: it.next().expect("one segment"),
            entity: it.next(),
            property: it.next(),
        })
    }

    fn two(&mut self) -> Result<(Name, Name), TextError> {
        let mut n = self.names(2)?;
        if n.len() != 2 {
            return self.err("expected `world.entity`");
        }
        let e = n.pop().expect("two");
        Ok((n.pop().expect("two"), e))
    }

    fn three(&mut self) -> Result<(Name, Name, Name), TextError> {
        let mut n = self.names(3)?;
        if n.len() != 3 {
            return self.err("expected `world.entity.property`");
        }
        let p = n.pop().expect("three");
        let e = n.pop().expect("three");
        Ok((n.pop().expect("three"), e, p))
    }

    fn number(&mut self) -> Result<Value, TextError> {
        self.ws();
        let rest = self.rest();
        let neg = rest.starts_with('-');
        let body = &rest[neg as usize..];
        for (word, x) in [("nan", f64::NAN), ("inf", f64::INFINITY)] {
            if body.starts_with(word) && !body[word.len()..].starts_with(is_bare_char) {
                self.pos += neg as usize + word.len();
                return Ok(Value::Float(if neg { -x } else { x }));
            }
        }
        let mut len = neg as usize;
        let bytes = rest.as_bytes();
        let mut float = false;
        while len < bytes.len() {
            let b = bytes[len];
            let exp_sign = (b == b'-' || b == b'+') && len > 0 && matches!(bytes[len - 1], b'e' | b'E');
            if b.is_ascii_digit() || exp_sign {
                len += 1;
            } else if (b == b'.' && len + 1 < bytes.len() && bytes[len + 1].is_ascii_digit())
                || ((b == b'e' || b == b'E') && len > neg as usize)
            {
                float = true;
                len += 1;
            } else {
                break;
            }
        }
        let text = &rest[..len];
        if len == neg as usize {
            return self.err("expected a value");
        }
        let v = if float {
            text.parse::<f64>().ok().map(Value::Float)
        } else {
            text.parse::<i64>().ok().map(Value::Int)
        };
        match v {
            Some(v) => {
                self.pos += len;
                Ok(v)
            }
            None => self.err(format!("invalid number `{text}`")),
        }
    }

    fn int(&mut self) -> Result<i64, TextError> {
        match self.number()? {
            Value::Int(i) => Ok(i),
            _ => self.err("expected an integer"),
        }
    }

    pub(crate) fn value(&mut self) -> Result<Value, TextError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                if self.eat(")") {
                    return Ok(Value::Unit);
                }
                let x = self.int()?;
                self.expect(",")?;
                let y = self.int()?;
                self.expect(")")?;
                Ok(Value::Coord(x, y))
            }
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat("]") {
                    loop {
                        items.push(self.value()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Value::List(items))
            }
            Some('"') => Ok(Value::Text(self.quoted()?)),
            Some('@') => {
                self.pos += 1;
                if self.rest().starts_with('@') {
                    self.pos += 1;
                    Ok(Value::WorldRef(self.name()?))
                } else {
                    Ok(Value::EntityRef(self.name()?))
                }
            }
            Some(_) => match self.peek_word() {
                Some("true") => {
                    self.bare_word();
                    Ok(Value::Bool(true))
                }
                Some("false") => {
                    self.bare_word();
                    Ok(Value::Bool(false))
                }
                _ => self.number(),
            },
            None => self.err("expected a value"),
        }
    }

    fn datum(&mut self) -> Result<Datum, TextError> {
        let save = self.pos;
        if self.eat("@") && !self.rest().starts_with('@') {
            let names = self.names(2)?;
            if let [world, entity] = &names[..] {
                return Ok(Datum::Entity {
                    world: world.clone(),
                    entity: entity.clone(),
                });
            }
        }
        self.pos = save;
        Ok(Datum::Value(self.value()?))
    }

    fn guard(&mut self) -> Result<Guard, TextError> {
        if self.eat("!exists(") {
            let p = self.path()?;
            self.expect(")")?;
            return Ok(Guard::NotExists(p));
        }
        if self.eat("exists(") {
            let p = self.path()?;
            self.expect(")")?;
            return Ok(Guard::Exists(p));
        }
        let p = self.path()?;
        let ops = [
            ("==", None),
            ("!=", Some(CompareOp::Ne)),
            ("<=", Some(CompareOp::Le)),
            (">=", Some(CompareOp::Ge)),
            ("<", Some(CompareOp::Lt)),
            (">", Some(CompareOp::Gt)),
        ];
        for (tok, op) in ops {
            if self.eat(tok) {
                let v = self.value()?;
                return Ok(match op {
                    None => Guard::Equals(p, v),
                    Some(op) => Guard::Compare(p, op, v),
                });
            }
        }
        self.err("expected a comparison")
    }

    fn core_update(&mut self) -> Result<CoreUpdate, TextError> {
        let Some(kw) = self.bare_word() else {
            return self.err("expected an update");
        };
        Ok(match kw {
            "set_data" => {
                let (world, entity, key) = self.three()?;
                self.expect("=")?;
                CoreUpdate::SetData {
                    world,
                    entity,
                    key,
                    value: self.value()?,
                }
            }
            "delete_data" => {
                let (world, entity, key) = self.three()?;
                CoreUpdate::DeleteData { world, entity, key }
            }
            "set_transition" => {
                let (world, entity, key) = self.three()?;
                self.expect("=")?;
                let semantics = self.name()?;
                let source = self.quoted()?;
                let transition = TransitionDescription::new(key.clone(), semantics, &source);
                CoreUpdate::SetTransition {
                    world,
                    entity,
                    key,
                    transition,
                }
            }
            "delete_transition" => {
                let (world, entity, key) = self.three()?;
                CoreUpdate::DeleteTransition { world, entity, key }
            }
            "start_process" | "rebind_process" => {
                let (world, entity, process) = self.three()?;
                self.expect("=")?;
                let transition = self.name()?;
                if kw == "start_process" {
                    CoreUpdate::StartProcess {
                        world,
                        entity,
                        process,
                        transition,
                    }
                } else {
                    CoreUpdate::RebindProcess {
                        world,
                        entity,
                        process,
                        transition,
                    }
                }
            }
            "cancel_process" => {
                let (world, entity, process) = self.three()?;
                CoreUpdate::CancelProcess { world, entity, process }
            }
            "create_entity" => {
                let (world, entity) = self.two()?;
                CoreUpdate::CreateEntity { world, entity }
            }
            "delete_entity" => {
                let (world, entity) = self.two()?;
                CoreUpdate::DeleteEntity { world, entity }
            }
            "add_world" => {
                let world = self.name()?;
                let copy_from = if self.peek_word() == Some("from") {
                    self.bare_word();
                    Some(self.name()?)
                } else {
                    None
                };
                CoreUpdate::AddWorld { world, copy_from }
            }
            "delete_world" => CoreUpdate::DeleteWorld { world: self.name()? },
            "copy_properties" => {
                let (src_world, src_entity) = self.two()?;
                self.expect("->")?;
                let (dst_world, dst_entity) = self.two()?;
                self.expect("[")?;
                let keys = if self.eat("*") {
                    KeyFilter::All
                } else {
                    let mut ks = Vec::new();
                    if self.peek() != Some(']') {
                        loop {
                            ks.push(self.name()?);
                            if !self.eat(",") {
                                break;
                            }
                        }
                    }
                    KeyFilter::Keys(ks)
                };
                self.expect("]")?;
                CoreUpdate::CopyProperties {
                    src_world,
                    src_entity,
                    dst_world,
                    dst_entity,
                    keys,
                }
            }
            other => return self.err(format!("unknown update `{other}`")),
        })
    }

    fn update(&mut self) -> Result<Update, TextError> {
        match self.peek_word() {
            Some("when") => {
                self.bare_word();
                let guard = self.guard()?;
                if self.bare_word() != Some("then") {
                    return self.err("expected `then`");
                }
                Ok(Update::Guarded {
                    guard,
                    inner: self.core_update()?,
                })
            }
            Some(w) if is_core_keyword(w) => Ok(Update::Core(self.core_update()?)),
            Some(_) => {
                let name = self.name()?;
                let mut args = Vec::new();
                if self.eat("(") && !self.eat(")") {
                    loop {
                        args.push(self.value()?);
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Update::Macro { name, args })
            }
            None => self.err("expected an update"),
        }
    }
}

pub(crate) const CORE_KEYWORDS: [&str; 12] = [
    "set_data",
    "delete_data",
    "set_transition",
    "delete_transition",
    "start_process",
    "cancel_process",
    "rebind_process",
    "create_entity",
    "delete_entity",
    "add_world",
    "delete_world",
    "copy_properties",
];

pub(crate) fn is_core_keyword(w: &str) -> bool {
    CORE_KEYWORDS.contains(&w)
}

/// Decodes a complete quoted string literal.
pub fn unquote(s: &str) -> Option<String> {
    let mut sc = Scanner::new(s);
    let out = sc.quoted().ok()?;
    sc.at_end().then_some(out)
}

fn whole<T>(s: &str, f: impl FnOnce(&mut Scanner<'_>) -> Result<T, TextError>) -> Result<T, TextError> {
    let mut sc = Scanner::new(s);
    let v = f(&mut sc)?;
    sc.finish()?;
    Ok(v)
}

pub fn parse_value(s: &str) -> Result<Value, TextError> {
    whole(s, |sc| sc.value())
}

pub fn parse_datum(s: &str) -> Result<Datum, TextError> {
    whole(s, |sc| sc.datum())
}

pub fn parse_guard(s: &str) -> Result<Guard, TextError> {
    whole(s, |sc| sc.guard())
}

pub fn parse_update(s: &str) -> Result<Update, TextError> {
    whole(s, |sc| sc.update())
}

pub fn parse_expanded(s: &str) -> Result<Expanded, TextError> {
    match parse_update(s)? {
        Update::Core(core) => Ok(Expanded { guard: None, core }),
        Update::Guarded { guard, inner } => Ok(Expanded {
            guard: Some(guard),
            core: inner,
        }),
        Update::Macro { name, .. } => Err(TextError {
            pos: 0,
            msg: format!("`{name}` is a macro, not a core update"),
        }),
    }
}

// ---------------------------------------------------------------------------
// rendering

struct Dotted<'a>(&'a [&'a Name]);

impl fmt::Display for Dotted<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char('.')?;
            }
            write_name(f, n)?;
        }
        Ok(())
    }
}

impl fmt::Display for KeyFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_char('[')?;
        match self {
            KeyFilter::All => f.write_char('*')?,
            KeyFilter::Keys(ks) => {
                for (i, k) in ks.iter().enumerate() {
                    if i > 0 {
                        f.write_char(',')?;
                    }
                    write_name(f, k)?;
                }
            }
        }
        f.write_char(']')
    }
}

impl fmt::Display for CoreUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CoreUpdate::*;
        match self {
            SetData {
                world,
                entity,
                key,
                value,
            } => {
                write!(f, "set_data {}={value}", Dotted(&[world, entity, key]))
            }
            DeleteData { world, entity, key } => write!(f, "delete_data {}", Dotted(&[world, entity, key])),
            SetTransition {
                world,
                entity,
                key,
                transition,
            } => {
                write!(f, "set_transition {}=", Dotted(&[world, entity, key]))?;
                write_name(f, &transition.semantics)?;
                f.write_char(' ')?;
                write_quoted(f, &transition.source)
            }
            DeleteTransition { world, entity, key } => {
                write!(f, "delete_transition {}", Dotted(&[world, entity, key]))
            }
            StartProcess {
                world,
                entity,
                process,
                transition,
            } => {
                write!(f, "start_process {}=", Dotted(&[world, entity, process]))?;
                write_name(f, transition)
            }
            CancelProcess { world, entity, process } => {
                write!(f, "cancel_process {}", Dotted(&[world, entity, process]))
            }
            RebindProcess {
                world,
                entity,
                process,
                transition,
            } => {
                write!(f, "rebind_process {}=", Dotted(&[world, entity, process]))?;
                write_name(f, transition)
            }
            CreateEntity { world, entity } => write!(f, "create_entity {}", Dotted(&[world, entity])),
            DeleteEntity { world, entity } => write!(f, "delete_entity {}", Dotted(&[world, entity])),
            AddWorld { world, copy_from } => {
                f.write_str("add_world ")?;
                write_name(f, world)?;
                if let Some(src) = copy_from {
                    f.write_str(" from ")?;
                    write_name(f, src)?;
                }
                Ok(())
            }
            DeleteWorld { world } => {
                f.write_str("delete_world ")?;
                write_name(f, world)
            }
            CopyProperties {
                src_world,
                src_entity,
                dst_world,
                dst_entity,
                keys,
            } => write!(
                f,
                "copy_properties {}->{}{keys}",
                Dotted(&[src_world, src_entity]),
                Dotted(&[dst_world, dst_entity])
            ),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Exists(p) => write!(f, "exists({p})"),
            Guard::NotExists(p) => write!(f, "!exists({p})"),
            Guard::Equals(p, v) => write!(f, "{p}=={v}"),
            Guard::Compare(p, op, v) => {
                let op = match op {
                    CompareOp::Lt => "<",
                    CompareOp::Le => "<=",
                    CompareOp::Gt => ">",
                    CompareOp::Ge => ">=",
                    CompareOp::Ne => "!=",
                };
                write!(f, "{p}{op}{v}")
            }
        }
    }
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Update::Core(c) => write!(f, "{c}"),
            Update::Guarded { guard, inner } => write!(f, "when {guard} then {inner}"),
            Update::Macro { name, args } => {
                write_name(f, name)?;
                if !args.is_empty() {
                    f.write_char('(')?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_char(',')?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_char(')')?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expanded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.guard {
            Some(g) => write!(f, "when {g} then {}", self.core),
            None => write!(f, "{}", self.core),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::name;
    use alloc::string::ToString;

    #[test]
    fn values_round_trip() {
        for text in [
            "()",
            "true",
            "-42",
            "2.5",
            "-0.0",
            "1e300",
            "nan",
            "-inf",
            r#""blood pudding""#,
            r#""a\"b\\c\n""#,
            "(2,-5)",
            "[]",
            r#"[1,"x",[(0,0)]]"#,
            "@corn1",
            "@@w_ada",
            r#"@"a-b""#,
        ] {
            let v = parse_value(text).unwrap();
            assert_eq!(v.to_string(), text, "{text}");
        }
        assert_eq!(parse_value("  ( 2 , 5 ) ").unwrap(), Value::Coord(2, 5));
        assert_eq!(parse_value("7").unwrap(), Value::Int(7));
        assert!(parse_value("(1,2").is_err());
        assert!(parse_value("1 2").is_err());
        assert!(parse_value("").is_err());
    }

    #[test]
    fn located_entities() {
        assert_eq!(
            parse_datum("@w.ch").unwrap(),
            Datum::Entity {
                world: name("w"),
                entity: name("ch")
            }
        );
        assert_eq!(parse_datum("@ch").unwrap(), Datum::Value(Value::EntityRef(name("ch"))));
    }

    #[test]
    fn unquote_requires_complete_literal() {
        assert_eq!(unquote(r#""a.b""#).as_deref(), Some("a.b"));
        assert_eq!(unquote(r#""a"x"#), None);
        assert_eq!(unquote(r#""abc"#), None);
    }

    #[test]
    fn updates_round_trip() {
        for text in [
            "set_data w.ch.loc=(2,5)",
            "delete_data w.corn1.loc",
            r#"set_transition w.ch.mvSmart=tdl "wait 1\nreturn {}""#,
            "delete_transition w.ch.mvRand",
            "start_process w.corn1.beenEaten=beenEaten",
            "cancel_process w'.barker.watchPeople",
            "rebind_process w.ch.move=mvSmart",
            "create_entity w.newborn",
            "delete_entity w.corn1",
            "add_world w'",
            "add_world w' from w_barker",
            "delete_world w'",
            "copy_properties w.englishProto->w'.ada[diet,preferredDish]",
            "copy_properties w.a->w.b[*]",
            "when exists(w.banana.loc) then delete_data w.banana.loc",
            "when !exists(w.banana.heldBy) then set_data w.banana.heldBy=@monkey1",
            "when w.ch.hungry==true then delete_data w.ch.hungry",
            "when w.ch.age>=3 then delete_entity w.ch",
            "delete_me",
            r#"eatCorn(@corn1)"#,
            r#"changeTransition(@ch1,"move","mvSmart")"#,
            r#"set_data "a-b".c.d="""#,
        ] {
            let u = parse_update(text).unwrap();
            assert_eq!(u.to_string(), text, "{text}");
        }
    }

    #[test]
    fn expanded_rejects_macros() {
        assert!(parse_expanded("delete_me").is_err());
        let e = parse_expanded("when exists(w.a.b) then delete_data w.a.b").unwrap();
        assert!(e.guard.is_some());
    }
}
