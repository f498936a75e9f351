//! Data entry values and their canonical text rendering.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::name::Name;

/// A data entry value.
///
/// The canonical rendering (via `Display`) is the single textual form used by
/// snapshots, traces, `inspect` output and TDL literals: `()`, `true`, `42`,
/// `2.5`, `"text"`, `(2,5)`, `[1,2]`, `@corn1` (entity reference) and
/// `@@w_ada` (world reference).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Coord(i64, i64),
    List(Vec<Value>),
    EntityRef(Name),
    WorldRef(Name),
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Text(s.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Text(_) => "text",
            Value::Coord(..) => "coord",
            Value::List(_) => "list",
            Value::EntityRef(_) => "entity reference",
            Value::WorldRef(_) => "world reference",
        }
    }

    /// Calls `f` on every entity and world reference, including those nested
    /// in lists.
    pub fn visit_refs(&self, f: &mut impl FnMut(&Value)) {
        match self {
            Value::EntityRef(_) | Value::WorldRef(_) => f(self),
            Value::List(items) => items.iter().for_each(|v| v.visit_refs(f)),
            _ => {}
        }
    }
}

/// A value as seen by an evaluator: either a plain [`Value`] or an entity
/// located in a specific world.
///
/// Data entries only store entity names; reading an `EntityRef` out of world
/// `w` yields `Datum::Entity { world: w, .. }`. Rendered as `@w.e`.
#[derive(Debug, Clone, PartialEq)]
pub enum Datum {
    Value(Value),
    Entity { world: Name, entity: Name },
}

impl Datum {
    /// Drops the world of a located entity.
    pub fn into_value(self) -> Value {
        match self {
            Datum::Value(v) => v,
            Datum::Entity { entity, .. } => Value::EntityRef(entity),
        }
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Datum::Value(v) => Some(v),
            Datum::Entity { .. } => None,
        }
    }
}

impl From<Value> for Datum {
    fn from(v: Value) -> Self {
        Datum::Value(v)
    }
}

pub(crate) fn write_quoted(f: &mut impl Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c if c.is_control() => write!(f, "\\u{{{:x}}}", c as u32)?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

/// Writes a name bare when possible, quoted otherwise.
pub(crate) fn write_name(f: &mut impl Write, n: &Name) -> fmt::Result {
    if n.is_bare() {
        f.write_str(n.as_str())
    } else {
        write_quoted(f, n.as_str())
    }
}

fn write_float(f: &mut impl Write, x: f64) -> fmt::Result {
    if x.is_nan() {
        f.write_str("nan")
    } else if x.is_infinite() {
        f.write_str(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        // Debug is shortest-round-trip and always keeps a `.` or exponent.
        write!(f, "{x:?}")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write_float(f, *x),
            Value::Text(s) => write_quoted(f, s),
            Value::Coord(x, y) => write!(f, "({x},{y})"),
            Value::List(items) => {
                f.write_char('[')?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_char(',')?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_char(']')
            }
            Value::EntityRef(n) => {
                f.write_char('@')?;
                write_name(f, n)
            }
            Value::WorldRef(n) => {
                f.write_str("@@")?;
                write_name(f, n)
            }
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Value(v) => write!(f, "{v}"),
            Datum::Entity { world, entity } => {
                f.write_char('@')?;
                write_name(f, world)?;
                f.write_char('.')?;
                write_name(f, entity)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name::name;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn canonical_rendering() {
        assert_eq!(Value::Coord(2, 5).to_string(), "(2,5)");
        assert_eq!(Value::Float(2.0).to_string(), "2.0");
        assert_eq!(Value::Float(1e300).to_string(), "1e300");
        assert_eq!(Value::Float(f64::NEG_INFINITY).to_string(), "-inf");
        assert_eq!(Value::text("a\"b\n").to_string(), r#""a\"b\n""#);
        assert_eq!(
            Value::List(vec![Value::text("corn"), Value::Int(-3)]).to_string(),
            r#"["corn",-3]"#
        );
        assert_eq!(Value::EntityRef(name("ch")).to_string(), "@ch");
        assert_eq!(Value::EntityRef(name("a,b")).to_string(), r#"@"a,b""#);
        assert_eq!(Value::WorldRef(name("w_ada")).to_string(), "@@w_ada");
        let located = Datum::Entity {
            world: name("w"),
            entity: name("ch"),
        };
        assert_eq!(located.to_string(), "@w.ch");
    }
}
