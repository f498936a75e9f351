use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ast::Span;
use super::Diagnostic;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Param(String),
    Int(i64),
    Float(f64),
    Str(String),
    At,
    AtAt,
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Dot,
    DotDot,
    Arrow,
    Assign,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Param(s) => format!("`${s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(x) => format!("`{x:?}`"),
            Tok::Str(_) => String::from("string"),
            Tok::Eof => String::from("end of input"),
            other => format!("`{}`", punct(other)),
        }
    }
}

fn punct(t: &Tok) -> &'static str {
    match t {
        Tok::At => "@",
        Tok::AtAt => "@@",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::Comma => ",",
        Tok::Colon => ":",
        Tok::Dot => ".",
        Tok::DotDot => "..",
        Tok::Arrow => "->",
        Tok::Assign => "=",
        Tok::EqEq => "==",
        Tok::Ne => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Percent => "%",
        Tok::Bang => "!",
        _ => "?",
    }
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

pub fn lex(src: &str) -> Result<Vec<(Tok, Span)>, Vec<Diagnostic>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let ch = src[i..].chars().next().expect("in bounds");
        let tok = if is_ident_start(ch) || c == b'$' {
            let param = c == b'$';
            if param {
                i += 1;
            }
            let body = i;
            while i < bytes.len() && is_ident_continue(bytes[i] as char) {
                i += 1;
            }
            let text = String::from(&src[body..i]);
            if param {
                if text.is_empty() {
                    errors.push(Diagnostic::error(
                        Span::new(start, i),
                        "expected a parameter name after `$`",
                    ));
                    continue;
                }
                Tok::Param(text)
            } else {
                Tok::Ident(text)
            }
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            if float {
                Tok::Float(text.parse().expect("checked float syntax"))
            } else {
                match text.parse() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => {
                        errors.push(Diagnostic::error(Span::new(start, i), "integer literal out of range"));
                        continue;
                    }
                }
            }
        } else if c == b'"' {
            match crate::text::Scanner::new(&src[i..]).quoted_prefix() {
                Ok((s, len)) => {
                    i += len;
                    Tok::Str(s)
                }
                Err(msg) => {
                    errors.push(Diagnostic::error(Span::new(start, src.len()), msg));
                    break;
                }
            }
        } else {
            let two = if i + 1 < bytes.len() { &src[i..i + 2] } else { "" };
            let (tok, len) = match two {
                "@@" => (Tok::AtAt, 2),
                ".." => (Tok::DotDot, 2),
                "->" => (Tok::Arrow, 2),
                "==" => (Tok::EqEq, 2),
                "!=" => (Tok::Ne, 2),
                "<=" => (Tok::Le, 2),
                ">=" => (Tok::Ge, 2),
                _ => {
                    let t = match c {
                        b'@' => Tok::At,
                        b'{' => Tok::LBrace,
                        b'}' => Tok::RBrace,
                        b'(' => Tok::LParen,
                        b')' => Tok::RParen,
                        b'[' => Tok::LBracket,
                        b']' => Tok::RBracket,
                        b',' => Tok::Comma,
                        b':' => Tok::Colon,
                        b'.' => Tok::Dot,
                        b'=' => Tok::Assign,
                        b'<' => Tok::Lt,
                        b'>' => Tok::Gt,
                        b'+' => Tok::Plus,
                        b'-' => Tok::Minus,
                        b'*' => Tok::Star,
                        b'/' => Tok::Slash,
                        b'%' => Tok::Percent,
                        b'!' => Tok::Bang,
                        _ => {
                            i += ch.len_utf8();
                            errors.push(Diagnostic::error(
                                Span::new(start, i),
                                format!("unexpected character {ch:?}"),
                            ));
                            continue;
                        }
                    };
                    (t, 1)
                }
            };
            i += len;
            tok
        };
        out.push((tok, Span::new(start, i)));
    }
    out.push((Tok::Eof, Span::new(src.len(), src.len())));
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|(t, _)| t).collect()
    }

    #[test]
    fn ranges_are_not_floats() {
        assert_eq!(toks("1..4"), vec![Tok::Int(1), Tok::DotDot, Tok::Int(4), Tok::Eof]);
        assert_eq!(toks("1.5 2e3"), vec![Tok::Float(1.5), Tok::Float(2000.0), Tok::Eof]);
    }

    #[test]
    fn idents_params_and_comments() {
        assert_eq!(
            toks("let w' = $en.loc # note\n@@w @x"),
            vec![
                Tok::Ident("let".into()),
                Tok::Ident("w'".into()),
                Tok::Assign,
                Tok::Param("en".into()),
                Tok::Dot,
                Tok::Ident("loc".into()),
                Tok::AtAt,
                Tok::Ident("w".into()),
                Tok::At,
                Tok::Ident("x".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn strings_and_errors() {
        assert_eq!(toks(r#""a\"b""#), vec![Tok::Str("a\"b".into()), Tok::Eof]);
        assert!(lex("\"open").is_err());
        assert!(lex("a ~ b").is_err());
    }
}
