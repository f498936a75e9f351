use alloc::string::String;
use alloc::sync::Arc;
use core::borrow::Borrow;
use core::fmt;

/// A validated identifier for worlds, entities and properties.
///
/// Names are non-empty and contain no `.`, whitespace or control
/// characters. Cloning is cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("names must not be empty")]
    Empty,
    #[error("invalid character {ch:?} in name {text:?}")]
    InvalidChar { text: String, ch: char },
}

impl Name {
    pub fn new(text: &str) -> Result<Self, NameError> {
        if text.is_empty() {
            return Err(NameError::Empty);
        }
        if let Some(ch) = text.chars().find(|c| *c == '.' || c.is_whitespace() || c.is_control()) {
            return Err(NameError::InvalidChar { text: text.into(), ch });
        }
        Ok(Name(Arc::from(text)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when the name can be written without quotes in canonical text.
    pub fn is_bare(&self) -> bool {
        is_bare_word(&self.0)
    }
}

pub(crate) fn is_bare_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '$'
}

pub(crate) fn is_bare_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_bare_char)
}

impl Borrow<str> for Name {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Name {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl TryFrom<&str> for Name {
    type Error = NameError;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Name::new(value)
    }
}

/// Shorthand used by tests and fixtures; panics on an invalid name.
pub fn name(text: &str) -> Name {
    Name::new(text).unwrap_or_else(|e| panic!("invalid name {text:?}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_dots_whitespace_and_control() {
        assert_eq!(Name::new(""), Err(NameError::Empty));
        assert!(Name::new("a.b").is_err());
        assert!(Name::new("a b").is_err());
        assert!(Name::new("a\u{7}").is_err());
        assert!(Name::new("w'").is_ok());
        assert!(Name::new("inh-1").is_ok());
    }

    #[test]
    fn bare_words() {
        assert!(name("cornOfWisdom").is_bare());
        assert!(name("w'").is_bare());
        assert!(!name("a=b").is_bare());
        assert!(!name("inh-1").is_bare());
    }
}
