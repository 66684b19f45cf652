use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An IRI as used throughout the ontology subset: either an absolute IRI
/// (`http://example.org/lrl#EBOOKS`) or a fragment reference (`#bk101`)
/// resolved against the ontology's namespace.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Iri(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IriError {
    #[error("IRI must not be empty")]
    Empty,
    #[error("IRI {0:?} contains whitespace")]
    Whitespace(String),
    #[error("IRI {0:?} is neither absolute nor a fragment reference")]
    NotAbsolute(String),
}

impl std::str::FromStr for Iri {
    type Err = IriError;

    fn from_str(s: &str) -> Result<Self, IriError> {
        Iri::new(s)
    }
}

impl Iri {
    pub fn new(value: impl Into<String>) -> Result<Self, IriError> {
        let value = value.into();
        if value.is_empty() || value == "#" {
            return Err(IriError::Empty);
        }
        if value.chars().any(char::is_whitespace) {
            return Err(IriError::Whitespace(value));
        }
        if !value.starts_with('#') && !is_absolute(&value) {
            return Err(IriError::NotAbsolute(value));
        }
        Ok(Iri(value))
    }

    /// Builds the fragment reference `#name`.
    pub fn fragment(name: &str) -> Result<Self, IriError> {
        Iri::new(format!("#{name}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_fragment(&self) -> bool {
        self.0.starts_with('#')
    }

    /// The part after the last `#` or `/`.
    pub fn local_name(&self) -> &str {
        let cut = self.0.rfind(['#', '/']).map(|i| i + 1).unwrap_or(0);
        &self.0[cut..]
    }

    /// Everything up to and including the last `#` or `/`.
    pub fn namespace_part(&self) -> &str {
        let cut = self.0.rfind(['#', '/']).map(|i| i + 1).unwrap_or(0);
        &self.0[..cut]
    }

    /// Same namespace, different local name.
    pub fn with_local_name(&self, local: &str) -> Result<Self, IriError> {
        Iri::new(format!("{}{}", self.namespace_part(), local))
    }
}

fn is_absolute(value: &str) -> bool {
    match value.find(':') {
        Some(colon) if colon > 0 => {
            let scheme = &value[..colon];
            scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        _ => false,
    }
}

/// XML NCName check, restricted to ASCII: names used as element names in the
/// RDF/XML subset (property local names, annotation keys).
pub fn is_ncname(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl TryFrom<String> for Iri {
    type Error = IriError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Iri::new(value)
    }
}

impl TryFrom<&str> for Iri {
    type Error = IriError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Iri::new(value)
    }
}

impl From<Iri> for String {
    fn from(iri: Iri) -> String {
        iri.0
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

impl AsRef<str> for Iri {
    fn as_ref(&self) -> &str {
        &self.0
    }
}
