use thiserror::Error;

use super::{Datatype, Iri};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unresolved reference {iri} ({context})")]
    UnresolvedRef { iri: String, context: String },
    #[error("subclass cycle through {0}")]
    Cycle(Iri),
    #[error("literal {lexical:?} is not a valid {datatype} (property {property})")]
    BadDatatype {
        property: Iri,
        lexical: String,
        datatype: Datatype,
    },
    #[error("unknown class {0}")]
    UnknownClass(Iri),
    #[error("invalid ontology: {0}")]
    Invalid(String),
}

impl OntologyError {
    pub fn code(&self) -> &'static str {
        match self {
            OntologyError::Syntax { .. } => "SYNTAX",
            OntologyError::UnresolvedRef { .. } => "UNRESOLVED_REF",
            OntologyError::Cycle(_) => "CYCLE",
            OntologyError::BadDatatype { .. } => "BAD_DATATYPE",
            OntologyError::UnknownClass(_) => "UNKNOWN_CLASS",
            OntologyError::Invalid(_) => "INVALID_ONTOLOGY",
        }
    }

    pub(crate) fn unresolved(iri: &Iri, context: impl Into<String>) -> Self {
        OntologyError::UnresolvedRef {
            iri: iri.to_string(),
            context: context.into(),
        }
    }

    /// Converts a byte offset into `input` to a 1-based line/column pair.
    pub(crate) fn syntax_at(input: &[u8], offset: usize, message: impl Into<String>) -> Self {
        let offset = offset.min(input.len());
        let before = &input[..offset];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let line_start = before
            .iter()
            .rposition(|&b| b == b'\n')
            .map(|p| p + 1)
            .unwrap_or(0);
        let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
        OntologyError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}
