//! Suggestion-driven merging of two ontologies and the subject pivot that
//! regroups individuals by a shared property value.

mod pivot;
mod session;
pub mod similarity;

pub use pivot::{pivot_by_property, PivotOptions};
pub use session::{
    apply_decision, auto_merge, merge_all, open_session, replay, suggest, DatatypeReconciliation,
    MergeDecision, MergeSession, MergeSettings, MergeSuggestion, Origin, SessionStatus, Side,
    SuggestionKind, Verdict,
};

use thiserror::Error;

use crate::ontology::{Iri, OntologyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("session is finalized")]
    SessionFinalized,
    #[error("no pending suggestion with id {0}")]
    UnknownSuggestion(u64),
    #[error("{0} already exists")]
    NameCollision(Iri),
    #[error("suggestions still pending: {0:?}")]
    PendingRemain(Vec<u64>),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("attributes cannot be unified: {0}")]
    IncompatibleAttributes(String),
    #[error("property {0} does not exist")]
    MissingProperty(Iri),
    #[error("property {0} is not a data property")]
    NotDataProperty(Iri),
    #[error("class {0} does not exist")]
    UnknownClass(Iri),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

impl MergeError {
    pub fn code(&self) -> &'static str {
        match self {
            MergeError::SessionFinalized => "SESSION_FINALIZED",
            MergeError::UnknownSuggestion(_) => "UNKNOWN_SUGGESTION",
            MergeError::NameCollision(_) => "NAME_COLLISION",
            MergeError::PendingRemain(_) => "PENDING_REMAIN",
            MergeError::InvalidDecision(_) => "INVALID_DECISION",
            MergeError::IncompatibleAttributes(_) => "INCOMPATIBLE_ATTRIBUTES",
            MergeError::MissingProperty(_) => "MISSING_PROPERTY",
            MergeError::NotDataProperty(_) => "NOT_DATA_PROPERTY",
            MergeError::UnknownClass(_) => "UNKNOWN_CLASS",
            MergeError::Ontology(e) => e.code(),
        }
    }
}
