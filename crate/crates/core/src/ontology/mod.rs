//! Data model, parsers, serializers and subsumption reasoner for the OWL
//! subset used by service ontologies.

mod datatype;
mod error;
mod iri;
pub mod json;
mod model;
pub mod rdfxml;
mod reasoner;

use std::path::Path;
use std::str::FromStr;

pub use datatype::{Datatype, XSD_NS};
pub use error::OntologyError;
pub use iri::{is_ncname, Iri, IriError};
pub use model::{
    Individual, Ontology, OntologyClass, PropertyDef, PropertyKind, PropertyRange, Value,
};
pub use reasoner::{is_subclass_of, match_degree, ClassHierarchy, MatchDegree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    RdfXmlSubset,
    CanonicalJson,
}

impl Format {
    /// `.owl`/`.rdf`/`.xml` → RDF/XML subset, anything else → canonical JSON.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("owl" | "rdf" | "xml") => Format::RdfXmlSubset,
            _ => Format::CanonicalJson,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rdfxml" | "owl" | "xml" => Ok(Format::RdfXmlSubset),
            "json" => Ok(Format::CanonicalJson),
            other => Err(format!("unknown ontology format {other:?}")),
        }
    }
}

pub fn parse_ontology(document: &[u8], format: Format) -> Result<Ontology, OntologyError> {
    match format {
        Format::RdfXmlSubset => rdfxml::parse(document),
        Format::CanonicalJson => json::parse(document),
    }
}

/// Deterministic: classes, then properties, then individuals, each sorted by IRI.
pub fn serialize_ontology(o: &Ontology, format: Format) -> Vec<u8> {
    match format {
        Format::RdfXmlSubset => rdfxml::serialize(o),
        Format::CanonicalJson => json::serialize(o),
    }
}
