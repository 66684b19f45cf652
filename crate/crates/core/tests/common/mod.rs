#![allow(dead_code)]

use std::path::PathBuf;

use precompose_core::ontology::{parse_ontology, Format, Iri, Ontology};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("reading fixture {name}: {e}"))
}

pub fn load_owl(name: &str) -> Ontology {
    parse_ontology(&fixture_bytes(name), Format::RdfXmlSubset)
        .unwrap_or_else(|e| panic!("parsing {name}: {e}"))
}

pub fn iri(s: &str) -> Iri {
    Iri::new(s).unwrap()
}

pub fn load_deployment() -> precompose_core::deployment::Deployment {
    precompose_core::deployment::Deployment::load(&fixture_path("elearning_catalog.json"))
        .unwrap_or_else(|e| panic!("loading catalog: {e}"))
}

pub fn load_request(name: &str) -> precompose_core::composer::CompositionRequest {
    serde_json::from_slice(&fixture_bytes(&format!("requests/{name}.json")))
        .unwrap_or_else(|e| panic!("parsing request {name}: {e}"))
}
