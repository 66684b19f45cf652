//! Semi-automated composition of semantically described web services.
//!
//! The crate is organised around the framework's moving parts:
//!
//! * [`ontology`]: OWL-subset model, RDF/XML-subset and canonical JSON codecs, subsumption.
//! * [`profile`]: service profiles (IOPE signatures) and the service catalog.
//! * [`composer`]: single-service matchmaking and forward-chaining composition.
//! * [`merger`]: suggestion-driven ontology merging and the subject pivot.
//! * [`registry`]: users, composite-service records, merged-ontology base, usage log.
//! * [`deployment`]: catalog files tying a domain ontology, profiles and service ontologies together.
//! * [`sim`]: the precomposed-vs-individual portal usage simulator.

pub mod ontology;
pub mod profile;
pub mod composer;
pub mod deployment;
pub mod merger;
pub mod registry;
pub mod sim;
