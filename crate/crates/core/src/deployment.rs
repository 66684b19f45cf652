//! Catalog files: the domain ontology, the member-service profiles, and the
//! per-service ontologies merged when a composite is published.
//!
//! Paths inside a catalog file are relative to the file's directory. Any
//! entry may instead be given inline as a JSON document.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merger::{merge_all, pivot_by_property, MergeError, MergeSettings, PivotOptions};
use crate::ontology::{self, Format, Iri, Ontology, OntologyError, PropertyKind};
use crate::profile::{self, ProfileError, ServiceCatalog};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PivotSpec {
    pub property: Iri,
    /// Source class → local name of the link property.
    pub links: BTreeMap<Iri, String>,
    #[serde(default = "first_number")]
    pub first_number: u64,
}

fn first_number() -> u64 {
    1
}

#[derive(Debug, Clone)]
pub struct Deployment {
    pub catalog: ServiceCatalog,
    pub service_ontologies: BTreeMap<Iri, Ontology>,
    pub pivot: Option<PivotSpec>,
}

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Ontology {
        origin: String,
        #[source]
        source: OntologyError,
    },
    #[error("{origin}: {source}")]
    Profile {
        origin: String,
        #[source]
        source: ProfileError,
    },
    #[error("catalog file: {0}")]
    Syntax(String),
    #[error("service ontology given for unregistered service {0}")]
    UnknownService(Iri),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    ontology: Source,
    #[serde(default)]
    profiles: Vec<Source>,
    #[serde(default)]
    service_ontologies: BTreeMap<Iri, Source>,
    pivot: Option<PivotSpec>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Source {
    Path(String),
    Inline(serde_json::Value),
}

impl Deployment {
    pub fn load(path: &Path) -> Result<Deployment, DeploymentError> {
        let bytes = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Deployment::from_slice(&bytes, base)
    }

    pub fn from_slice(bytes: &[u8], base: &Path) -> Result<Deployment, DeploymentError> {
        let file: CatalogFile =
            serde_json::from_slice(bytes).map_err(|e| DeploymentError::Syntax(e.to_string()))?;
        let domain = load_ontology(&file.ontology, base)?;
        let mut catalog = ServiceCatalog::new(domain);
        for src in &file.profiles {
            let (origin, p) = match src {
                Source::Path(rel) => {
                    let p = base.join(rel);
                    (rel.clone(), profile::parse_profile(&read(&p)?))
                }
                Source::Inline(v) => ("inline profile".to_string(), profile::profile_from_value(v.clone())),
            };
            let p = p.map_err(|source| DeploymentError::Profile {
                origin: origin.clone(),
                source,
            })?;
            catalog = catalog
                .register_profile(p)
                .map_err(|source| DeploymentError::Profile { origin, source })?;
        }
        let mut service_ontologies = BTreeMap::new();
        for (service, src) in &file.service_ontologies {
            if catalog.get(service).is_none() {
                return Err(DeploymentError::UnknownService(service.clone()));
            }
            service_ontologies.insert(service.clone(), load_ontology(src, base)?);
        }
        Ok(Deployment {
            catalog,
            service_ontologies,
            pivot: file.pivot,
        })
    }
}

impl Deployment {
    /// Ontology describing a composite of `services`: the members' service
    /// ontologies merged unattended in order, then pivoted when the pivot
    /// applies to the result. Members without a service ontology are skipped;
    /// if none has one, the domain classes the members mention (and their
    /// ancestors) stand in.
    pub fn merged_ontology<'a>(
        &self,
        services: impl IntoIterator<Item = &'a Iri>,
    ) -> Result<Ontology, MergeError> {
        let mut members: Vec<&Iri> = Vec::new();
        for s in services {
            if !members.contains(&s) {
                members.push(s);
            }
        }
        let sources: Vec<Ontology> = members
            .iter()
            .filter_map(|s| self.service_ontologies.get(*s).cloned())
            .collect();
        let merged = match merge_all(&sources, MergeSettings::default())? {
            Some(o) => o,
            None => return Ok(self.domain_projection(&members)),
        };
        self.apply_pivot(merged)
    }

    /// Applies the configured pivot if the ontology has the pivot property as
    /// a data property and at least one linked class.
    pub fn apply_pivot(&self, o: Ontology) -> Result<Ontology, MergeError> {
        let Some(pivot) = &self.pivot else {
            return Ok(o);
        };
        let usable = o
            .properties
            .get(&pivot.property)
            .is_some_and(|p| p.kind() == PropertyKind::Data);
        let links: BTreeMap<Iri, String> = pivot
            .links
            .iter()
            .filter(|(class, _)| o.classes.contains_key(*class))
            .map(|(c, l)| (c.clone(), l.clone()))
            .collect();
        if !usable || links.is_empty() {
            return Ok(o);
        }
        pivot_by_property(&o, &pivot.property, &links, PivotOptions { first_number: pivot.first_number })
    }

    fn domain_projection(&self, members: &[&Iri]) -> Ontology {
        let domain = self.catalog.domain_ontology();
        let mut out = Ontology::new(domain.namespace.clone());
        let mut todo: Vec<Iri> = members
            .iter()
            .filter_map(|s| self.catalog.get(s))
            .flat_map(|p| p.concepts().cloned().collect::<Vec<_>>())
            .collect();
        while let Some(c) = todo.pop() {
            if out.classes.contains_key(&c) {
                continue;
            }
            if let Some(class) = domain.classes.get(&c) {
                todo.extend(class.superclasses.iter().cloned());
                out.add_class(class.clone());
            }
        }
        out
    }
}

fn read(path: &Path) -> Result<Vec<u8>, DeploymentError> {
    fs::read(path).map_err(|source| DeploymentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an ontology given as a path (format from the extension) or inline
/// canonical JSON.
fn load_ontology(src: &Source, base: &Path) -> Result<Ontology, DeploymentError> {
    match src {
        Source::Path(rel) => {
            let p = base.join(rel);
            let bytes = read(&p)?;
            ontology::parse_ontology(&bytes, Format::from_path(&p)).map_err(|source| {
                DeploymentError::Ontology {
                    origin: rel.clone(),
                    source,
                }
            })
        }
        Source::Inline(v) => {
            ontology::json::from_value(v.clone()).map_err(|source| DeploymentError::Ontology {
                origin: "inline ontology".into(),
                source,
            })
        }
    }
}
