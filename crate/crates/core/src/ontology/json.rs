//! CANONICAL_JSON: the authoritative storage format for ontologies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    Datatype, Individual, Iri, Ontology, OntologyClass, OntologyError, PropertyDef, PropertyKind,
    PropertyRange, Value,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyDoc {
    namespace: Iri,
    #[serde(default)]
    classes: Vec<ClassDoc>,
    #[serde(default)]
    properties: Vec<PropertyDoc>,
    #[serde(default)]
    individuals: Vec<IndividualDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    iri: Iri,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default)]
    superclasses: Vec<Iri>,
    #[serde(default)]
    annotations: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropertyDoc {
    iri: Iri,
    kind: PropertyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<Iri>,
    range: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndividualDoc {
    iri: Iri,
    types: Vec<Iri>,
    #[serde(default)]
    assertions: Vec<AssertionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssertionDoc {
    property: Iri,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    literal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    datatype: Option<Datatype>,
    #[serde(default, rename = "ref", skip_serializing_if = "Option::is_none")]
    reference: Option<Iri>,
}

fn invalid(msg: impl Into<String>) -> OntologyError {
    OntologyError::Invalid(msg.into())
}

pub(crate) fn serialize(o: &Ontology) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&to_value(o)).expect("ontology documents always serialize");
    out.push(b'\n');
    out
}

/// The canonical document as a JSON value (embedded in API responses and
/// session files).
pub fn to_value(o: &Ontology) -> serde_json::Value {
    let doc = OntologyDoc {
        namespace: o.namespace.clone(),
        classes: o
            .classes
            .values()
            .map(|c| ClassDoc {
                iri: c.iri.clone(),
                label: c.label.clone(),
                superclasses: c.superclasses.iter().cloned().collect(),
                annotations: c.annotations.clone(),
            })
            .collect(),
        properties: o
            .properties
            .values()
            .map(|p| PropertyDoc {
                iri: p.iri.clone(),
                kind: p.kind(),
                domain: p.domain.clone(),
                range: match &p.range {
                    PropertyRange::Datatype(dt) => dt.as_str().to_string(),
                    PropertyRange::Class(c) => c.to_string(),
                },
            })
            .collect(),
        individuals: o
            .individuals
            .values()
            .map(|i| IndividualDoc {
                iri: i.iri.clone(),
                types: i.types.iter().cloned().collect(),
                assertions: i
                    .assertions
                    .iter()
                    .flat_map(|(p, vs)| vs.iter().map(move |v| (p, v)))
                    .map(|(p, v)| match v {
                        Value::Literal { datatype, lexical } => AssertionDoc {
                            property: p.clone(),
                            literal: Some(lexical.clone()),
                            datatype: Some(*datatype),
                            reference: None,
                        },
                        Value::Ref(target) => AssertionDoc {
                            property: p.clone(),
                            literal: None,
                            datatype: None,
                            reference: Some(target.clone()),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_value(doc).expect("ontology documents always serialize")
}

pub(crate) fn parse(input: &[u8]) -> Result<Ontology, OntologyError> {
    let doc: OntologyDoc = serde_json::from_slice(input).map_err(|e| OntologyError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_doc(doc)
}

/// Parses an already-decoded JSON value (e.g. embedded in a larger document).
pub fn from_value(value: serde_json::Value) -> Result<Ontology, OntologyError> {
    let doc: OntologyDoc = serde_json::from_value(value).map_err(|e| OntologyError::Syntax {
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    from_doc(doc)
}

fn from_doc(doc: OntologyDoc) -> Result<Ontology, OntologyError> {
    let mut o = Ontology::new(doc.namespace);
    for c in doc.classes {
        if o.classes.contains_key(&c.iri) {
            return Err(invalid(format!("class {} declared twice", c.iri)));
        }
        o.add_class(OntologyClass {
            iri: c.iri,
            label: c.label,
            superclasses: c.superclasses.into_iter().collect(),
            annotations: c.annotations,
        });
    }
    for p in doc.properties {
        if o.properties.contains_key(&p.iri) {
            return Err(invalid(format!("property {} declared twice", p.iri)));
        }
        let range = match p.kind {
            PropertyKind::Data => PropertyRange::Datatype(p.range.parse().map_err(invalid)?),
            PropertyKind::Object => PropertyRange::Class(
                Iri::new(p.range).map_err(|e| invalid(e.to_string()))?,
            ),
        };
        o.add_property(PropertyDef {
            iri: p.iri,
            domain: p.domain,
            range,
        });
    }
    for i in doc.individuals {
        if o.individuals.contains_key(&i.iri) {
            return Err(invalid(format!("individual {} declared twice", i.iri)));
        }
        let mut ind = Individual {
            iri: i.iri,
            types: i.types.into_iter().collect(),
            assertions: BTreeMap::new(),
        };
        for a in i.assertions {
            let value = match (a.literal, a.datatype, a.reference) {
                (Some(lexical), Some(datatype), None) => Value::Literal { datatype, lexical },
                (Some(lexical), None, None) => Value::literal(lexical),
                (None, None, Some(target)) => Value::Ref(target),
                _ => {
                    return Err(invalid(format!(
                        "assertion of {} on {} must carry either a literal or a ref",
                        a.property, ind.iri
                    )))
                }
            };
            ind.assert(a.property, value);
        }
        o.add_individual(ind);
    }
    o.validate()?;
    Ok(o)
}

/// `#[serde(with = "...")]` adapter that stores an [`Ontology`] as its
/// canonical JSON document.
pub mod as_document {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::ontology::Ontology;

    pub fn serialize<S: Serializer>(o: &Ontology, s: S) -> Result<S::Ok, S::Error> {
        super::to_value(o).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ontology, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        super::from_value(v).map_err(D::Error::custom)
    }
}
