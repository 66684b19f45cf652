//! Service profiles: who provides a service, what it computes, and its
//! inputs/outputs/preconditions/effects, plus the catalog that resolves
//! their concepts against a domain ontology.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ClassHierarchy, Datatype, Iri, Ontology};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub concept: Iri,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<Datatype>,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, concept: Iri) -> Self {
        ParameterSpec {
            name: name.into(),
            concept,
            datatype: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// A ground propositional atom with polarity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub predicate: String,
    #[serde(default)]
    pub arguments: Vec<Iri>,
    #[serde(default = "positive")]
    pub polarity: Polarity,
}

fn positive() -> Polarity {
    Polarity::Positive
}

impl Condition {
    pub fn positive(predicate: impl Into<String>, arguments: Vec<Iri>) -> Self {
        Condition {
            predicate: predicate.into(),
            arguments,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(predicate: impl Into<String>, arguments: Vec<Iri>) -> Self {
        Condition {
            polarity: Polarity::Negative,
            ..Condition::positive(predicate, arguments)
        }
    }

    /// The atom without its polarity.
    pub fn atom(&self) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            arguments: self.arguments.clone(),
        }
    }

    /// Holds in a world whose true atoms are `facts` (closed world).
    pub fn holds_in(&self, facts: &BTreeSet<Atom>) -> bool {
        let present = facts.contains(&self.atom());
        match self.polarity {
            Polarity::Positive => present,
            Polarity::Negative => !present,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.polarity == Polarity::Negative {
            f.write_str("¬")?;
        }
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.arguments.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub arguments: Vec<Iri>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceProfile {
    pub id: Iri,
    pub provider: String,
    pub function_description: String,
    pub inputs: Vec<ParameterSpec>,
    pub outputs: Vec<ParameterSpec>,
    pub preconditions: Vec<Condition>,
    pub effects: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_model_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding_ref: Option<String>,
}

impl ServiceProfile {
    /// Every concept mentioned by parameters and conditions.
    pub fn concepts(&self) -> impl Iterator<Item = &Iri> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .map(|p| &p.concept)
            .chain(
                self.preconditions
                    .iter()
                    .chain(&self.effects)
                    .flat_map(|c| &c.arguments),
            )
    }

    pub fn output(&self, name: &str) -> Option<&ParameterSpec> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&ParameterSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing field {0}")]
    MissingField(String),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
    #[error("concept {concept} used by {profile} is not a class of the domain ontology")]
    UnresolvedConcept { profile: Iri, concept: Iri },
    #[error("a profile with id {0} is already registered")]
    DuplicateId(Iri),
    #[error("invalid profile: {0}")]
    Invalid(String),
}

impl ProfileError {
    pub fn code(&self) -> &'static str {
        match self {
            ProfileError::Syntax { .. } => "SYNTAX",
            ProfileError::MissingField(_) => "MISSING_FIELD",
            ProfileError::DuplicateParameter(_) => "DUPLICATE_PARAMETER",
            ProfileError::UnresolvedConcept { .. } => "UNRESOLVED_CONCEPT",
            ProfileError::DuplicateId(_) => "DUPLICATE_ID",
            ProfileError::Invalid(_) => "INVALID_PROFILE",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    id: Option<Iri>,
    provider: Option<String>,
    function_description: Option<String>,
    #[serde(default)]
    inputs: Vec<ParameterSpec>,
    #[serde(default)]
    outputs: Vec<ParameterSpec>,
    #[serde(default)]
    preconditions: Vec<Condition>,
    #[serde(default)]
    effects: Vec<Condition>,
    process_model_ref: Option<String>,
    grounding_ref: Option<String>,
}

pub fn parse_profile(document: &[u8]) -> Result<ServiceProfile, ProfileError> {
    let raw: RawProfile = serde_json::from_slice(document).map_err(|e| ProfileError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_raw(raw)
}

pub fn profile_from_value(value: serde_json::Value) -> Result<ServiceProfile, ProfileError> {
    let raw: RawProfile = serde_json::from_value(value).map_err(|e| ProfileError::Syntax {
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    from_raw(raw)
}

fn from_raw(raw: RawProfile) -> Result<ServiceProfile, ProfileError> {
    let missing = |f: &str| ProfileError::MissingField(f.to_string());
    let profile = ServiceProfile {
        id: raw.id.ok_or_else(|| missing("id"))?,
        provider: raw.provider.ok_or_else(|| missing("provider"))?,
        function_description: raw
            .function_description
            .ok_or_else(|| missing("function_description"))?,
        inputs: raw.inputs,
        outputs: raw.outputs,
        preconditions: raw.preconditions,
        effects: raw.effects,
        process_model_ref: raw.process_model_ref,
        grounding_ref: raw.grounding_ref,
    };
    check_profile(&profile)?;
    Ok(profile)
}

/// Structural invariants that do not need the domain ontology.
pub fn check_profile(p: &ServiceProfile) -> Result<(), ProfileError> {
    if p.outputs.is_empty() {
        return Err(ProfileError::MissingField("outputs".into()));
    }
    for list in [&p.inputs, &p.outputs] {
        let mut seen = BTreeSet::new();
        for param in list {
            if param.name.is_empty() {
                return Err(ProfileError::Invalid(format!("{}: empty parameter name", p.id)));
            }
            if !seen.insert(param.name.as_str()) {
                return Err(ProfileError::DuplicateParameter(param.name.clone()));
            }
        }
    }
    if p
        .preconditions
        .iter()
        .chain(&p.effects)
        .any(|c| c.predicate.trim().is_empty())
    {
        return Err(ProfileError::Invalid(format!("{}: empty condition predicate", p.id)));
    }
    Ok(())
}

pub fn serialize_profile(p: &ServiceProfile) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(p).expect("profiles always serialize");
    out.push(b'\n');
    out
}

/// Registered profiles plus the domain ontology their concepts live in.
#[derive(Debug, Clone)]
pub struct ServiceCatalog {
    domain: Arc<Ontology>,
    hierarchy: Arc<ClassHierarchy>,
    profiles: BTreeMap<Iri, ServiceProfile>,
}

impl ServiceCatalog {
    pub fn new(domain_ontology: Ontology) -> Self {
        let hierarchy = ClassHierarchy::new(&domain_ontology);
        ServiceCatalog {
            domain: Arc::new(domain_ontology),
            hierarchy: Arc::new(hierarchy),
            profiles: BTreeMap::new(),
        }
    }

    pub fn domain_ontology(&self) -> &Ontology {
        &self.domain
    }

    pub fn hierarchy(&self) -> &ClassHierarchy {
        &self.hierarchy
    }

    pub fn profiles(&self) -> &BTreeMap<Iri, ServiceProfile> {
        &self.profiles
    }

    pub fn get(&self, id: &Iri) -> Option<&ServiceProfile> {
        self.profiles.get(id)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn resolves(&self, concept: &Iri) -> bool {
        self.domain.classes.contains_key(concept)
    }

    /// Returns a new catalog containing `p`; `self` is left untouched.
    pub fn register_profile(&self, p: ServiceProfile) -> Result<ServiceCatalog, ProfileError> {
        check_profile(&p)?;
        if self.profiles.contains_key(&p.id) {
            return Err(ProfileError::DuplicateId(p.id));
        }
        if let Some(concept) = p.concepts().find(|c| !self.resolves(c)) {
            return Err(ProfileError::UnresolvedConcept {
                profile: p.id.clone(),
                concept: concept.clone(),
            });
        }
        let mut next = self.clone();
        next.profiles.insert(p.id.clone(), p);
        Ok(next)
    }

    /// Full scan for dangling concept references.
    pub fn dangling_concepts(&self) -> Vec<(Iri, Iri)> {
        self.profiles
            .values()
            .flat_map(|p| {
                p.concepts()
                    .filter(|c| !self.resolves(c))
                    .map(|c| (p.id.clone(), c.clone()))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}
