use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::iri::is_ncname;
use super::{Datatype, Iri, OntologyError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyClass {
    pub iri: Iri,
    pub label: Option<String>,
    pub superclasses: BTreeSet<Iri>,
    pub annotations: BTreeMap<String, String>,
}

impl OntologyClass {
    pub fn new(iri: Iri) -> Self {
        OntologyClass {
            iri,
            label: None,
            superclasses: BTreeSet::new(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn with_superclass(mut self, sup: Iri) -> Self {
        self.superclasses.insert(sup);
        self
    }

    /// Label if present, otherwise the IRI's local name.
    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or_else(|| self.iri.local_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Data,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropertyRange {
    Datatype(Datatype),
    Class(Iri),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDef {
    pub iri: Iri,
    pub domain: Option<Iri>,
    pub range: PropertyRange,
}

impl PropertyDef {
    pub fn data(iri: Iri, datatype: Datatype) -> Self {
        PropertyDef {
            iri,
            domain: None,
            range: PropertyRange::Datatype(datatype),
        }
    }

    pub fn object(iri: Iri, range: Iri) -> Self {
        PropertyDef {
            iri,
            domain: None,
            range: PropertyRange::Class(range),
        }
    }

    pub fn kind(&self) -> PropertyKind {
        match self.range {
            PropertyRange::Datatype(_) => PropertyKind::Data,
            PropertyRange::Class(_) => PropertyKind::Object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Literal { datatype: Datatype, lexical: String },
    Ref(Iri),
}

impl Value {
    /// Untyped literal, tag inferred from the lexical form.
    pub fn literal(lexical: impl Into<String>) -> Self {
        let lexical = lexical.into();
        Value::Literal {
            datatype: Datatype::infer(&lexical),
            lexical,
        }
    }

    pub fn as_lexical(&self) -> Option<&str> {
        match self {
            Value::Literal { lexical, .. } => Some(lexical),
            Value::Ref(_) => None,
        }
    }

    pub fn as_ref_iri(&self) -> Option<&Iri> {
        match self {
            Value::Ref(iri) => Some(iri),
            Value::Literal { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Individual {
    pub iri: Iri,
    pub types: BTreeSet<Iri>,
    /// Multimap property → values; each value list is kept sorted so that
    /// equality is multiset equality.
    pub assertions: BTreeMap<Iri, Vec<Value>>,
}

impl Individual {
    pub fn new(iri: Iri, class: Iri) -> Self {
        Individual {
            iri,
            types: BTreeSet::from([class]),
            assertions: BTreeMap::new(),
        }
    }

    pub fn assert(&mut self, property: Iri, value: Value) {
        let values = self.assertions.entry(property).or_default();
        let at = values.partition_point(|v| v <= &value);
        values.insert(at, value);
    }

    pub fn with(mut self, property: Iri, value: Value) -> Self {
        self.assert(property, value);
        self
    }

    pub fn values(&self, property: &Iri) -> &[Value] {
        self.assertions.get(property).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn assertion_count(&self) -> usize {
        self.assertions.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    pub namespace: Iri,
    pub classes: BTreeMap<Iri, OntologyClass>,
    pub properties: BTreeMap<Iri, PropertyDef>,
    pub individuals: BTreeMap<Iri, Individual>,
}

impl Ontology {
    pub fn new(namespace: Iri) -> Self {
        Ontology {
            namespace,
            classes: BTreeMap::new(),
            properties: BTreeMap::new(),
            individuals: BTreeMap::new(),
        }
    }

    pub fn add_class(&mut self, class: OntologyClass) {
        self.classes.insert(class.iri.clone(), class);
    }

    pub fn add_property(&mut self, property: PropertyDef) {
        self.properties.insert(property.iri.clone(), property);
    }

    pub fn add_individual(&mut self, individual: Individual) {
        self.individuals.insert(individual.iri.clone(), individual);
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty() && self.properties.is_empty() && self.individuals.is_empty()
    }

    /// Whether `iri` names any class, property or individual.
    pub fn contains_iri(&self, iri: &Iri) -> bool {
        self.classes.contains_key(iri)
            || self.properties.contains_key(iri)
            || self.individuals.contains_key(iri)
    }

    /// Checks every structural invariant of the subset.
    pub fn validate(&self) -> Result<(), OntologyError> {
        for iri in self.classes.keys() {
            if self.properties.contains_key(iri) || self.individuals.contains_key(iri) {
                return Err(OntologyError::Invalid(format!(
                    "{iri} declared as more than one kind of entity"
                )));
            }
        }
        if let Some(iri) = self
            .properties
            .keys()
            .find(|iri| self.individuals.contains_key(*iri))
        {
            return Err(OntologyError::Invalid(format!(
                "{iri} declared as both property and individual"
            )));
        }

        for class in self.classes.values() {
            for sup in &class.superclasses {
                if !self.classes.contains_key(sup) {
                    return Err(OntologyError::unresolved(
                        sup,
                        format!("superclass of {}", class.iri),
                    ));
                }
            }
            if let Some(key) = class.annotations.keys().find(|k| !is_ncname(k)) {
                return Err(OntologyError::Invalid(format!(
                    "annotation key {key:?} on {} is not a valid name",
                    class.iri
                )));
            }
        }
        self.check_acyclic()?;

        for prop in self.properties.values() {
            if !is_ncname(prop.iri.local_name()) {
                return Err(OntologyError::Invalid(format!(
                    "property {} has no usable local name",
                    prop.iri
                )));
            }
            if let Some(domain) = &prop.domain {
                if !self.classes.contains_key(domain) {
                    return Err(OntologyError::unresolved(
                        domain,
                        format!("domain of {}", prop.iri),
                    ));
                }
            }
            if let PropertyRange::Class(range) = &prop.range {
                if !self.classes.contains_key(range) {
                    return Err(OntologyError::unresolved(
                        range,
                        format!("range of {}", prop.iri),
                    ));
                }
            }
        }

        for ind in self.individuals.values() {
            if ind.types.is_empty() {
                return Err(OntologyError::Invalid(format!(
                    "individual {} has no type",
                    ind.iri
                )));
            }
            for ty in &ind.types {
                if !self.classes.contains_key(ty) {
                    return Err(OntologyError::unresolved(ty, format!("type of {}", ind.iri)));
                }
            }
            for (prop_iri, values) in &ind.assertions {
                let prop = self.properties.get(prop_iri).ok_or_else(|| {
                    OntologyError::unresolved(prop_iri, format!("property asserted on {}", ind.iri))
                })?;
                if values.is_empty() || values.windows(2).any(|w| w[0] > w[1]) {
                    return Err(OntologyError::Invalid(format!(
                        "assertions of {prop_iri} on {} are not a sorted non-empty list",
                        ind.iri
                    )));
                }
                for value in values {
                    self.check_value(ind, prop, value)?;
                }
            }
        }
        Ok(())
    }

    fn check_value(
        &self,
        ind: &Individual,
        prop: &PropertyDef,
        value: &Value,
    ) -> Result<(), OntologyError> {
        match (&prop.range, value) {
            (PropertyRange::Datatype(range), Value::Literal { datatype, lexical }) => {
                if !datatype.accepts(lexical) {
                    return Err(OntologyError::BadDatatype {
                        property: prop.iri.clone(),
                        lexical: lexical.clone(),
                        datatype: *datatype,
                    });
                }
                if !datatype.is_subtype_of(*range) {
                    return Err(OntologyError::BadDatatype {
                        property: prop.iri.clone(),
                        lexical: lexical.clone(),
                        datatype: *range,
                    });
                }
                Ok(())
            }
            (PropertyRange::Class(_), Value::Ref(target)) => {
                if self.individuals.contains_key(target) {
                    Ok(())
                } else {
                    Err(OntologyError::unresolved(
                        target,
                        format!("value of {} on {}", prop.iri, ind.iri),
                    ))
                }
            }
            (PropertyRange::Datatype(_), Value::Ref(_)) => Err(OntologyError::Invalid(format!(
                "data property {} has an IRI value on {}",
                prop.iri, ind.iri
            ))),
            (PropertyRange::Class(_), Value::Literal { .. }) => Err(OntologyError::Invalid(
                format!("object property {} has a literal value on {}", prop.iri, ind.iri),
            )),
        }
    }

    fn check_acyclic(&self) -> Result<(), OntologyError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        let mut marks: BTreeMap<&Iri, Mark> = BTreeMap::new();
        for root in self.classes.keys() {
            if marks.contains_key(root) {
                continue;
            }
            // iterative DFS: (node, remaining superclasses)
            let mut stack = vec![(root, self.classes[root].superclasses.iter())];
            marks.insert(root, Mark::Active);
            while let Some((node, iter)) = stack.last_mut() {
                match iter.next() {
                    Some(sup) => match marks.get(sup) {
                        Some(Mark::Active) => return Err(OntologyError::Cycle(sup.clone())),
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(sup, Mark::Active);
                            stack.push((sup, self.classes[sup].superclasses.iter()));
                        }
                    },
                    None => {
                        marks.insert(*node, Mark::Done);
                        stack.pop();
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces every reference to `from` (as class, property, individual or
    /// value) with `to`. Entity maps are re-keyed; the caller is responsible
    /// for resolving collisions beforehand.
    pub fn rename_iri(&mut self, from: &Iri, to: &Iri) {
        if from == to {
            return;
        }
        let swap = |iri: &mut Iri| {
            if iri == from {
                *iri = to.clone();
            }
        };
        if let Some(mut class) = self.classes.remove(from) {
            class.iri = to.clone();
            self.classes.insert(to.clone(), class);
        }
        if let Some(mut prop) = self.properties.remove(from) {
            prop.iri = to.clone();
            self.properties.insert(to.clone(), prop);
        }
        if let Some(mut ind) = self.individuals.remove(from) {
            ind.iri = to.clone();
            self.individuals.insert(to.clone(), ind);
        }
        for class in self.classes.values_mut() {
            if class.superclasses.remove(from) {
                class.superclasses.insert(to.clone());
            }
        }
        for prop in self.properties.values_mut() {
            if let Some(d) = prop.domain.as_mut() {
                swap(d);
            }
            if let PropertyRange::Class(r) = &mut prop.range {
                swap(r);
            }
        }
        for ind in self.individuals.values_mut() {
            if ind.types.remove(from) {
                ind.types.insert(to.clone());
            }
            if let Some(values) = ind.assertions.remove(from) {
                ind.assertions.entry(to.clone()).or_default().extend(values);
            }
            for values in ind.assertions.values_mut() {
                for v in values.iter_mut() {
                    if let Value::Ref(r) = v {
                        swap(r);
                    }
                }
                values.sort();
            }
        }
    }
}
