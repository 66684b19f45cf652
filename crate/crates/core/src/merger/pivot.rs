use std::collections::BTreeMap;

use super::MergeError;
use crate::ontology::{
    is_ncname, Individual, Iri, Ontology, OntologyClass, PropertyDef, PropertyKind, PropertyRange,
    Value,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PivotOptions {
    /// Number of the first group individual (`#s<N>`).
    pub first_number: u64,
}

impl Default for PivotOptions {
    fn default() -> Self {
        PivotOptions { first_number: 1 }
    }
}

/// Class name for a pivot value: uppercased, with characters outside an XML
/// name replaced by `_`.
fn group_name(value: &str) -> String {
    let mut name: String = value
        .trim()
        .chars()
        .flat_map(char::to_uppercase)
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if !name.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        name.insert(0, '_');
    }
    name
}

/// Regroups individuals of the classes in `links` by their value of
/// `pivot`. Each group gets a class named after the value and an individual
/// linked to every member through the class's link property. Nothing is
/// removed from `o`.
pub fn pivot_by_property(
    o: &Ontology,
    pivot: &Iri,
    links: &BTreeMap<Iri, String>,
    options: PivotOptions,
) -> Result<Ontology, MergeError> {
    let prop = o.properties.get(pivot).ok_or_else(|| MergeError::MissingProperty(pivot.clone()))?;
    if prop.kind() != PropertyKind::Data {
        return Err(MergeError::NotDataProperty(pivot.clone()));
    }
    let mut link_iris = BTreeMap::new();
    for (class, link) in links {
        if !o.classes.contains_key(class) {
            return Err(MergeError::UnknownClass(class.clone()));
        }
        if !is_ncname(link) {
            return Err(MergeError::InvalidDecision(format!("{link:?} is not a valid property name")));
        }
        let iri = Iri::fragment(link).map_err(|e| MergeError::InvalidDecision(e.to_string()))?;
        if let Some(existing) = o.properties.get(&iri) {
            if existing.range != PropertyRange::Class(class.clone()) {
                return Err(MergeError::NameCollision(iri));
            }
        } else if o.contains_iri(&iri) {
            return Err(MergeError::NameCollision(iri));
        }
        link_iris.insert(class.clone(), iri);
    }

    // group class → (label, members with their link property)
    let mut groups: BTreeMap<Iri, (String, Vec<(Iri, Iri)>)> = BTreeMap::new();
    for ind in o.individuals.values() {
        let Some(link) = ind.types.iter().find_map(|t| link_iris.get(t)) else {
            continue;
        };
        for value in ind.values(pivot) {
            let Some(lexical) = value.as_lexical() else { continue };
            let class = Iri::fragment(&group_name(lexical)).expect("group names are valid fragments");
            groups
                .entry(class)
                .or_insert_with(|| (lexical.trim().to_string(), Vec::new()))
                .1
                .push((link.clone(), ind.iri.clone()));
        }
    }

    let mut out = o.clone();
    let mut number = options.first_number;
    let mut groups: Vec<_> = groups.into_iter().collect();
    groups.sort_by(|a, b| a.1 .0.cmp(&b.1 .0).then(a.0.cmp(&b.0)));
    for (class, (label, members)) in groups {
        if !out.classes.contains_key(&class) {
            if out.contains_iri(&class) {
                return Err(MergeError::NameCollision(class));
            }
            let mut c = OntologyClass::new(class.clone());
            c.label = Some(label);
            c.annotations.insert("groupedBy".into(), pivot.local_name().to_string());
            out.add_class(c);
        }
        let group = loop {
            let candidate = Iri::fragment(&format!("s{number}")).expect("valid fragment");
            number += 1;
            if !out.contains_iri(&candidate) {
                break candidate;
            }
        };
        let mut ind = Individual::new(group.clone(), class);
        for (link, member) in members {
            if !out.properties.contains_key(&link) {
                let range = link_iris
                    .iter()
                    .find(|(_, l)| **l == link)
                    .map(|(c, _)| c.clone())
                    .expect("links come from the table");
                out.add_property(PropertyDef::object(link.clone(), range));
            }
            ind.assert(link, Value::Ref(member));
        }
        out.add_individual(ind);
    }
    out.validate()?;
    Ok(out)
}
