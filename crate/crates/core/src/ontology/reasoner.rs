//! Structural subsumption over declared superclass edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Iri, Ontology, OntologyError};

/// Quality of a concept match, ordered `Exact > Plugin > Subsumes > Fail`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchDegree {
    Fail,
    Subsumes,
    Plugin,
    Exact,
}

impl fmt::Display for MatchDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchDegree::Exact => "EXACT",
            MatchDegree::Plugin => "PLUGIN",
            MatchDegree::Subsumes => "SUBSUMES",
            MatchDegree::Fail => "FAIL",
        })
    }
}

fn require_class(o: &Ontology, iri: &Iri) -> Result<(), OntologyError> {
    if o.classes.contains_key(iri) {
        Ok(())
    } else {
        Err(OntologyError::UnknownClass(iri.clone()))
    }
}

/// `sub ⊑ sup` under the reflexive-transitive closure of declared edges.
pub fn is_subclass_of(o: &Ontology, sub: &Iri, sup: &Iri) -> Result<bool, OntologyError> {
    require_class(o, sub)?;
    require_class(o, sup)?;
    if sub == sup {
        return Ok(true);
    }
    let mut seen = BTreeSet::from([sub]);
    let mut queue = VecDeque::from([sub]);
    while let Some(cur) = queue.pop_front() {
        for parent in o.classes.get(cur).into_iter().flat_map(|c| &c.superclasses) {
            if parent == sup {
                return Ok(true);
            }
            if seen.insert(parent) {
                queue.push_back(parent);
            }
        }
    }
    Ok(false)
}

pub fn match_degree(o: &Ontology, offered: &Iri, required: &Iri) -> Result<MatchDegree, OntologyError> {
    require_class(o, offered)?;
    require_class(o, required)?;
    Ok(if offered == required {
        MatchDegree::Exact
    } else if is_subclass_of(o, offered, required)? {
        MatchDegree::Plugin
    } else if is_subclass_of(o, required, offered)? {
        MatchDegree::Subsumes
    } else {
        MatchDegree::Fail
    })
}

/// Precomputed ancestor sets, for callers that query subsumption in a loop.
#[derive(Debug, Clone, Default)]
pub struct ClassHierarchy {
    ancestors: BTreeMap<Iri, BTreeSet<Iri>>,
}

impl ClassHierarchy {
    pub fn new(o: &Ontology) -> Self {
        let mut ancestors: BTreeMap<Iri, BTreeSet<Iri>> = BTreeMap::new();
        for iri in o.classes.keys() {
            let mut seen = BTreeSet::from([iri.clone()]);
            let mut queue = VecDeque::from([iri]);
            while let Some(cur) = queue.pop_front() {
                for parent in o.classes.get(cur).into_iter().flat_map(|c| &c.superclasses) {
                    if seen.insert(parent.clone()) {
                        queue.push_back(parent);
                    }
                }
            }
            ancestors.insert(iri.clone(), seen);
        }
        ClassHierarchy { ancestors }
    }

    pub fn contains(&self, iri: &Iri) -> bool {
        self.ancestors.contains_key(iri)
    }

    /// Unknown classes are never subclasses of anything.
    pub fn is_subclass_of(&self, sub: &Iri, sup: &Iri) -> bool {
        self.ancestors.get(sub).is_some_and(|a| a.contains(sup))
    }

    pub fn degree(&self, offered: &Iri, required: &Iri) -> MatchDegree {
        if !self.contains(offered) || !self.contains(required) {
            MatchDegree::Fail
        } else if offered == required {
            MatchDegree::Exact
        } else if self.is_subclass_of(offered, required) {
            MatchDegree::Plugin
        } else if self.is_subclass_of(required, offered) {
            MatchDegree::Subsumes
        } else {
            MatchDegree::Fail
        }
    }
}
