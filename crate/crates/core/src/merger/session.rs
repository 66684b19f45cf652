use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::similarity::{jaccard, name_similarity, normalize};
use super::MergeError;
use crate::ontology::json::as_document;
use crate::ontology::{
    is_ncname, json, ClassHierarchy, Datatype, Iri, Ontology, OntologyClass, PropertyDef,
    PropertyRange,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSettings {
    pub theta_name: f64,
    pub theta_struct: f64,
}

impl Default for MergeSettings {
    fn default() -> Self {
        MergeSettings {
            theta_name: 0.85,
            theta_struct: 0.30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SuggestionKind {
    MergeClasses,
    MergeAttributes,
    CopyClass,
    CopyIndividual,
}

impl SuggestionKind {
    pub fn is_merge(self) -> bool {
        matches!(self, SuggestionKind::MergeClasses | SuggestionKind::MergeAttributes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatatypeReconciliation {
    pub left: Datatype,
    pub right: Datatype,
    pub resolved: Datatype,
}

impl DatatypeReconciliation {
    pub fn new(left: Datatype, right: Datatype) -> Self {
        DatatypeReconciliation {
            left,
            right,
            resolved: left.join(right),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSuggestion {
    pub id: u64,
    pub kind: SuggestionKind,
    pub left: Iri,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Iri>,
    pub name_similarity: f64,
    pub structural_similarity: f64,
    /// Similar names but little shared structure; rejecting is advised.
    pub conflict: bool,
    pub recommended: Verdict,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconciliation: Option<DatatypeReconciliation>,
}

impl MergeSuggestion {
    fn mentions(&self, iri: &Iri) -> bool {
        &self.left == iri || self.right.as_ref() == Some(iri)
    }

    /// Descending similarities, then IRI pair, then kind.
    fn queue_order(&self, other: &Self) -> Ordering {
        other
            .name_similarity
            .total_cmp(&self.name_similarity)
            .then(other.structural_similarity.total_cmp(&self.structural_similarity))
            .then_with(|| self.left.cmp(&other.left))
            .then_with(|| self.right.cmp(&other.right))
            .then(self.kind.cmp(&other.kind))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Accept,
    Reject,
    CreateNew,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Reject => "REJECT",
            Verdict::CreateNew => "CREATE_NEW",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeDecision {
    pub suggestion_id: u64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_name: Option<String>,
}

impl MergeDecision {
    pub fn accept(suggestion_id: u64) -> Self {
        MergeDecision {
            suggestion_id,
            verdict: Verdict::Accept,
            new_name: None,
        }
    }

    pub fn reject(suggestion_id: u64) -> Self {
        MergeDecision {
            suggestion_id,
            verdict: Verdict::Reject,
            new_name: None,
        }
    }

    pub fn create_new(suggestion_id: u64, name: impl Into<String>) -> Self {
        MergeDecision {
            suggestion_id,
            verdict: Verdict::CreateNew,
            new_name: Some(name.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Open,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Both,
}

/// Where a working-ontology entity came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Origin {
    pub side: Side,
    /// The entity's IRI in its source ontology, or its unified IRI.
    pub source: Iri,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSession {
    id: String,
    settings: MergeSettings,
    #[serde(with = "as_document")]
    source_left: Ontology,
    #[serde(with = "as_document")]
    source_right: Ontology,
    #[serde(with = "as_document")]
    working: Ontology,
    origins: BTreeMap<Iri, Origin>,
    pending: Vec<MergeSuggestion>,
    decision_log: Vec<MergeDecision>,
    status: SessionStatus,
    next_suggestion_id: u64,
}

/// Opens a session with default thresholds.
pub fn open_session(left: Ontology, right: Ontology) -> MergeSession {
    MergeSession::open(left, right, MergeSettings::default())
}

/// The suggestion queue a fresh session over `left` and `right` starts
/// with. IRIs refer to the session's working ontology, where names present
/// in both sources carry `L_`/`R_` prefixes.
pub fn suggest(left: &Ontology, right: &Ontology, settings: MergeSettings) -> Vec<MergeSuggestion> {
    MergeSession::open(left.clone(), right.clone(), settings).pending
}

/// Persistent-value form of [`MergeSession::apply`].
pub fn apply_decision(session: &MergeSession, d: MergeDecision) -> Result<MergeSession, MergeError> {
    let mut next = session.clone();
    next.apply(d)?;
    Ok(next)
}

/// Rebuilds a session from its sources and decision log.
pub fn replay(
    left: Ontology,
    right: Ontology,
    settings: MergeSettings,
    log: &[MergeDecision],
) -> Result<MergeSession, MergeError> {
    let mut s = MergeSession::open(left, right, settings);
    for d in log {
        s.apply(d.clone())?;
    }
    Ok(s)
}

/// Unattended merge: the head of the queue is accepted unless it is a
/// conflict or cannot be applied, in which case it is rejected.
pub fn auto_merge(left: Ontology, right: Ontology, settings: MergeSettings) -> Result<Ontology, MergeError> {
    let mut s = MergeSession::open(left, right, settings);
    while let Some(head) = s.pending.first() {
        let id = head.id;
        let accept = !head.conflict && s.apply(MergeDecision::accept(id)).is_ok();
        if !accept {
            s.apply(MergeDecision::reject(id))?;
        }
    }
    s.finalize()
}

/// Folds [`auto_merge`] over `ontologies` left to right.
pub fn merge_all(ontologies: &[Ontology], settings: MergeSettings) -> Result<Option<Ontology>, MergeError> {
    let mut iter = ontologies.iter().cloned();
    let Some(first) = iter.next() else {
        return Ok(None);
    };
    iter.try_fold(first, |acc, o| auto_merge(acc, o, settings)).map(Some)
}

fn entity_iris(o: &Ontology) -> BTreeSet<Iri> {
    o.classes
        .keys()
        .chain(o.properties.keys())
        .chain(o.individuals.keys())
        .cloned()
        .collect()
}

fn fresh(iri: &Iri, tag: &str, taken: &BTreeSet<Iri>) -> Iri {
    let mut local = iri.local_name().to_string();
    loop {
        local = format!("{tag}{local}");
        let candidate = iri.with_local_name(&local).expect("prefixing keeps an IRI valid");
        if !taken.contains(&candidate) {
            return candidate;
        }
    }
}

impl MergeSession {
    pub fn open(left: Ontology, right: Ontology, settings: MergeSettings) -> Self {
        let id = {
            let mut h = Sha256::new();
            h.update(json::serialize(&left));
            h.update([0]);
            h.update(json::serialize(&right));
            hex::encode(&h.finalize()[..6])
        };
        let left_iris = entity_iris(&left);
        let right_iris = entity_iris(&right);
        let mut taken: BTreeSet<Iri> = left_iris.union(&right_iris).cloned().collect();
        let mut l = left.clone();
        let mut r = right.clone();
        let mut renamed_l = BTreeMap::new();
        let mut renamed_r = BTreeMap::new();
        for x in left_iris.intersection(&right_iris) {
            let nl = fresh(x, "L_", &taken);
            taken.insert(nl.clone());
            let nr = fresh(x, "R_", &taken);
            taken.insert(nr.clone());
            l.rename_iri(x, &nl);
            r.rename_iri(x, &nr);
            renamed_l.insert(nl, x.clone());
            renamed_r.insert(nr, x.clone());
        }
        let mut working = Ontology::new(left.namespace.clone());
        let mut origins = BTreeMap::new();
        for (side, part, renamed) in [(Side::Left, l, renamed_l), (Side::Right, r, renamed_r)] {
            for iri in entity_iris(&part) {
                let source = renamed.get(&iri).cloned().unwrap_or_else(|| iri.clone());
                origins.insert(iri, Origin { side, source });
            }
            working.classes.extend(part.classes);
            working.properties.extend(part.properties);
            working.individuals.extend(part.individuals);
        }
        debug_assert!(working.validate().is_ok());
        let mut s = MergeSession {
            id,
            settings,
            source_left: left,
            source_right: right,
            working,
            origins,
            pending: Vec::new(),
            decision_log: Vec::new(),
            status: SessionStatus::Open,
            next_suggestion_id: 1,
        };
        s.initial_suggestions();
        s
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn settings(&self) -> MergeSettings {
        self.settings
    }

    pub fn source_left(&self) -> &Ontology {
        &self.source_left
    }

    pub fn source_right(&self) -> &Ontology {
        &self.source_right
    }

    pub fn working(&self) -> &Ontology {
        &self.working
    }

    pub fn origins(&self) -> &BTreeMap<Iri, Origin> {
        &self.origins
    }

    pub fn pending(&self) -> &[MergeSuggestion] {
        &self.pending
    }

    pub fn decision_log(&self) -> &[MergeDecision] {
        &self.decision_log
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn suggestion(&self, id: u64) -> Option<&MergeSuggestion> {
        self.pending.iter().find(|s| s.id == id)
    }

    /// Replays the log against the stored sources.
    pub fn replayed(&self) -> Result<MergeSession, MergeError> {
        let mut s = replay(
            self.source_left.clone(),
            self.source_right.clone(),
            self.settings,
            &self.decision_log,
        )?;
        s.id = self.id.clone();
        if self.status == SessionStatus::Finalized {
            s.finalize()?;
        }
        Ok(s)
    }

    fn side(&self, iri: &Iri) -> Side {
        self.origins.get(iri).map(|o| o.side).unwrap_or(Side::Both)
    }

    fn source_name(&self, iri: &Iri) -> String {
        self.origins
            .get(iri)
            .map(|o| o.source.local_name())
            .unwrap_or_else(|| iri.local_name())
            .to_string()
    }

    fn class_name(&self, iri: &Iri) -> String {
        match self.working.classes.get(iri).and_then(|c| c.label.clone()) {
            Some(label) => label,
            None => self.source_name(iri),
        }
    }

    /// Normalized names of properties attached to a class by domain or used
    /// by one of its individuals.
    fn property_names(&self, class: &Iri) -> BTreeSet<String> {
        self.class_properties(class)
            .iter()
            .map(|p| normalize(&self.source_name(p)))
            .collect()
    }

    fn class_properties(&self, class: &Iri) -> BTreeSet<Iri> {
        let by_domain = self
            .working
            .properties
            .values()
            .filter(|p| p.domain.as_ref() == Some(class))
            .map(|p| p.iri.clone());
        let by_use = self
            .working
            .individuals
            .values()
            .filter(|i| i.types.contains(class))
            .flat_map(|i| i.assertions.keys().cloned());
        by_domain.chain(by_use).collect()
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_suggestion_id;
        self.next_suggestion_id += 1;
        id
    }

    fn sides_of<'a>(&self, iris: impl Iterator<Item = &'a Iri>, side: Side) -> Vec<Iri> {
        iris.filter(|i| self.side(i) == side).cloned().collect()
    }

    fn class_pair(&mut self, l: &Iri, r: &Iri) -> Option<MergeSuggestion> {
        let (ln, rn) = (self.class_name(l), self.class_name(r));
        let name = name_similarity(&ln, &rn);
        if name < self.settings.theta_name {
            return None;
        }
        let (lp, rp) = (self.property_names(l), self.property_names(r));
        let structural = jaccard(&lp, &rp);
        let conflict = structural < self.settings.theta_struct;
        let shared = lp.intersection(&rp).count();
        let total = lp.union(&rp).count();
        let mut rationale = format!(
            "classes {ln:?} and {rn:?}: name similarity {name:.2}, {shared} of {total} property names shared"
        );
        if conflict {
            rationale = format!("SEMANTIC_CONFLICT: {rationale}; similar names with different structure are kept apart");
        }
        Some(self.new_suggestion(SuggestionKind::MergeClasses, l, Some(r), name, structural, conflict, rationale, None))
    }

    fn attribute_pair(&mut self, l: &Iri, r: &Iri) -> Option<MergeSuggestion> {
        let (ln, rn) = (self.source_name(l), self.source_name(r));
        let name = name_similarity(&ln, &rn);
        if name < self.settings.theta_name {
            return None;
        }
        let pl = &self.working.properties[l];
        let pr = &self.working.properties[r];
        let mut reconciliation = None;
        let range = match (&pl.range, &pr.range) {
            (PropertyRange::Datatype(a), PropertyRange::Datatype(b)) => {
                reconciliation = Some(DatatypeReconciliation::new(*a, *b));
                if a == b {
                    1.0
                } else {
                    0.5
                }
            }
            (PropertyRange::Class(a), PropertyRange::Class(b)) => {
                name_similarity(&self.class_name(a), &self.class_name(b))
            }
            _ => 0.0,
        };
        let domain = match (&pl.domain, &pr.domain) {
            (None, None) => 1.0,
            (Some(a), Some(b)) if a == b => 1.0,
            (Some(a), Some(b)) => name_similarity(&self.class_name(a), &self.class_name(b)),
            _ => 0.5,
        };
        let structural = if pl.kind() == pr.kind() {
            (range + domain) / 2.0
        } else {
            0.0
        };
        let conflict = structural < self.settings.theta_struct;
        let mut rationale = format!(
            "attributes {ln:?} and {rn:?}: name similarity {name:.2}, range agreement {range:.2}, domain agreement {domain:.2}"
        );
        if let Some(rec) = reconciliation.filter(|r| r.left != r.right) {
            rationale.push_str(&format!(
                "; datatypes {} and {} widen to {}",
                rec.left.as_str(),
                rec.right.as_str(),
                rec.resolved.as_str()
            ));
        }
        if conflict {
            rationale = format!("SEMANTIC_CONFLICT: {rationale}; similar names with different structure are kept apart");
        }
        Some(self.new_suggestion(SuggestionKind::MergeAttributes, l, Some(r), name, structural, conflict, rationale, reconciliation))
    }

    #[allow(clippy::too_many_arguments)]
    fn new_suggestion(
        &mut self,
        kind: SuggestionKind,
        left: &Iri,
        right: Option<&Iri>,
        name_similarity: f64,
        structural_similarity: f64,
        conflict: bool,
        rationale: String,
        reconciliation: Option<DatatypeReconciliation>,
    ) -> MergeSuggestion {
        MergeSuggestion {
            id: self.take_id(),
            kind,
            left: left.clone(),
            right: right.cloned(),
            name_similarity,
            structural_similarity,
            conflict,
            recommended: if conflict { Verdict::Reject } else { Verdict::Accept },
            rationale,
            reconciliation,
        }
    }

    fn initial_suggestions(&mut self) {
        let lc = self.sides_of(self.working.classes.keys(), Side::Left);
        let rc = self.sides_of(self.working.classes.keys(), Side::Right);
        let lp = self.sides_of(self.working.properties.keys(), Side::Left);
        let rp = self.sides_of(self.working.properties.keys(), Side::Right);
        let mut out = Vec::new();
        let mut paired = BTreeSet::new();
        for l in &lc {
            for r in &rc {
                if let Some(s) = self.class_pair(l, r) {
                    paired.insert(l.clone());
                    paired.insert(r.clone());
                    out.push(s);
                }
            }
        }
        for l in &lp {
            for r in &rp {
                out.extend(self.attribute_pair(l, r));
            }
        }
        for c in lc.iter().chain(&rc).filter(|c| !paired.contains(*c)) {
            let rationale = format!("class {:?} has no counterpart; copied unchanged", self.class_name(c));
            out.push(self.new_suggestion(SuggestionKind::CopyClass, c, None, 0.0, 0.0, false, rationale, None));
        }
        let individuals: Vec<Iri> = self.working.individuals.keys().cloned().collect();
        for i in &individuals {
            let rationale = format!("individual {} copied unchanged", self.source_name(i));
            out.push(self.new_suggestion(SuggestionKind::CopyIndividual, i, None, 0.0, 0.0, false, rationale, None));
        }
        out.sort_by(MergeSuggestion::queue_order);
        self.pending = out;
    }

    /// Applies one decision. On error the session is left unchanged.
    pub fn apply(&mut self, d: MergeDecision) -> Result<(), MergeError> {
        if self.status == SessionStatus::Finalized {
            return Err(MergeError::SessionFinalized);
        }
        let pos = self
            .pending
            .iter()
            .position(|s| s.id == d.suggestion_id)
            .ok_or(MergeError::UnknownSuggestion(d.suggestion_id))?;
        if (d.verdict == Verdict::CreateNew) != d.new_name.is_some() {
            return Err(MergeError::InvalidDecision(
                "new_name is required with CREATE_NEW and only with CREATE_NEW".into(),
            ));
        }
        let mut next = self.clone();
        let s = next.pending.remove(pos);
        match (d.verdict, s.kind) {
            (Verdict::Reject, _) => {}
            (Verdict::Accept, SuggestionKind::MergeClasses) => {
                next.merge_classes(&s.left, s.right.as_ref().expect("merge suggestions have two sides"))?
            }
            (Verdict::Accept, SuggestionKind::MergeAttributes) => next.merge_attributes(
                &s.left,
                s.right.as_ref().expect("merge suggestions have two sides"),
            )?,
            (Verdict::Accept, _) => {}
            (Verdict::CreateNew, SuggestionKind::MergeClasses | SuggestionKind::CopyClass) => {
                let name = d.new_name.as_deref().unwrap_or_default();
                next.create_parent(name, s.left.clone(), s.right.clone())?
            }
            (Verdict::CreateNew, kind) => {
                return Err(MergeError::InvalidDecision(format!(
                    "CREATE_NEW applies to class suggestions, not {kind:?}"
                )))
            }
        }
        next.working.validate()?;
        next.decision_log.push(d);
        *self = next;
        Ok(())
    }

    /// IRI for a unified entity: its left source IRI when free, otherwise
    /// the left working IRI.
    fn unified_iri(&self, l: &Iri, r: &Iri) -> Iri {
        let wanted = self.origins.get(l).map(|o| o.source.clone()).unwrap_or_else(|| l.clone());
        if &wanted == l || &wanted == r || !self.working.contains_iri(&wanted) {
            wanted
        } else {
            l.clone()
        }
    }

    fn merge_classes(&mut self, l: &Iri, r: &Iri) -> Result<(), MergeError> {
        let target = self.unified_iri(l, r);
        let lc = self.working.classes.remove(l).expect("pending suggestions name live classes");
        let rc = self.working.classes.remove(r).expect("pending suggestions name live classes");
        let mut annotations = rc.annotations;
        annotations.extend(lc.annotations);
        self.working.add_class(OntologyClass {
            iri: target.clone(),
            label: lc.label.or(rc.label),
            superclasses: lc.superclasses.union(&rc.superclasses).cloned().collect(),
            annotations,
        });
        self.working.rename_iri(l, &target);
        self.working.rename_iri(r, &target);
        if let Some(c) = self.working.classes.get_mut(&target) {
            c.superclasses.remove(&target);
        }
        self.retire(l, r, &target);

        // Attribute pairs of the merged class and pairs of its direct
        // subclasses are rescored under fresh ids.
        let props = self.class_properties(&target);
        let subclasses: BTreeSet<Iri> = self
            .working
            .classes
            .values()
            .filter(|c| c.superclasses.contains(&target))
            .map(|c| c.iri.clone())
            .collect();
        let (affected, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|s| {
            let pair = [Some(&s.left), s.right.as_ref()];
            match s.kind {
                SuggestionKind::MergeAttributes => pair.iter().flatten().any(|i| props.contains(*i)),
                SuggestionKind::MergeClasses => pair.iter().flatten().any(|i| subclasses.contains(*i)),
                _ => false,
            }
        });
        self.pending = kept;
        for s in affected {
            let r = s.right.as_ref().expect("merge suggestions have two sides");
            let fresh = match s.kind {
                SuggestionKind::MergeAttributes => self.attribute_pair(&s.left, r),
                _ => self.class_pair(&s.left, r),
            };
            self.pending.extend(fresh);
        }
        self.pending.sort_by(MergeSuggestion::queue_order);
        Ok(())
    }

    fn merge_attributes(&mut self, l: &Iri, r: &Iri) -> Result<(), MergeError> {
        let pl = self.working.properties[l].clone();
        let pr = self.working.properties[r].clone();
        if pl.kind() != pr.kind() {
            return Err(MergeError::IncompatibleAttributes(format!(
                "{l} is a {:?} property and {r} is a {:?} property",
                pl.kind(),
                pr.kind()
            )));
        }
        let h = ClassHierarchy::new(&self.working);
        let wider = |a: &Iri, b: &Iri| -> Option<Iri> {
            if h.is_subclass_of(a, b) {
                Some(b.clone())
            } else if h.is_subclass_of(b, a) {
                Some(a.clone())
            } else {
                None
            }
        };
        let range = match (&pl.range, &pr.range) {
            (PropertyRange::Datatype(a), PropertyRange::Datatype(b)) => PropertyRange::Datatype(a.join(*b)),
            (PropertyRange::Class(a), PropertyRange::Class(b)) => {
                PropertyRange::Class(wider(a, b).ok_or_else(|| {
                    MergeError::IncompatibleAttributes(format!("unrelated ranges {a} and {b}"))
                })?)
            }
            _ => unreachable!("kinds checked above"),
        };
        let domain = match (&pl.domain, &pr.domain) {
            (Some(a), Some(b)) => wider(a, b),
            _ => None,
        };
        let target = self.unified_iri(l, r);
        self.working.properties.remove(l);
        self.working.properties.remove(r);
        self.working.add_property(PropertyDef {
            iri: target.clone(),
            domain,
            range,
        });
        self.working.rename_iri(l, &target);
        self.working.rename_iri(r, &target);
        self.retire(l, r, &target);
        Ok(())
    }

    /// Bookkeeping after `l` and `r` became `target`.
    fn retire(&mut self, l: &Iri, r: &Iri, target: &Iri) {
        self.origins.remove(l);
        self.origins.remove(r);
        self.origins.insert(
            target.clone(),
            Origin {
                side: Side::Both,
                source: target.clone(),
            },
        );
        self.pending.retain(|s| !s.mentions(l) && !s.mentions(r));
    }

    fn create_parent(&mut self, name: &str, a: Iri, b: Option<Iri>) -> Result<(), MergeError> {
        let iri = if name.starts_with('#') || name.contains(':') {
            Iri::new(name)
        } else {
            Iri::fragment(name)
        }
        .map_err(|e| MergeError::InvalidDecision(e.to_string()))?;
        if !is_ncname(iri.local_name()) {
            return Err(MergeError::InvalidDecision(format!("{name:?} is not a valid class name")));
        }
        if self.working.contains_iri(&iri) {
            return Err(MergeError::NameCollision(iri));
        }
        self.working.add_class(OntologyClass::new(iri.clone()));
        for child in std::iter::once(a).chain(b) {
            if let Some(c) = self.working.classes.get_mut(&child) {
                c.superclasses.insert(iri.clone());
            }
        }
        self.origins.insert(
            iri.clone(),
            Origin {
                side: Side::Both,
                source: iri,
            },
        );
        Ok(())
    }

    /// Closes the session and returns the merged ontology. Calling it again
    /// returns the same value.
    pub fn finalize(&mut self) -> Result<Ontology, MergeError> {
        if self.status == SessionStatus::Open {
            if !self.pending.is_empty() {
                return Err(MergeError::PendingRemain(self.pending.iter().map(|s| s.id).collect()));
            }
            self.status = SessionStatus::Finalized;
        }
        Ok(self.working.clone())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("sessions always serialize");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<MergeSession, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}
