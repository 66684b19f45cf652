mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{fixture_bytes, iri, load_owl};
use precompose_core::merger::{
    apply_decision, auto_merge, open_session, pivot_by_property, replay, suggest, MergeDecision,
    MergeError, MergeSession, MergeSettings, PivotOptions, SessionStatus, SuggestionKind, Verdict,
};
use precompose_core::ontology::{
    parse_ontology, serialize_ontology, Datatype, Format, Individual, Iri, Ontology,
    OntologyClass, PropertyDef, PropertyRange, Value,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NS: &str = "http://example.org/elearning#";

fn ebooks() -> Ontology {
    load_owl("ws_ebooks.owl")
}

fn slides() -> Ontology {
    load_owl("ws_slides.owl")
}

fn lrl_links() -> BTreeMap<Iri, String> {
    BTreeMap::from([(iri("#EBOOKS"), "hasEbook".into()), (iri("#SLIDES"), "hasSlides".into())])
}

fn decisions(name: &str) -> Vec<MergeDecision> {
    serde_json::from_slice(&fixture_bytes(name)).unwrap()
}

fn pairs(s: &MergeSession, kind: SuggestionKind) -> BTreeSet<(String, String)> {
    s.pending()
        .iter()
        .filter(|p| p.kind == kind)
        .map(|p| (p.left.local_name().to_string(), p.right.as_ref().map(|r| r.local_name().to_string()).unwrap_or_default()))
        .collect()
}

#[test]
fn shared_attributes_are_suggested() {
    let s = open_session(ebooks(), slides());
    let names: BTreeSet<String> = s
        .pending()
        .iter()
        .filter(|p| p.kind == SuggestionKind::MergeAttributes)
        .map(|p| p.left.local_name().trim_start_matches("L_").to_string())
        .collect();
    assert_eq!(names, BTreeSet::from(["hasAuthor", "hasTitle", "hasSubject", "hasDescription"].map(String::from)));
    assert!(pairs(&s, SuggestionKind::MergeClasses).is_empty());
    assert!(s.working().properties.contains_key(&iri("#L_hasAuthor")));
    assert!(s.working().properties.contains_key(&iri("#R_hasAuthor")));
    assert!(s.working().properties.contains_key(&iri("#hasPrice")));
}

#[test]
fn ebooks_and_slides_names_are_too_far_apart() {
    let strict = MergeSettings { theta_name: 0.0, theta_struct: 0.30 };
    let s = MergeSession::open(ebooks(), slides(), strict);
    let class = s.pending().iter().find(|p| p.kind == SuggestionKind::MergeClasses).unwrap();
    // "ebooks" vs "slides": five edits over six characters.
    assert!((class.name_similarity - 1.0 / 6.0).abs() < 1e-12);
    assert!(class.name_similarity < MergeSettings::default().theta_name);
}

#[test]
fn merging_with_empty_only_copies() {
    let empty = Ontology::new(iri(NS));
    let s = open_session(ebooks(), empty);
    assert_eq!(s.working(), &ebooks());
    assert!(s.pending().iter().all(|p| !p.kind.is_merge()));
    assert_eq!(s.pending().len(), 1 + 3);
}

#[test]
fn self_merge_pairs_everything_with_itself() {
    let o = ebooks();
    let s = open_session(o.clone(), o.clone());
    let merges: Vec<_> = s.pending().iter().filter(|p| p.kind.is_merge()).collect();
    assert_eq!(merges.len(), o.classes.len() + o.properties.len());
    for p in merges {
        let (l, r) = (p.left.local_name(), p.right.as_ref().unwrap().local_name());
        assert_eq!(l.trim_start_matches("L_"), r.trim_start_matches("R_"));
        assert_eq!(p.name_similarity, 1.0);
        assert_eq!(p.structural_similarity, 1.0);
    }
}

/// The slide fixture with its class renamed to EBOOKS: same class name, four
/// of the six e-book properties.
fn slides_as_ebooks() -> Ontology {
    let mut o = slides();
    o.rename_iri(&iri("#SLIDES"), &iri("#EBOOKS"));
    o
}

#[test]
fn class_structure_is_jaccard_of_property_names() {
    let s = open_session(ebooks(), slides_as_ebooks());
    let class = s.pending().iter().find(|p| p.kind == SuggestionKind::MergeClasses).unwrap();
    assert_eq!((class.left.as_str(), class.right.as_ref().unwrap().as_str()), ("#L_EBOOKS", "#R_EBOOKS"));
    assert_eq!(class.name_similarity, 1.0);
    assert!((class.structural_similarity - 4.0 / 6.0).abs() < 1e-12);
    assert!(!class.conflict);
    // Attribute pairs at (1.0, 1.0) rank above the class pair at (1.0, 0.67).
    let first_class = s.pending().iter().position(|p| p.kind == SuggestionKind::MergeClasses).unwrap();
    assert!(s.pending()[..first_class].iter().all(|p| p.kind == SuggestionKind::MergeAttributes));
}

fn class_suggestion(s: &MergeSession) -> u64 {
    s.pending().iter().find(|p| p.kind == SuggestionKind::MergeClasses).unwrap().id
}

#[test]
fn accepting_a_class_merge() {
    let s = open_session(ebooks(), slides_as_ebooks());
    let class_id = class_suggestion(&s);
    let max_id = s.pending().iter().map(|p| p.id).max().unwrap();
    let before_attrs = pairs(&s, SuggestionKind::MergeAttributes);
    let after = apply_decision(&s, MergeDecision::accept(class_id)).unwrap();

    let w = after.working();
    assert_eq!(w.classes.keys().collect::<Vec<_>>(), [&iri("#EBOOKS")]);
    assert!(w.individuals.values().all(|i| i.types == BTreeSet::from([iri("#EBOOKS")])));
    assert_eq!(w.individuals.len(), 6);
    assert_eq!(w.properties[&iri("#hasPrice")].range, PropertyRange::Datatype(Datatype::Decimal));
    assert!(pairs(&after, SuggestionKind::MergeClasses).is_empty());
    assert!(pairs(&after, SuggestionKind::CopyClass).is_empty());
    assert_eq!(pairs(&after, SuggestionKind::MergeAttributes), before_attrs);
    assert!(after
        .pending()
        .iter()
        .filter(|p| p.kind == SuggestionKind::MergeAttributes)
        .all(|p| p.id > max_id));
    assert_eq!(after.pending().len(), s.pending().len() - 1);
    assert_eq!(after.decision_log(), [MergeDecision::accept(class_id)]);
}

fn tiny(ns: &str, classes: &[&str]) -> Ontology {
    let mut o = Ontology::new(iri(ns));
    for c in classes {
        o.add_class(OntologyClass::new(iri(c)));
    }
    o
}

fn with_data(mut o: Ontology, ind: &str, class: &str, props: &[(&str, &str)]) -> Ontology {
    let mut i = Individual::new(iri(ind), iri(class));
    for (p, lexical) in props {
        let p = iri(p);
        let value = Value::literal(*lexical);
        let tag = match &value {
            Value::Literal { datatype, .. } => *datatype,
            Value::Ref(_) => unreachable!(),
        };
        let joined = match o.properties.get(&p).map(|d| &d.range) {
            Some(PropertyRange::Datatype(d)) => d.join(tag),
            _ => tag,
        };
        o.add_property(PropertyDef::data(p.clone(), joined));
        i.assert(p, value);
    }
    o.add_individual(i);
    o
}

#[test]
fn semantic_conflicts_are_flagged_and_rejection_is_conservative() {
    let left = with_data(tiny(NS, &["#Course"]), "#c1", "#Course", &[("#hasTutor", "Ann"), ("#hasRoom", "B2")]);
    let right = with_data(tiny(NS, &["#Course"]), "#c2", "#Course", &[("#hasFee", "20"), ("#hasLevel", "3")]);
    let s = open_session(left, right);
    let conflict = s.pending().iter().find(|p| p.kind == SuggestionKind::MergeClasses).unwrap();
    assert_eq!(conflict.structural_similarity, 0.0);
    assert!(conflict.conflict);
    assert_eq!(conflict.recommended, Verdict::Reject);
    assert!(conflict.rationale.starts_with("SEMANTIC_CONFLICT"));
    let after = apply_decision(&s, MergeDecision::reject(conflict.id)).unwrap();
    assert_eq!(after.working(), s.working());
    assert_eq!(after.pending().len(), s.pending().len() - 1);
    assert!(after.suggestion(conflict.id).is_none());
}

#[test]
fn attribute_merge_widens_datatypes() {
    let left = with_data(tiny(NS, &["#Book"]), "#b1", "#Book", &[("#hasPrice", "44.95")]);
    let right = with_data(tiny(NS, &["#Slide"]), "#s1", "#Slide", &[("#hasPrice", "free")]);
    let s = open_session(left, right);
    let attr = s.pending().iter().find(|p| p.kind == SuggestionKind::MergeAttributes).unwrap();
    let rec = attr.reconciliation.unwrap();
    assert_eq!((rec.left, rec.right, rec.resolved), (Datatype::Decimal, Datatype::String, Datatype::String));
    let after = apply_decision(&s, MergeDecision::accept(attr.id)).unwrap();
    let price = &after.working().properties[&iri("#hasPrice")];
    assert_eq!(price.range, PropertyRange::Datatype(Datatype::String));
    assert_eq!(after.working().individuals[&iri("#b1")].values(&iri("#hasPrice")).len(), 1);
}

#[test]
fn create_new_reparents_both_classes() {
    let s = open_session(ebooks(), slides_as_ebooks());
    let class_id = class_suggestion(&s);
    let collision = apply_decision(&s, MergeDecision::create_new(class_id, "bk101")).unwrap_err();
    assert_eq!(collision.code(), "NAME_COLLISION");
    let after = apply_decision(&s, MergeDecision::create_new(class_id, "RESOURCE")).unwrap();
    let w = after.working();
    for c in ["#L_EBOOKS", "#R_EBOOKS"] {
        assert!(w.classes[&iri(c)].superclasses.contains(&iri("#RESOURCE")));
    }
    assert_eq!(w.individuals.len(), s.working().individuals.len());
    let copy = after.pending().iter().find(|p| p.kind == SuggestionKind::CopyIndividual).unwrap();
    let err = apply_decision(&after, MergeDecision::create_new(copy.id, "X")).unwrap_err();
    assert_eq!(err.code(), "INVALID_DECISION");
}

#[test]
fn decision_errors() {
    let mut s = open_session(ebooks(), slides());
    assert_eq!(s.apply(MergeDecision::accept(999)), Err(MergeError::UnknownSuggestion(999)));
    let missing_name = MergeDecision { suggestion_id: 1, verdict: Verdict::CreateNew, new_name: None };
    assert_eq!(s.apply(missing_name).unwrap_err().code(), "INVALID_DECISION");
    assert!(s.decision_log().is_empty());
}

#[test]
fn finalize_rules() {
    let mut s = open_session(ebooks(), slides());
    match s.finalize() {
        Err(MergeError::PendingRemain(ids)) => assert_eq!(ids.len(), s.pending().len()),
        other => panic!("{other:?}"),
    }
    for d in decisions("lrl_decisions.json") {
        s.apply(d).unwrap();
    }
    let mut one_left = open_session(ebooks(), slides());
    for d in &decisions("lrl_decisions.json")[..11] {
        one_left.apply(d.clone()).unwrap();
    }
    assert_eq!(one_left.finalize(), Err(MergeError::PendingRemain(vec![12])));

    let first = s.finalize().unwrap();
    assert_eq!(s.status(), SessionStatus::Finalized);
    assert_eq!(s.finalize().unwrap(), first);
    assert_eq!(s.apply(MergeDecision::accept(1)), Err(MergeError::SessionFinalized));
}

fn lrl_pivot(o: &Ontology) -> Ontology {
    pivot_by_property(o, &iri("#hasSubject"), &lrl_links(), PivotOptions { first_number: 301 }).unwrap()
}

#[test]
fn merged_library_from_scripted_replay() {
    let s = replay(ebooks(), slides(), MergeSettings::default(), &decisions("lrl_decisions.json")).unwrap();
    let mut s = s;
    let merged = s.finalize().unwrap();
    let pivoted = lrl_pivot(&merged);
    let expected = load_owl("merged_lrl.owl");
    assert_eq!(pivoted, expected);
    assert_eq!(
        serialize_ontology(&pivoted, Format::RdfXmlSubset),
        serialize_ontology(&expected, Format::RdfXmlSubset)
    );
    let group = |ind: &str, prop: &str| -> BTreeSet<String> {
        pivoted.individuals[&iri(ind)]
            .values(&iri(prop))
            .iter()
            .map(|v| v.as_ref_iri().unwrap().to_string())
            .collect()
    };
    assert_eq!(pivoted.individuals[&iri("#s301")].types, BTreeSet::from([iri("#COMPUTER")]));
    assert_eq!(group("#s301", "#hasEbook"), BTreeSet::from(["#bk101".into(), "#bk102".into()]));
    assert_eq!(group("#s301", "#hasSlides"), BTreeSet::from(["#slide201".into(), "#slide202".into()]));
    assert_eq!(pivoted.individuals[&iri("#s302")].types, BTreeSet::from([iri("#HISTORY")]));
    assert_eq!(group("#s302", "#hasEbook"), BTreeSet::from(["#bk103".into()]));
    assert_eq!(group("#s302", "#hasSlides"), BTreeSet::from(["#slide203".into()]));
}

#[test]
fn unattended_merge_reaches_the_same_ontology() {
    let merged = auto_merge(ebooks(), slides(), MergeSettings::default()).unwrap();
    assert_eq!(lrl_pivot(&merged), load_owl("merged_lrl.owl"));
}

#[test]
fn pivot_is_complete_and_non_destructive() {
    let merged = auto_merge(ebooks(), slides(), MergeSettings::default()).unwrap();
    let pivoted = lrl_pivot(&merged);
    let carriers = merged
        .individuals
        .values()
        .filter(|i| !i.values(&iri("#hasSubject")).is_empty())
        .count();
    let links: usize = pivoted
        .individuals
        .values()
        .filter(|i| i.types.iter().any(|t| t.as_str() == "#COMPUTER" || t.as_str() == "#HISTORY"))
        .map(|i| i.assertion_count())
        .sum();
    assert_eq!((carriers, links), (6, 6));
    for (k, v) in &merged.individuals {
        assert_eq!(&pivoted.individuals[k], v);
    }
    let default_numbering =
        pivot_by_property(&merged, &iri("#hasSubject"), &lrl_links(), PivotOptions::default()).unwrap();
    assert!(default_numbering.individuals.contains_key(&iri("#s1")));
    assert!(default_numbering.individuals.contains_key(&iri("#s2")));
}

#[test]
fn pivot_edge_cases() {
    let merged = auto_merge(ebooks(), slides(), MergeSettings::default()).unwrap();
    let mut no_individuals = merged.clone();
    no_individuals.individuals.clear();
    assert_eq!(lrl_pivot(&no_individuals), no_individuals);

    let err = |o: &Ontology, prop: &str, links: BTreeMap<Iri, String>| {
        pivot_by_property(o, &iri(prop), &links, PivotOptions::default()).unwrap_err().code()
    };
    assert_eq!(err(&merged, "#hasNothing", lrl_links()), "MISSING_PROPERTY");
    let mut with_object = merged.clone();
    with_object.add_property(PropertyDef::object(iri("#relatedTo"), iri("#EBOOKS")));
    assert_eq!(err(&with_object, "#relatedTo", lrl_links()), "NOT_DATA_PROPERTY");
    let videos = BTreeMap::from([(iri("#VIDEOS"), "hasVideo".into())]);
    assert_eq!(err(&merged, "#hasSubject", videos), "UNKNOWN_CLASS");
}

#[test]
fn session_json_round_trip() {
    let mut s = open_session(ebooks(), slides());
    s.apply(MergeDecision::accept(1)).unwrap();
    let bytes = s.to_json();
    let back = MergeSession::from_json(&bytes).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_json(), bytes);
}

#[test]
fn suggest_matches_a_fresh_session() {
    let s = open_session(ebooks(), slides());
    assert_eq!(suggest(&ebooks(), &slides(), MergeSettings::default()), s.pending());
}

// ---------------------------------------------------------------------------
// Random ontology pairs.

const CLASS_NAMES: &[&str] = &["Book", "Books", "EBook", "Slide", "Slides", "Video", "Course", "Courses", "Tool", "Tools", "Topic", "Topics"];
const PROP_NAMES: &[&str] = &["hasAuthor", "hasAuthors", "hasTitle", "hasSubject", "hasPrice", "hasDate", "hasTopic", "hasName"];

fn random_ontology(rng: &mut ChaCha8Rng) -> Ontology {
    let mut o = Ontology::new(iri(NS));
    let mut names = CLASS_NAMES.to_vec();
    names.shuffle(rng);
    let classes: Vec<Iri> = names[..rng.gen_range(1..=10)].iter().map(|n| iri(&format!("#{n}"))).collect();
    for (i, c) in classes.iter().enumerate() {
        let mut class = OntologyClass::new(c.clone());
        for sup in &classes[..i] {
            if rng.gen_bool(0.15) {
                class.superclasses.insert(sup.clone());
            }
        }
        if rng.gen_bool(0.2) {
            class.label = Some(c.local_name().to_uppercase());
        }
        o.add_class(class);
    }
    let mut props = PROP_NAMES.to_vec();
    props.shuffle(rng);
    let props = &props[..rng.gen_range(0..=5)];
    for p in props {
        let domain = rng.gen_bool(0.4).then(|| classes.choose(rng).unwrap().clone());
        let def = if rng.gen_bool(0.25) {
            PropertyDef::object(iri(&format!("#{p}")), classes.choose(rng).unwrap().clone())
        } else {
            PropertyDef::data(iri(&format!("#{p}")), *Datatype::ALL.choose(rng).unwrap())
        };
        o.add_property(PropertyDef { domain, ..def });
    }
    let n = rng.gen_range(0..=4);
    for k in 0..n {
        let class = classes.choose(rng).unwrap().clone();
        o.add_individual(Individual::new(iri(&format!("#i{k}")), class));
    }
    let ind_iris: Vec<Iri> = o.individuals.keys().cloned().collect();
    let defs: Vec<PropertyDef> = o.properties.values().cloned().collect();
    for ind in &ind_iris {
        for def in &defs {
            if !rng.gen_bool(0.5) {
                continue;
            }
            let value = match &def.range {
                PropertyRange::Class(_) => Value::Ref(ind_iris.choose(rng).unwrap().clone()),
                PropertyRange::Datatype(d) => {
                    let lexical = match d {
                        Datatype::Integer => "7",
                        Datatype::Decimal => "4.5",
                        Datatype::Date => "2020-02-29",
                        Datatype::Boolean => "true",
                        Datatype::String => "text",
                    };
                    Value::literal(lexical)
                }
            };
            o.individuals.get_mut(ind).unwrap().assert(def.iri.clone(), value);
        }
    }
    o.validate().unwrap();
    o
}

fn random_decisions(s: &mut MergeSession, rng: &mut ChaCha8Rng, steps: usize) {
    for _ in 0..steps {
        if s.pending().is_empty() {
            break;
        }
        let pick = &s.pending()[rng.gen_range(0..s.pending().len())];
        let d = match rng.gen_range(0..10) {
            0..=5 => MergeDecision::accept(pick.id),
            6..=8 => MergeDecision::reject(pick.id),
            _ => MergeDecision::create_new(pick.id, *CLASS_NAMES.choose(rng).unwrap()),
        };
        let _ = s.apply(d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(80))]

    #[test]
    fn replay_reproduces_working_bytes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, r) = (random_ontology(&mut rng), random_ontology(&mut rng));
        let mut s = open_session(l.clone(), r.clone());
        let steps = rng.gen_range(0..20);
        random_decisions(&mut s, &mut rng, steps);
        s.working().validate().unwrap();
        let again = replay(l, r, s.settings(), s.decision_log()).unwrap();
        let bytes = |o: &Ontology| serialize_ontology(o, Format::CanonicalJson);
        prop_assert_eq!(bytes(again.working()), bytes(s.working()));
        prop_assert_eq!(again.to_json(), s.to_json());
    }

    #[test]
    fn rejects_only_touch_the_queue(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = open_session(random_ontology(&mut rng), random_ontology(&mut rng));
        random_decisions(&mut s, &mut rng, 5);
        if let Some(head) = s.pending().first().map(|p| p.id) {
            let after = apply_decision(&s, MergeDecision::reject(head)).unwrap();
            prop_assert_eq!(after.working(), s.working());
            prop_assert_eq!(after.pending().len() + 1, s.pending().len());
        }
    }

    #[test]
    fn class_decisions_keep_every_individual(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = open_session(random_ontology(&mut rng), random_ontology(&mut rng));
        let total = s.working().individuals.len();
        for _ in 0..15 {
            let classes: Vec<u64> = s.pending().iter()
                .filter(|p| matches!(p.kind, SuggestionKind::MergeClasses | SuggestionKind::CopyClass))
                .map(|p| p.id).collect();
            let Some(&id) = classes.choose(&mut rng) else { break };
            let d = if rng.gen_bool(0.5) {
                MergeDecision::accept(id)
            } else {
                MergeDecision::create_new(id, format!("New{}", rng.gen_range(0..1000)))
            };
            if s.apply(d.clone()).is_err() {
                s.apply(MergeDecision::reject(id)).unwrap();
            }
            prop_assert_eq!(s.working().individuals.len(), total);
        }
    }

    #[test]
    fn queue_is_totally_ordered(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, r) = (random_ontology(&mut rng), random_ontology(&mut rng));
        let a = suggest(&l, &r, MergeSettings::default());
        let b = suggest(&l, &r, MergeSettings::default());
        prop_assert_eq!(&a, &b);
        let ids: BTreeSet<u64> = a.iter().map(|p| p.id).collect();
        prop_assert_eq!(ids.len(), a.len());
        for w in a.windows(2) {
            let key = |p: &precompose_core::merger::MergeSuggestion| (-p.name_similarity, -p.structural_similarity);
            prop_assert!(key(&w[0]) <= key(&w[1]));
            if key(&w[0]) == key(&w[1]) {
                prop_assert!((&w[0].left, &w[0].right, w[0].kind) < (&w[1].left, &w[1].right, w[1].kind));
            }
        }
        for p in &a {
            prop_assert!((0.0..=1.0).contains(&p.name_similarity));
            prop_assert!((0.0..=1.0).contains(&p.structural_similarity));
            prop_assert_eq!(p.kind.is_merge(), p.right.is_some());
        }
    }

    #[test]
    fn auto_merge_always_finalizes_valid_ontologies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, r) = (random_ontology(&mut rng), random_ontology(&mut rng));
        let merged = auto_merge(l.clone(), r.clone(), MergeSettings::default()).unwrap();
        merged.validate().unwrap();
        prop_assert_eq!(merged.individuals.len(), l.individuals.len() + r.individuals.len());
        let reparsed = parse_ontology(&serialize_ontology(&merged, Format::CanonicalJson), Format::CanonicalJson).unwrap();
        prop_assert_eq!(reparsed, merged);
    }
}
