//! Single-service matchmaking and forward-chaining composition over a
//! [`ServiceCatalog`].

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::error::Error as StdError;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ontology::{Iri, MatchDegree};
use crate::profile::{Atom, Condition, Polarity, ServiceCatalog, ServiceProfile};

pub const DEFAULT_MAX_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionRequest {
    #[serde(rename = "inputs", default)]
    pub provided_inputs: BTreeSet<Iri>,
    #[serde(rename = "outputs")]
    pub required_outputs: BTreeSet<Iri>,
    #[serde(rename = "preconditions", default)]
    pub initial_conditions: BTreeSet<Condition>,
    #[serde(rename = "effects", default)]
    pub goal_effects: BTreeSet<Condition>,
}

impl CompositionRequest {
    pub fn new(
        inputs: impl IntoIterator<Item = Iri>,
        outputs: impl IntoIterator<Item = Iri>,
    ) -> Self {
        CompositionRequest {
            provided_inputs: inputs.into_iter().collect(),
            required_outputs: outputs.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Order-insensitive form: every collection is a sorted set, so the
    /// compact JSON encoding is already canonical.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("requests always serialize")
    }

    pub fn canonical_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    /// Atoms true before the first step.
    pub fn initial_facts(&self) -> BTreeSet<Atom> {
        self.initial_conditions
            .iter()
            .filter(|c| c.polarity == Polarity::Positive)
            .map(Condition::atom)
            .collect()
    }

    pub fn validate(&self, catalog: &ServiceCatalog) -> Result<(), ComposeError> {
        if self.required_outputs.is_empty() {
            return Err(ComposeError::InvalidRequest("required outputs are empty".into()));
        }
        let conditions = self.initial_conditions.iter().chain(&self.goal_effects);
        if let Some(c) = conditions.clone().find(|c| c.predicate.trim().is_empty()) {
            return Err(ComposeError::InvalidRequest(format!("empty predicate in {c}")));
        }
        let concepts = self
            .provided_inputs
            .iter()
            .chain(&self.required_outputs)
            .chain(conditions.flat_map(|c| &c.arguments));
        for c in concepts {
            if !catalog.resolves(c) {
                return Err(ComposeError::InvalidRequest(format!(
                    "concept {c} is not a class of the domain ontology"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ComposeError {
    pub fn code(&self) -> &'static str {
        "INVALID_REQUEST"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BindingSource {
    Request { concept: Iri },
    Step { step: usize, output: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binding {
    pub target: String,
    pub source: BindingSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub service: Iri,
    pub bindings: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputRef {
    pub step: usize,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionPlan {
    /// The request the plan answers; the registry indexes plans by it.
    pub request: CompositionRequest,
    pub steps: Vec<PlanStep>,
    pub delivered_outputs: BTreeMap<Iri, OutputRef>,
}

impl CompositionPlan {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }

    pub fn services(&self) -> impl Iterator<Item = &Iri> {
        self.steps.iter().map(|s| &s.service)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("plans always serialize");
        out.push(b'\n');
        out
    }
}

fn best_degree<'a>(
    catalog: &ServiceCatalog,
    offered: impl IntoIterator<Item = &'a Iri>,
    required: &Iri,
) -> MatchDegree {
    offered
        .into_iter()
        .map(|o| catalog.hierarchy().degree(o, required))
        .max()
        .unwrap_or(MatchDegree::Fail)
}

fn usable(d: MatchDegree) -> bool {
    d >= MatchDegree::Plugin
}

fn conditions_hold<'a>(
    conditions: impl IntoIterator<Item = &'a Condition>,
    facts: &BTreeSet<Atom>,
) -> bool {
    conditions.into_iter().all(|c| c.holds_in(facts))
}

fn apply_effects(effects: &[Condition], facts: &mut BTreeSet<Atom>) {
    for c in effects.iter().filter(|c| c.polarity == Polarity::Negative) {
        facts.remove(&c.atom());
    }
    for c in effects.iter().filter(|c| c.polarity == Polarity::Positive) {
        facts.insert(c.atom());
    }
}

/// Best single service answering `req` on its own, with the weakest
/// parameter match it relies on.
pub fn match_single(catalog: &ServiceCatalog, req: &CompositionRequest) -> Option<(Iri, MatchDegree)> {
    let initial = req.initial_facts();
    let mut best: Option<(MatchDegree, usize, &Iri)> = None;
    for p in catalog.profiles().values() {
        if !conditions_hold(&p.preconditions, &initial) {
            continue;
        }
        let mut after = initial.clone();
        apply_effects(&p.effects, &mut after);
        if !conditions_hold(&req.goal_effects, &after) {
            continue;
        }
        let input_degrees = p
            .inputs
            .iter()
            .map(|i| best_degree(catalog, &req.provided_inputs, &i.concept));
        let output_degrees = req
            .required_outputs
            .iter()
            .map(|r| best_degree(catalog, p.outputs.iter().map(|o| &o.concept), r));
        let degrees: Vec<_> = input_degrees.chain(output_degrees).collect();
        if !degrees.iter().copied().all(usable) {
            continue;
        }
        let score = degrees.into_iter().min().unwrap_or(MatchDegree::Exact);
        let unused = p
            .outputs
            .iter()
            .filter(|o| {
                !req.required_outputs
                    .iter()
                    .any(|r| catalog.hierarchy().is_subclass_of(&o.concept, r))
            })
            .count();
        // Profiles iterate in IRI order, so strict improvement keeps the
        // smallest IRI among equals.
        let better = match best {
            None => true,
            Some((d, u, _)) => score > d || (score == d && unused < u),
        };
        if better {
            best = Some((score, unused, &p.id));
        }
    }
    best.map(|(d, _, id)| (id.clone(), d))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    produced: BTreeSet<Iri>,
    facts: BTreeSet<Atom>,
}

struct Search<'a> {
    catalog: &'a ServiceCatalog,
    req: &'a CompositionRequest,
}

impl Search<'_> {
    fn available<'s>(&'s self, s: &'s State) -> impl Iterator<Item = &'s Iri> + Clone {
        self.req.provided_inputs.iter().chain(&s.produced)
    }

    fn applicable(&self, s: &State, p: &ServiceProfile) -> bool {
        conditions_hold(&p.preconditions, &s.facts)
            && p
                .inputs
                .iter()
                .all(|i| usable(best_degree(self.catalog, self.available(s), &i.concept)))
    }

    fn apply(&self, s: &State, p: &ServiceProfile) -> State {
        let mut next = s.clone();
        next.produced.extend(p.outputs.iter().map(|o| o.concept.clone()));
        apply_effects(&p.effects, &mut next.facts);
        next
    }

    fn is_goal(&self, s: &State) -> bool {
        self.req
            .required_outputs
            .iter()
            .all(|r| usable(best_degree(self.catalog, &s.produced, r)))
            && conditions_hold(&self.req.goal_effects, &s.facts)
    }

    /// Breadth-first over step count. Children are generated in IRI order
    /// from parents visited in lexicographic order, so the first goal found
    /// is the lexicographically smallest among the cheapest sequences.
    fn run(&self, max_depth: usize) -> Option<Vec<&ServiceProfile>> {
        struct Node<'p> {
            state: State,
            parent: Option<usize>,
            service: Option<&'p ServiceProfile>,
            depth: usize,
        }
        let root = State {
            produced: BTreeSet::new(),
            facts: self.req.initial_facts(),
        };
        let mut seen = HashSet::from([root.clone()]);
        let mut nodes = vec![Node {
            state: root,
            parent: None,
            service: None,
            depth: 0,
        }];
        let mut queue = VecDeque::from([0usize]);
        while let Some(at) = queue.pop_front() {
            if nodes[at].depth >= max_depth {
                continue;
            }
            for p in self.catalog.profiles().values() {
                if !self.applicable(&nodes[at].state, p) {
                    continue;
                }
                let next = self.apply(&nodes[at].state, p);
                if !seen.insert(next.clone()) {
                    continue;
                }
                let goal = self.is_goal(&next);
                nodes.push(Node {
                    state: next,
                    parent: Some(at),
                    service: Some(p),
                    depth: nodes[at].depth + 1,
                });
                let id = nodes.len() - 1;
                if goal {
                    let mut seq = Vec::new();
                    let mut cur = Some(id);
                    while let Some(n) = cur {
                        seq.extend(nodes[n].service);
                        cur = nodes[n].parent;
                    }
                    seq.reverse();
                    return Some(seq);
                }
                queue.push_back(id);
            }
        }
        None
    }
}

/// Fewest-steps plan for `req` within `max_depth` steps.
///
/// A request answerable by one service yields exactly the
/// [`match_single`] choice; otherwise ties between equally short plans go
/// to the lexicographically smallest sequence of service IRIs.
pub fn compose(
    catalog: &ServiceCatalog,
    req: &CompositionRequest,
    max_depth: usize,
) -> Result<Option<CompositionPlan>, ComposeError> {
    req.validate(catalog)?;
    if max_depth == 0 {
        return Err(ComposeError::InvalidRequest("max_depth must be at least 1".into()));
    }
    if let Some((id, _)) = match_single(catalog, req) {
        let p = catalog.get(&id).expect("matched profile is registered");
        return Ok(Some(wire(catalog, req, &[p])));
    }
    let search = Search { catalog, req };
    Ok(search.run(max_depth).map(|seq| wire(catalog, req, &seq)))
}

/// Same as [`compose`] from a single-service match, without searching.
pub fn single_step_plan(catalog: &ServiceCatalog, req: &CompositionRequest, service: &Iri) -> Option<CompositionPlan> {
    catalog.get(service).map(|p| wire(catalog, req, &[p]))
}

/// Chooses bindings for an executable service sequence. Candidates are
/// ranked by match degree, then request values before step outputs, then
/// earliest step, then output name.
fn wire(catalog: &ServiceCatalog, req: &CompositionRequest, seq: &[&ServiceProfile]) -> CompositionPlan {
    let h = catalog.hierarchy();
    let mut steps = Vec::with_capacity(seq.len());
    for (i, p) in seq.iter().enumerate() {
        let bindings = p
            .inputs
            .iter()
            .map(|input| {
                let from_request = req
                    .provided_inputs
                    .iter()
                    .map(|c| (h.degree(c, &input.concept), 0usize, BindingSource::Request { concept: c.clone() }));
                let from_steps = seq[..i].iter().enumerate().flat_map(|(j, q)| {
                    q.outputs.iter().map(move |o| {
                        (
                            h.degree(&o.concept, &input.concept),
                            1 + j,
                            BindingSource::Step {
                                step: j,
                                output: o.name.clone(),
                            },
                        )
                    })
                });
                let (_, _, source) = from_request
                    .chain(from_steps)
                    .filter(|(d, _, _)| usable(*d))
                    .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
                    .expect("search only applies executable services");
                Binding {
                    target: input.name.clone(),
                    source,
                }
            })
            .collect();
        steps.push(PlanStep {
            service: p.id.clone(),
            bindings,
        });
    }
    let delivered_outputs = req
        .required_outputs
        .iter()
        .map(|r| {
            let (_, out) = seq
                .iter()
                .enumerate()
                .flat_map(|(j, q)| {
                    q.outputs.iter().map(move |o| {
                        (
                            h.degree(&o.concept, r),
                            OutputRef {
                                step: j,
                                output: o.name.clone(),
                            },
                        )
                    })
                })
                .filter(|(d, _)| usable(*d))
                .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)))
                .expect("goal state covers every required output");
            (r.clone(), out)
        })
        .collect();
    CompositionPlan {
        request: req.clone(),
        steps,
        delivered_outputs,
    }
}

/// Checks bindings, conditions under sequential effect application, and
/// output delivery. Never panics on malformed plans.
pub fn validate_plan(catalog: &ServiceCatalog, req: &CompositionRequest, plan: &CompositionPlan) -> bool {
    let h = catalog.hierarchy();
    let mut profiles = Vec::with_capacity(plan.steps.len());
    let mut facts = req.initial_facts();
    for (i, step) in plan.steps.iter().enumerate() {
        let Some(p) = catalog.get(&step.service) else {
            return false;
        };
        if step.bindings.len() != p.inputs.len() {
            return false;
        }
        let mut bound = BTreeSet::new();
        for b in &step.bindings {
            let Some(input) = p.input(&b.target) else {
                return false;
            };
            if !bound.insert(b.target.as_str()) {
                return false;
            }
            let concept = match &b.source {
                BindingSource::Request { concept } => {
                    if !req.provided_inputs.contains(concept) {
                        return false;
                    }
                    concept
                }
                BindingSource::Step { step: j, output } => {
                    if *j >= i {
                        return false;
                    }
                    let src: &ServiceProfile = profiles[*j];
                    match src.output(output) {
                        Some(o) => &o.concept,
                        None => return false,
                    }
                }
            };
            if !usable(h.degree(concept, &input.concept)) {
                return false;
            }
        }
        if !conditions_hold(&p.preconditions, &facts) {
            return false;
        }
        apply_effects(&p.effects, &mut facts);
        profiles.push(p);
    }
    let keys: BTreeSet<&Iri> = plan.delivered_outputs.keys().collect();
    if keys != req.required_outputs.iter().collect() {
        return false;
    }
    let delivered = plan.delivered_outputs.iter().all(|(r, out)| {
        profiles
            .get(out.step)
            .and_then(|p| p.output(&out.output))
            .is_some_and(|o| usable(h.degree(&o.concept, r)))
    });
    delivered && conditions_hold(&req.goal_effects, &facts)
}

/// One call made to a member service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationEvent {
    pub step: usize,
    pub service: Iri,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation<'a> {
    pub step: usize,
    pub service: &'a Iri,
    pub inputs: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Execution {
    pub outputs: BTreeMap<Iri, serde_json::Value>,
    pub events: Vec<InvocationEvent>,
}

pub type InvokeError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: InvokeError,
    },
    #[error("no value supplied for request concept {0}")]
    MissingRequestValue(Iri),
    #[error("step {step} returned no output named {output:?}")]
    MissingOutput { step: usize, output: String },
}

impl ExecuteError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecuteError::StepFailed { .. } => "STEP_FAILED",
            ExecuteError::MissingRequestValue(_) => "MISSING_INPUT",
            ExecuteError::MissingOutput { .. } => "MISSING_OUTPUT",
        }
    }
}

/// Runs the steps in order, threading bound values. Steps are numbered
/// from 0; the first failing step stops execution.
pub fn execute_plan<F>(
    plan: &CompositionPlan,
    request_values: &BTreeMap<Iri, serde_json::Value>,
    mut invoker: F,
) -> Result<Execution, ExecuteError>
where
    F: FnMut(&Invocation<'_>) -> Result<BTreeMap<String, serde_json::Value>, InvokeError>,
{
    let mut results: Vec<BTreeMap<String, serde_json::Value>> = Vec::with_capacity(plan.steps.len());
    let mut events = Vec::with_capacity(plan.steps.len());
    for (i, step) in plan.steps.iter().enumerate() {
        let mut inputs = BTreeMap::new();
        for b in &step.bindings {
            let value = match &b.source {
                BindingSource::Request { concept } => request_values
                    .get(concept)
                    .ok_or_else(|| ExecuteError::MissingRequestValue(concept.clone()))?,
                BindingSource::Step { step, output } => results
                    .get(*step)
                    .and_then(|r| r.get(output))
                    .ok_or_else(|| ExecuteError::MissingOutput {
                        step: *step,
                        output: output.clone(),
                    })?,
            };
            inputs.insert(b.target.clone(), value.clone());
        }
        let call = Invocation {
            step: i,
            service: &step.service,
            inputs,
        };
        let out = invoker(&call).map_err(|source| ExecuteError::StepFailed { step: i, source })?;
        events.push(InvocationEvent {
            step: i,
            service: step.service.clone(),
        });
        results.push(out);
    }
    let mut outputs = BTreeMap::new();
    for (concept, out) in &plan.delivered_outputs {
        let value = results
            .get(out.step)
            .and_then(|r| r.get(&out.output))
            .ok_or_else(|| ExecuteError::MissingOutput {
                step: out.step,
                output: out.output.clone(),
            })?;
        outputs.insert(concept.clone(), value.clone());
    }
    Ok(Execution { outputs, events })
}
