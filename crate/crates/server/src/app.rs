use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use precompose_core::composer::{
    compose, execute_plan, match_single, single_step_plan, CompositionPlan, CompositionRequest, Execution,
    DEFAULT_MAX_DEPTH,
};
use precompose_core::deployment::{Deployment, DeploymentError};
use precompose_core::merger::MergeSession;
use precompose_core::registry::{CompositeServiceRecord, RegistryError, RegistryStore};
use serde::Serialize;
use serde_json::json;

use crate::error::ApiError;

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("cannot load catalog: {0}")]
    Catalog(#[from] DeploymentError),
    #[error(transparent)]
    Store(#[from] RegistryError),
    #[error("cannot bind {addr}: {source}")]
    BindFailed {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server stopped: {0}")]
    Io(#[from] std::io::Error),
}

impl StartError {
    pub fn code(&self) -> &'static str {
        match self {
            StartError::Catalog(_) => "CATALOG",
            StartError::Store(e) => e.code(),
            StartError::BindFailed { .. } => "BIND_FAILED",
            StartError::Io(_) => "IO",
        }
    }
}

#[derive(Debug, Default)]
pub struct Counters {
    pub planner_invocations: AtomicU64,
    pub cache_hits: AtomicU64,
    pub compose_requests: AtomicU64,
    pub function_calls: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub planner_invocations: u64,
    pub cache_hits: u64,
    pub compose_requests: u64,
    pub function_calls: u64,
    pub users: usize,
    pub services: usize,
    pub sessions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ServedFrom {
    Cache,
    Composer,
}

impl ServedFrom {
    pub fn as_str(self) -> &'static str {
        match self {
            ServedFrom::Cache => "cache",
            ServedFrom::Composer => "composer",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComposeOutcome {
    pub served_from: ServedFrom,
    pub service: CompositeServiceRecord,
    pub execution: Execution,
}

pub struct SessionSlot {
    pub session: MergeSession,
    /// Set once the session has been finalized into the ontology base.
    pub ontology_id: Option<String>,
}

pub(crate) struct Inner {
    pub deployment: Deployment,
    pub store: Mutex<RegistryStore>,
    pub sessions: Mutex<BTreeMap<String, Arc<Mutex<SessionSlot>>>>,
    pub next_session: AtomicU64,
    pub counters: Counters,
}

/// Shared handler state. Store mutations go through one mutex; each merge
/// session has its own, so decisions on a session are applied in order.
#[derive(Clone)]
pub struct App(pub(crate) Arc<Inner>);

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl App {
    pub fn new(deployment: Deployment, store: RegistryStore) -> App {
        App(Arc::new(Inner {
            deployment,
            store: Mutex::new(store),
            sessions: Mutex::new(BTreeMap::new()),
            next_session: AtomicU64::new(1),
            counters: Counters::default(),
        }))
    }

    pub fn open(store: &Path, catalog: &Path) -> Result<App, StartError> {
        let deployment = Deployment::load(catalog)?;
        let store = RegistryStore::open(store)?;
        Ok(App::new(deployment, store))
    }

    pub fn deployment(&self) -> &Deployment {
        &self.0.deployment
    }

    pub fn with_store<R>(&self, f: impl FnOnce(&mut RegistryStore) -> R) -> R {
        f(&mut lock(&self.0.store))
    }

    pub fn stats(&self) -> Stats {
        let c = &self.0.counters;
        let (users, services) = self.with_store(|s| (s.users().len(), s.records().iter().filter(|r| !r.deleted).count()));
        Stats {
            planner_invocations: c.planner_invocations.load(Ordering::SeqCst),
            cache_hits: c.cache_hits.load(Ordering::SeqCst),
            compose_requests: c.compose_requests.load(Ordering::SeqCst),
            function_calls: c.function_calls.load(Ordering::SeqCst),
            users,
            services,
            sessions: lock(&self.0.sessions).len(),
        }
    }

    /// Resolves the requesting user or fails with UNKNOWN_USER.
    pub fn require_user(&self, user: Option<&str>) -> Result<String, ApiError> {
        let Some(user) = user else {
            return Err(ApiError::new("UNKNOWN_USER", "missing x-user-id header"));
        };
        self.with_store(|s| match s.user(user) {
            Some(u) => Ok(u.user_id.clone()),
            None => Err(ApiError::new("UNKNOWN_USER", format!("unknown user {user:?}"))),
        })
    }

    /// Cache lookup, then single-service match, then composition. New plans
    /// are published with their merged ontology. Every success is logged
    /// against `user` and executed against the simulated grounding.
    pub fn compose(
        &self,
        user: Option<&str>,
        req: CompositionRequest,
        name: Option<String>,
    ) -> Result<ComposeOutcome, ApiError> {
        let counters = &self.0.counters;
        let user = self.require_user(user)?;
        counters.compose_requests.fetch_add(1, Ordering::SeqCst);
        req.validate(&self.0.deployment.catalog)?;

        if let Some(record) = self.serve_cached(&user, &req)? {
            return self.finish(ServedFrom::Cache, record);
        }

        counters.planner_invocations.fetch_add(1, Ordering::SeqCst);
        let catalog = &self.0.deployment.catalog;
        let plan = match match_single(catalog, &req) {
            Some((service, _)) => single_step_plan(catalog, &req, &service),
            None => compose(catalog, &req, DEFAULT_MAX_DEPTH)?,
        };
        let Some(plan) = plan else {
            return Err(ApiError::new("NO_COMPOSITION", "no composition satisfies the request")
                .with_detail(serde_json::to_value(&req).expect("request serializes")));
        };
        let merged = self.0.deployment.merged_ontology(plan.services())?;

        let mut store = lock(&self.0.store);
        // Another handler may have published the same request meanwhile.
        if let Some(record) = store.lookup_precomposed(&req).cloned() {
            let now = store.now();
            store.record_request(&user, &record.service_id, now)?;
            drop(store);
            counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return self.finish(ServedFrom::Cache, record);
        }
        let name = match name {
            Some(n) => n,
            None => default_name(&store, &plan),
        };
        let record = store.publish_composite(&name, plan, merged)?;
        let now = store.now();
        store.record_request(&user, &record.service_id, now)?;
        drop(store);
        self.finish(ServedFrom::Composer, record)
    }

    fn serve_cached(&self, user: &str, req: &CompositionRequest) -> Result<Option<CompositeServiceRecord>, ApiError> {
        let mut store = lock(&self.0.store);
        let Some(record) = store.lookup_precomposed(req).cloned() else {
            return Ok(None);
        };
        let now = store.now();
        store.record_request(user, &record.service_id, now)?;
        self.0.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
        Ok(Some(record))
    }

    fn finish(&self, served_from: ServedFrom, service: CompositeServiceRecord) -> Result<ComposeOutcome, ApiError> {
        let execution = self.simulate(&service.plan)?;
        self.0.counters.function_calls.fetch_add(execution.events.len() as u64, Ordering::SeqCst);
        Ok(ComposeOutcome { served_from, service, execution })
    }

    /// Runs the plan against a stand-in grounding: request inputs are
    /// placeholders and every member output echoes where it came from.
    fn simulate(&self, plan: &CompositionPlan) -> Result<Execution, ApiError> {
        let catalog = &self.0.deployment.catalog;
        let values = plan
            .request
            .provided_inputs
            .iter()
            .map(|c| (c.clone(), json!(format!("<{}>", c.local_name()))))
            .collect();
        let run = execute_plan(plan, &values, |inv| {
            let profile = catalog.get(inv.service).ok_or("service missing from catalog")?;
            Ok(profile
                .outputs
                .iter()
                .map(|o| {
                    let v = json!({ "service": inv.service, "step": inv.step, "output": o.name });
                    (o.name.clone(), v)
                })
                .collect())
        })?;
        Ok(run)
    }
}

/// Member local names joined with " + ", suffixed when already taken.
fn default_name(store: &RegistryStore, plan: &CompositionPlan) -> String {
    let mut members: Vec<&str> = Vec::new();
    for s in plan.services() {
        if !members.contains(&s.local_name()) {
            members.push(s.local_name());
        }
    }
    let base = members.join(" + ");
    let taken = |n: &str| store.records().iter().any(|r| !r.deleted && r.name == n);
    if !taken(&base) {
        return base;
    }
    (2..).map(|i| format!("{base} ({i})")).find(|n| !taken(n)).expect("unbounded")
}

pub(crate) fn session_key(app: &App) -> String {
    format!("m{}", app.0.next_session.fetch_add(1, Ordering::SeqCst))
}
