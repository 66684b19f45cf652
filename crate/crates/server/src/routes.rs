use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use precompose_core::composer::CompositionRequest;
use precompose_core::merger::{MergeDecision, MergeSession, MergeSettings};
use precompose_core::ontology::{json as onto_json, serialize_ontology, Format, Iri, Ontology};
use precompose_core::registry::{content_hash, CompositeServiceRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::app::{lock, session_key, App, SessionSlot};
use crate::error::ApiError;

pub const USER_HEADER: &str = "x-user-id";
pub const SERVED_FROM_HEADER: &str = "x-served-from";
/// Wall-clock time spent in the compose handler, in microseconds.
pub const LATENCY_HEADER: &str = "x-handler-micros";

pub fn router(app: App) -> Router {
    let v1 = Router::new()
        .route("/users", post(register_user))
        .route("/services", get(list_services))
        .route("/compose", post(compose))
        .route("/merge/sessions", post(open_session))
        .route("/merge/sessions/{id}", get(get_session))
        .route("/merge/sessions/{id}/decisions", post(decide))
        .route("/merge/sessions/{id}/finalize", post(finalize))
        .route("/ontologies/{id}", get(get_ontology))
        .route("/stats", get(stats));
    Router::new()
        .nest("/v1", v1)
        .fallback(|| async { ApiError::new("NOT_FOUND", "no such endpoint") })
        .with_state(app)
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed body: {e}")))
}

fn user_header(headers: &HeaderMap) -> Option<&str> {
    headers.get(USER_HEADER).and_then(|v| v.to_str().ok())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewUser {
    name: String,
}

async fn register_user(State(app): State<App>, body: Bytes) -> Result<Response, ApiError> {
    let NewUser { name } = parse(&body)?;
    let account = app.with_store(|s| s.register_user(&name))?;
    Ok((StatusCode::CREATED, Json(account)).into_response())
}

#[derive(Serialize)]
struct Listed<'a> {
    #[serde(flatten)]
    record: &'a CompositeServiceRecord,
    user_requests: u64,
    total_requests: u64,
}

async fn list_services(State(app): State<App>, headers: HeaderMap) -> Result<Response, ApiError> {
    let user = app.require_user(user_header(&headers))?;
    let body = app.with_store(|s| -> Result<Value, ApiError> {
        let listed: Vec<Listed> = s
            .list_services(&user)?
            .into_iter()
            .map(|r| Listed {
                record: r,
                user_requests: s.request_count(&user, &r.service_id),
                total_requests: s.global_count(&r.service_id),
            })
            .collect();
        Ok(serde_json::to_value(listed).expect("records serialize"))
    })?;
    Ok(Json(body).into_response())
}

async fn compose(State(app): State<App>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let started = Instant::now();
    let mut value: Value = parse(&body)?;
    let name = match value.as_object_mut().and_then(|o| o.remove("name")) {
        None | Some(Value::Null) => None,
        Some(Value::String(n)) => Some(n),
        Some(_) => return Err(ApiError::invalid("name must be a string")),
    };
    let req: CompositionRequest =
        serde_json::from_value(value).map_err(|e| ApiError::invalid(format!("malformed request: {e}")))?;
    let user = user_header(&headers).map(str::to_owned);
    let worker = app.clone();
    let outcome = tokio::task::spawn_blocking(move || worker.compose(user.as_deref(), req, name))
        .await
        .map_err(|e| ApiError::new("INTERNAL", e.to_string()))??;
    let status = match outcome.served_from {
        crate::app::ServedFrom::Cache => StatusCode::OK,
        crate::app::ServedFrom::Composer => StatusCode::CREATED,
    };
    let served_from = outcome.served_from.as_str();
    let mut response = (status, Json(outcome)).into_response();
    let h = response.headers_mut();
    h.insert(SERVED_FROM_HEADER, HeaderValue::from_static(served_from));
    h.insert(LATENCY_HEADER, HeaderValue::from(started.elapsed().as_micros() as u64));
    Ok(response)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OpenSession {
    left_ontology_id: Option<String>,
    left_service: Option<Iri>,
    left: Option<Value>,
    right_ontology_id: Option<String>,
    right_service: Option<Iri>,
    right: Option<Value>,
    settings: Option<MergeSettings>,
}

fn resolve_side(
    app: &App,
    side: &str,
    stored: Option<String>,
    service: Option<Iri>,
    inline: Option<Value>,
) -> Result<Ontology, ApiError> {
    match (stored, service, inline) {
        (Some(id), None, None) => app.with_store(|s| {
            s.ontology(&id)
                .cloned()
                .ok_or_else(|| ApiError::new("UNKNOWN_ONTOLOGY", format!("unknown ontology {id:?}")))
        }),
        (None, Some(service), None) => app.deployment().service_ontologies.get(&service).cloned().ok_or_else(|| {
            ApiError::new("UNKNOWN_SERVICE", format!("no service ontology for {service}"))
        }),
        (None, None, Some(doc)) => onto_json::from_value(doc).map_err(ApiError::bad_ontology),
        _ => Err(ApiError::invalid(format!(
            "give exactly one of {side}_ontology_id, {side}_service or {side}"
        ))),
    }
}

fn session_slot(app: &App, id: &str) -> Result<Arc<Mutex<SessionSlot>>, ApiError> {
    lock(&app.0.sessions)
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new("UNKNOWN_SESSION", format!("unknown merge session {id:?}")))
}

/// Session view: the pending queue, the decision history and the three
/// ontologies (both sources and the working copy) as canonical JSON.
fn snapshot(slot: &SessionSlot) -> Value {
    let s = &slot.session;
    json!({
        "session_id": s.id(),
        "status": s.status(),
        "settings": s.settings(),
        "pending_count": s.pending().len(),
        "pending": s.pending(),
        "decisions": s.decision_log(),
        "left": onto_json::to_value(s.source_left()),
        "right": onto_json::to_value(s.source_right()),
        "working": onto_json::to_value(s.working()),
        "origins": s.origins(),
        "ontology_id": slot.ontology_id,
    })
}

async fn open_session(State(app): State<App>, body: Bytes) -> Result<Response, ApiError> {
    let req: OpenSession = parse(&body)?;
    let left = resolve_side(&app, "left", req.left_ontology_id, req.left_service, req.left)?;
    let right = resolve_side(&app, "right", req.right_ontology_id, req.right_service, req.right)?;
    let mut session = MergeSession::open(left, right, req.settings.unwrap_or_default());
    let id = session_key(&app);
    session.set_id(id.clone());
    let slot = SessionSlot { session, ontology_id: None };
    let body = snapshot(&slot);
    lock(&app.0.sessions).insert(id, Arc::new(Mutex::new(slot)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(app): State<App>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = session_slot(&app, &id)?;
    let body = snapshot(&lock(&slot));
    Ok(Json(body).into_response())
}

async fn decide(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let decision: MergeDecision = parse(&body)?;
    let slot = session_slot(&app, &id)?;
    let mut slot = lock(&slot);
    slot.session.apply(decision)?;
    Ok(Json(snapshot(&slot)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalizeOptions {
    #[serde(default = "yes")]
    pivot: bool,
}

fn yes() -> bool {
    true
}

async fn finalize(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let options: FinalizeOptions = if body.iter().all(u8::is_ascii_whitespace) {
        FinalizeOptions { pivot: true }
    } else {
        parse(&body)?
    };
    let slot = session_slot(&app, &id)?;
    let mut slot = lock(&slot);
    if let Some(oid) = &slot.ontology_id {
        let hash = app.with_store(|s| s.ontology_meta(oid).map(|m| m.hash.clone()));
        return Ok(Json(json!({ "ontology_id": oid, "content_hash": hash })).into_response());
    }
    // Work on a copy so a failed pivot leaves the session open.
    let mut session = slot.session.clone();
    let mut merged = session.finalize()?;
    if options.pivot {
        merged = app.deployment().apply_pivot(merged)?;
    }
    let hash = content_hash(&merged);
    let oid = app.with_store(|s| s.store_ontology(merged))?;
    slot.session = session;
    slot.ontology_id = Some(oid.clone());
    Ok((StatusCode::CREATED, Json(json!({ "ontology_id": oid, "content_hash": hash }))).into_response())
}

async fn get_ontology(State(app): State<App>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = app.with_store(|s| {
        s.ontology(&id)
            .map(|o| serialize_ontology(o, Format::CanonicalJson))
            .ok_or_else(|| ApiError::new("UNKNOWN_ONTOLOGY", format!("unknown ontology {id:?}")))
    })?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn stats(State(app): State<App>) -> Json<crate::app::Stats> {
    Json(app.stats())
}
