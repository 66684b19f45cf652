use std::path::PathBuf;

use precompose_core::ontology::{parse_ontology, serialize_ontology, Format};
use precompose_core::registry::RegistryStore;
use precompose_server::{serve, App, SERVED_FROM_HEADER};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::sync::oneshot;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn request(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(fixture(&format!("requests/{name}.json"))).unwrap()).unwrap()
}

struct Server {
    base: String,
    client: Client,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
    dir: tempfile::TempDir,
}

impl Server {
    async fn start() -> Server {
        let dir = tempfile::tempdir().unwrap();
        let app = App::open(dir.path(), &fixture("elearning_catalog.json")).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}/v1", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(serve(listener, app, async {
            let _ = rx.await;
        }));
        Server { base, client: Client::new(), stop: Some(tx), task: Some(task), dir }
    }

    async fn stop(&mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.take().unwrap().await.unwrap().unwrap();
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn user(&self, name: &str) -> String {
        let r = self.client.post(self.url("/users")).json(&json!({ "name": name })).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::CREATED);
        r.json::<Value>().await.unwrap()["user_id"].as_str().unwrap().to_string()
    }

    async fn compose(&self, user: &str, body: &Value) -> (StatusCode, Option<String>, Value) {
        let r = self
            .client
            .post(self.url("/compose"))
            .header("x-user-id", user)
            .json(body)
            .send()
            .await
            .unwrap();
        let from = r.headers().get(SERVED_FROM_HEADER).map(|v| v.to_str().unwrap().to_string());
        (r.status(), from, r.json().await.unwrap())
    }

    async fn get(&self, path: &str, user: Option<&str>) -> (StatusCode, Value) {
        let mut r = self.client.get(self.url(path));
        if let Some(u) = user {
            r = r.header("x-user-id", u);
        }
        let r = r.send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn stats(&self) -> Value {
        self.get("/stats", None).await.1
    }
}

#[tokio::test]
async fn fresh_store_lists_nothing() {
    let mut s = Server::start().await;
    let u = s.user("Asha").await;
    let (status, body) = s.get("/services", Some(&u)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
    s.stop().await;
}

#[tokio::test]
async fn listing_requires_a_known_user() {
    let mut s = Server::start().await;
    for user in [None, Some("u404")] {
        let (status, body) = s.get("/services", user).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED);
        assert_eq!(body["code"], "UNKNOWN_USER");
        assert!(body["message"].is_string());
    }
    let (status, _, body) = s.compose("u404", &request("ebooks_only")).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("UNKNOWN_USER")));
    s.stop().await;
}

#[tokio::test]
async fn repeat_compose_is_served_from_cache() {
    let mut s = Server::start().await;
    let u = s.user("Asha").await;
    let lrl = request("learning_resource_library");

    let (status, from, first) = s.compose(&u, &lrl).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(from.as_deref(), Some("composer"));
    assert_eq!(first["service"]["plan"]["steps"].as_array().unwrap().len(), 5);
    assert_eq!(first["execution"]["events"].as_array().unwrap().len(), 5);
    let description = first["service"]["description"].as_str().unwrap();
    assert!(description.contains("Computer (4)") && description.contains("History (2)"), "{description}");
    let before = s.stats().await;
    assert_eq!(before["planner_invocations"], 1);

    let (status, from, second) = s.compose(&u, &lrl).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(from.as_deref(), Some("cache"));
    assert_eq!(second["service"], first["service"]);
    let after = s.stats().await;
    assert_eq!(after["planner_invocations"], before["planner_invocations"]);
    assert_eq!(after["cache_hits"], 1);
    assert_eq!(after["function_calls"], 10);

    // Same request from another user, inputs reordered: identical body.
    let v = s.user("Bo").await;
    let mut reordered = lrl.clone();
    reordered["outputs"].as_array_mut().unwrap().reverse();
    let (_, from, third) = s.compose(&v, &reordered).await;
    assert_eq!(from.as_deref(), Some("cache"));
    assert_eq!(third, second);

    let (_, listed) = s.get("/services", Some(&u)).await;
    assert_eq!(listed.as_array().unwrap().len(), 1);
    assert_eq!(listed[0]["user_requests"], 2);
    assert_eq!(listed[0]["total_requests"], 3);

    let oid = first["service"]["ontology_id"].as_str().unwrap();
    let bytes = s.client.get(s.url(&format!("/ontologies/{oid}"))).send().await.unwrap().bytes().await.unwrap();
    let expected = parse_ontology(&std::fs::read(fixture("merged_lrl.owl")).unwrap(), Format::RdfXmlSubset).unwrap();
    assert_eq!(&bytes[..], &serialize_ontology(&expected, Format::CanonicalJson)[..]);
    s.stop().await;
}

#[tokio::test]
async fn every_successful_compose_logs_once() {
    let mut s = Server::start().await;
    let u = s.user("Asha").await;
    let mut ok = 0;
    for name in ["ebooks_only", "training_scheduler", "unsatisfiable", "ebooks_only", "employee_management"] {
        let (status, _, _) = s.compose(&u, &request(name)).await;
        if status.is_success() {
            ok += 1;
        }
    }
    s.stop().await;
    let store = RegistryStore::open(s.dir.path()).unwrap();
    assert_eq!(ok, 4);
    assert_eq!(store.log().len(), 4);
    assert!(store.log().iter().all(|e| e.user == u));
    assert_eq!(store.records().len(), 3);
}

#[tokio::test]
async fn compose_errors() {
    let mut s = Server::start().await;
    let u = s.user("Asha").await;
    let (status, _, body) = s.compose(&u, &request("unsatisfiable")).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("NO_COMPOSITION")));

    let (status, _, body) = s.compose(&u, &json!({ "inputs": ["#SubjectName"], "outputs": ["#Nothing"] })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("INVALID_REQUEST")));

    let (status, _, body) = s.compose(&u, &json!({ "outputs": ["#EBook"], "colour": 1 })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("INVALID_REQUEST")));

    let r = s
        .client
        .post(s.url("/compose"))
        .header("x-user-id", &u)
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(s.stats().await["planner_invocations"], 1);
    s.stop().await;
}

#[tokio::test]
async fn single_service_and_naming() {
    let mut s = Server::start().await;
    let u = s.user("Asha").await;
    let mut body = request("ebooks_only");
    body["name"] = json!("Ebook shelf");
    let (status, _, out) = s.compose(&u, &body).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(out["service"]["name"], "Ebook shelf");
    assert_eq!(out["service"]["plan"]["steps"][0]["service"], "#WS_EBOOKS");

    let mut clash = request("training_scheduler");
    clash["name"] = json!("Ebook shelf");
    let (status, _, out) = s.compose(&u, &clash).await;
    assert_eq!((status, out["code"].as_str()), (StatusCode::CONFLICT, Some("DUPLICATE_NAME")));
    s.stop().await;
}

#[tokio::test]
async fn concurrent_identical_requests_publish_once() {
    let mut s = Server::start().await;
    let u = s.user("Asha").await;
    let lrl = request("learning_resource_library");
    let calls = (0..8).map(|_| s.compose(&u, &lrl));
    let results = futures::future::join_all(calls).await;
    assert!(results.iter().all(|(status, _, _)| status.is_success()));
    assert_eq!(results.iter().filter(|(status, _, _)| *status == StatusCode::CREATED).count(), 1);
    s.stop().await;
    let store = RegistryStore::open(s.dir.path()).unwrap();
    assert_eq!(store.records().len(), 1);
    assert_eq!(store.log().len(), 8);
}

#[tokio::test]
async fn merge_session_round_trip() {
    let mut s = Server::start().await;
    let (status, snap) = s
        .post("/merge/sessions", json!({ "left_service": "#WS_EBOOKS", "right_service": "#WS_SLIDES" }))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = snap["session_id"].as_str().unwrap().to_string();
    assert_eq!(snap["status"], "OPEN");
    assert_eq!(snap["pending_count"], 12);
    assert_eq!(snap["left"]["individuals"].as_array().unwrap().len(), 3);

    let (status, body) = s.post(&format!("/merge/sessions/{id}/finalize"), json!({})).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("PENDING_REMAIN")));
    assert_eq!(body["detail"]["pending"].as_array().unwrap().len(), 12);

    let (status, body) = s.post(&format!("/merge/sessions/{id}/decisions"), json!({ "suggestion_id": 99, "verdict": "ACCEPT" })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_SUGGESTION")));

    let decisions: Vec<Value> = serde_json::from_slice(&std::fs::read(fixture("lrl_decisions.json")).unwrap()).unwrap();
    let mut remaining = 12;
    for d in decisions {
        let (status, snap) = s.post(&format!("/merge/sessions/{id}/decisions"), d).await;
        assert_eq!(status, StatusCode::OK, "{snap}");
        let now = snap["pending_count"].as_u64().unwrap();
        assert!(now < remaining);
        remaining = now;
    }
    assert_eq!(remaining, 0);
    let (_, snap) = s.get(&format!("/merge/sessions/{id}"), None).await;
    assert_eq!(snap["decisions"].as_array().unwrap().len(), 12);

    let (status, fin) = s.post(&format!("/merge/sessions/{id}/finalize"), json!({})).await;
    assert_eq!(status, StatusCode::CREATED);
    let oid = fin["ontology_id"].as_str().unwrap();
    let bytes = s.client.get(s.url(&format!("/ontologies/{oid}"))).send().await.unwrap().bytes().await.unwrap();
    let expected = parse_ontology(&std::fs::read(fixture("merged_lrl.owl")).unwrap(), Format::RdfXmlSubset).unwrap();
    assert_eq!(&bytes[..], &serialize_ontology(&expected, Format::CanonicalJson)[..]);

    let (status, again) = s.post(&format!("/merge/sessions/{id}/finalize"), json!({})).await;
    assert_eq!((status, &again), (StatusCode::OK, &fin));
    let (status, body) = s.post(&format!("/merge/sessions/{id}/decisions"), json!({ "suggestion_id": 1, "verdict": "REJECT" })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("SESSION_FINALIZED")));
    s.stop().await;
}

#[tokio::test]
async fn accepting_a_class_merge_reshapes_the_queue() {
    let mut s = Server::start().await;
    let ebooks = parse_ontology(&std::fs::read(fixture("ws_ebooks.owl")).unwrap(), Format::RdfXmlSubset).unwrap();
    let doc = precompose_core::ontology::json::to_value(&ebooks);
    let (_, snap) = s.post("/merge/sessions", json!({ "left": doc, "right": doc })).await;
    let id = snap["session_id"].as_str().unwrap().to_string();
    let pending = snap["pending"].as_array().unwrap();
    let class = pending.iter().find(|p| p["kind"] == "MERGE_CLASSES").unwrap();
    let (status, after) = s
        .post(&format!("/merge/sessions/{id}/decisions"), json!({ "suggestion_id": class["id"], "verdict": "ACCEPT" }))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert!(after["pending_count"].as_u64().unwrap() < snap["pending_count"].as_u64().unwrap());
    let old_ids: Vec<&Value> = pending.iter().map(|p| &p["id"]).collect();
    let fresh = after["pending"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["kind"] == "MERGE_ATTRIBUTES" && !old_ids.contains(&&p["id"]))
        .count();
    assert!(fresh > 0, "attribute suggestions are regenerated after a class merge");
    s.stop().await;
}

#[tokio::test]
async fn session_and_ontology_lookups_fail_cleanly() {
    let mut s = Server::start().await;
    let (status, body) = s.get("/merge/sessions/m77", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_SESSION")));
    let (status, body) = s.get("/ontologies/o9", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_ONTOLOGY")));
    let (status, body) = s
        .post("/merge/sessions", json!({ "left_service": "#WS_EBOOKS", "left_ontology_id": "o1", "right_service": "#WS_SLIDES" }))
        .await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("INVALID_REQUEST")));
    let (status, body) = s.post("/merge/sessions", json!({ "left_service": "#WS_VIDEOS", "right_service": "#WS_SLIDES" })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_SERVICE")));
    let (status, body) = s.get("/nowhere", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("NOT_FOUND")));
    let stats = s.stats().await;
    for key in ["planner_invocations", "cache_hits", "compose_requests", "function_calls", "users", "services", "sessions"] {
        assert!(stats[key].is_u64(), "{key}");
    }
    s.stop().await;
}
