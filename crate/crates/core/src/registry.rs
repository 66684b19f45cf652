//! Users, published composite services, the merged-ontology base and the
//! user/service request log, kept in one directory.
//!
//! Layout: `users.json`, `records.json`, `index.json`, `ontologies/<id>.json`
//! (canonical JSON), `ontologies/manifest.json` and the append-only
//! `log.ndjson`. Whole-file writes go to a temporary file in the same
//! directory and are renamed into place.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::composer::{CompositionPlan, CompositionRequest};
use crate::ontology::{json, Iri, Ontology};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        ManualClock(AtomicI64::new(start))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserAccount {
    pub user_id: String,
    pub display_name: String,
    pub registered_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeServiceRecord {
    pub service_id: Iri,
    pub name: String,
    pub description: String,
    pub plan: CompositionPlan,
    pub ontology_id: String,
    pub created_at: Timestamp,
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyMeta {
    pub hash: String,
    pub updated_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub user: String,
    pub service: Iri,
    pub ts: Timestamp,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown composite service {0}")]
    UnknownService(Iri),
    #[error("unknown ontology {0:?}")]
    UnknownOntology(String),
    #[error("a composite service named {0:?} already exists")]
    DuplicateName(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store is corrupt: {0}")]
    Corrupt(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::UnknownUser(_) => "UNKNOWN_USER",
            RegistryError::UnknownService(_) => "UNKNOWN_SERVICE",
            RegistryError::UnknownOntology(_) => "UNKNOWN_ONTOLOGY",
            RegistryError::DuplicateName(_) => "DUPLICATE_NAME",
            RegistryError::Io { .. } => "IO",
            RegistryError::Corrupt(_) => "STORE_CORRUPT",
        }
    }
}

type Result<T, E = RegistryError> = std::result::Result<T, E>;

pub fn content_hash(o: &Ontology) -> String {
    hex::encode(Sha256::digest(json::serialize(o)))
}

/// Text shown for a composite service: its classes, then any groups made by
/// a pivot with their member counts.
pub fn describe(o: &Ontology) -> String {
    let mut groups: BTreeMap<&str, Vec<(String, usize)>> = BTreeMap::new();
    let mut plain = Vec::new();
    for c in o.classes.values() {
        match c.annotations.get("groupedBy") {
            Some(by) => {
                let members = o
                    .individuals
                    .values()
                    .filter(|i| i.types.contains(&c.iri))
                    .map(|i| i.assertion_count())
                    .sum();
                groups.entry(by).or_default().push((c.display_name().to_string(), members));
            }
            None => plain.push(c.display_name().to_string()),
        }
    }
    let mut text = format!(
        "Classes: {}. {} individuals.",
        if plain.is_empty() { "none".to_string() } else { plain.join(", ") },
        o.individuals.len()
    );
    for (by, mut items) in groups {
        items.sort();
        let listed: Vec<String> = items.iter().map(|(n, k)| format!("{n} ({k})")).collect();
        text.push_str(&format!(" Grouped by {by}: {}.", listed.join(", ")));
    }
    text
}

struct OntologyEntry {
    ontology: Ontology,
    meta: OntologyMeta,
}

pub struct RegistryStore {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    users: Vec<UserAccount>,
    user_index: HashMap<String, usize>,
    records: Vec<CompositeServiceRecord>,
    record_index: HashMap<Iri, usize>,
    ontologies: BTreeMap<String, OntologyEntry>,
    request_index: BTreeMap<String, Iri>,
    log: Vec<LogEntry>,
    per_user: HashMap<(String, Iri), u64>,
    global: HashMap<Iri, u64>,
}

impl std::fmt::Debug for RegistryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegistryStore")
            .field("dir", &self.dir)
            .field("users", &self.users.len())
            .field("records", &self.records.len())
            .field("ontologies", &self.ontologies.len())
            .field("log", &self.log.len())
            .finish()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("store files live in a directory");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| RegistryError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("store documents always serialize");
    out.push(b'\n');
    out
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, default: T) -> Result<T> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map_err(|e| RegistryError::Corrupt(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(default),
        Err(e) => Err(io_err(path)(e)),
    }
}

impl RegistryStore {
    /// Opens the store in `dir`, creating an empty one if needed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        RegistryStore::open_with_clock(dir, Arc::new(SystemClock))
    }

    pub fn open_with_clock(dir: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self> {
        let dir = dir.into();
        let onto_dir = dir.join("ontologies");
        fs::create_dir_all(&onto_dir).map_err(io_err(&onto_dir))?;

        let users: Vec<UserAccount> = read_json(&dir.join("users.json"), Vec::new())?;
        let records: Vec<CompositeServiceRecord> = read_json(&dir.join("records.json"), Vec::new())?;
        let request_index: BTreeMap<String, Iri> = read_json(&dir.join("index.json"), BTreeMap::new())?;
        let manifest: BTreeMap<String, OntologyMeta> =
            read_json(&onto_dir.join("manifest.json"), BTreeMap::new())?;

        let mut ontologies = BTreeMap::new();
        for (id, meta) in manifest {
            let path = onto_dir.join(format!("{id}.json"));
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if hex::encode(Sha256::digest(&bytes)) != meta.hash {
                return Err(RegistryError::Corrupt(format!("hash mismatch for ontology {id}")));
            }
            let ontology = crate::ontology::parse_ontology(&bytes, crate::ontology::Format::CanonicalJson)
                .map_err(|e| RegistryError::Corrupt(format!("ontology {id}: {e}")))?;
            ontologies.insert(id, OntologyEntry { ontology, meta });
        }

        let mut store = RegistryStore {
            dir,
            clock,
            user_index: users.iter().enumerate().map(|(i, u)| (u.user_id.clone(), i)).collect(),
            users,
            record_index: records.iter().enumerate().map(|(i, r)| (r.service_id.clone(), i)).collect(),
            records,
            ontologies,
            request_index,
            log: Vec::new(),
            per_user: HashMap::new(),
            global: HashMap::new(),
        };
        for r in &store.records {
            if !store.ontologies.contains_key(&r.ontology_id) {
                return Err(RegistryError::Corrupt(format!(
                    "record {} references missing ontology {}",
                    r.service_id, r.ontology_id
                )));
            }
        }
        let log_path = store.dir.join("log.ndjson");
        match fs::File::open(&log_path) {
            Ok(f) => {
                for (n, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(io_err(&log_path))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: LogEntry = serde_json::from_str(&line)
                        .map_err(|e| RegistryError::Corrupt(format!("log line {}: {e}", n + 1)))?;
                    store.count(&entry);
                    store.log.push(entry);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&log_path)(e)),
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn count(&mut self, e: &LogEntry) {
        *self.per_user.entry((e.user.clone(), e.service.clone())).or_default() += 1;
        *self.global.entry(e.service.clone()).or_default() += 1;
    }

    fn save_users(&self) -> Result<()> {
        write_atomic(&self.dir.join("users.json"), &to_json(&self.users))
    }

    fn save_records(&self) -> Result<()> {
        write_atomic(&self.dir.join("records.json"), &to_json(&self.records))?;
        write_atomic(&self.dir.join("index.json"), &to_json(&self.request_index))
    }

    fn save_ontology(&self, id: &str) -> Result<()> {
        let onto_dir = self.dir.join("ontologies");
        let entry = &self.ontologies[id];
        write_atomic(&onto_dir.join(format!("{id}.json")), &json::serialize(&entry.ontology))?;
        let manifest: BTreeMap<&String, &OntologyMeta> =
            self.ontologies.iter().map(|(k, v)| (k, &v.meta)).collect();
        write_atomic(&onto_dir.join("manifest.json"), &to_json(&manifest))
    }

    pub fn register_user(&mut self, display_name: &str) -> Result<UserAccount> {
        let account = UserAccount {
            user_id: format!("u{}", self.users.len() + 1),
            display_name: display_name.to_string(),
            registered_at: self.clock.now(),
        };
        self.user_index.insert(account.user_id.clone(), self.users.len());
        self.users.push(account.clone());
        self.save_users()?;
        Ok(account)
    }

    pub fn user(&self, id: &str) -> Option<&UserAccount> {
        self.user_index.get(id).map(|&i| &self.users[i])
    }

    pub fn users(&self) -> &[UserAccount] {
        &self.users
    }

    /// Every record, deleted ones included, in publication order.
    pub fn records(&self) -> &[CompositeServiceRecord] {
        &self.records
    }

    pub fn record(&self, id: &Iri) -> Option<&CompositeServiceRecord> {
        self.record_index.get(id).map(|&i| &self.records[i])
    }

    pub fn ontology(&self, id: &str) -> Option<&Ontology> {
        self.ontologies.get(id).map(|e| &e.ontology)
    }

    pub fn ontology_meta(&self, id: &str) -> Option<&OntologyMeta> {
        self.ontologies.get(id).map(|e| &e.meta)
    }

    pub fn ontology_ids(&self) -> impl Iterator<Item = &String> {
        self.ontologies.keys()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Adds an ontology to the base and returns its id.
    pub fn store_ontology(&mut self, o: Ontology) -> Result<String> {
        let id = format!("o{}", self.ontologies.len() + 1);
        let meta = OntologyMeta {
            hash: content_hash(&o),
            updated_at: self.clock.now(),
        };
        self.ontologies.insert(id.clone(), OntologyEntry { ontology: o, meta });
        self.save_ontology(&id)?;
        Ok(id)
    }

    pub fn publish_composite(
        &mut self,
        name: &str,
        plan: CompositionPlan,
        merged: Ontology,
    ) -> Result<CompositeServiceRecord> {
        self.check_name(name)?;
        let ontology_id = self.store_ontology(merged)?;
        self.publish_with_ontology(name, plan, &ontology_id)
    }

    /// Publishes a record backed by an ontology already in the base.
    pub fn publish_with_ontology(
        &mut self,
        name: &str,
        plan: CompositionPlan,
        ontology_id: &str,
    ) -> Result<CompositeServiceRecord> {
        self.check_name(name)?;
        let merged = self
            .ontology(ontology_id)
            .ok_or_else(|| RegistryError::UnknownOntology(ontology_id.to_string()))?;
        let record = CompositeServiceRecord {
            service_id: Iri::fragment(&format!("composite-{}", self.records.len() + 1))
                .expect("valid fragment"),
            name: name.to_string(),
            description: describe(merged),
            ontology_id: ontology_id.to_string(),
            created_at: self.clock.now(),
            deleted: false,
            plan,
        };
        self.request_index
            .insert(record.plan.request.canonical_hash(), record.service_id.clone());
        self.record_index.insert(record.service_id.clone(), self.records.len());
        self.records.push(record.clone());
        self.save_records()?;
        Ok(record)
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.records.iter().any(|r| !r.deleted && r.name == name) {
            return Err(RegistryError::DuplicateName(name.to_string()));
        }
        Ok(())
    }

    /// Replaces a stored ontology and rewrites the description of every
    /// record that references it.
    pub fn update_merged_ontology(&mut self, id: &str, new: Ontology) -> Result<()> {
        let hash = content_hash(&new);
        let now = self.clock.now();
        let entry = self
            .ontologies
            .get_mut(id)
            .ok_or_else(|| RegistryError::UnknownOntology(id.to_string()))?;
        if entry.meta.hash == hash {
            return Ok(());
        }
        let description = describe(&new);
        entry.ontology = new;
        entry.meta = OntologyMeta { hash, updated_at: now };
        for r in self.records.iter_mut().filter(|r| r.ontology_id == id) {
            r.description = description.clone();
        }
        self.save_ontology(id)?;
        self.save_records()
    }

    /// Tombstones a record and drops its cache entries; log entries stay.
    pub fn delete_service(&mut self, id: &Iri) -> Result<()> {
        let i = *self
            .record_index
            .get(id)
            .filter(|&&i| !self.records[i].deleted)
            .ok_or_else(|| RegistryError::UnknownService(id.clone()))?;
        self.records[i].deleted = true;
        self.request_index.retain(|_, s| s != id);
        self.save_records()
    }

    pub fn record_request(&mut self, user: &str, service: &Iri, ts: Timestamp) -> Result<()> {
        if self.user(user).is_none() {
            return Err(RegistryError::UnknownUser(user.to_string()));
        }
        if !self.record(service).is_some_and(|r| !r.deleted) {
            return Err(RegistryError::UnknownService(service.clone()));
        }
        let entry = LogEntry {
            user: user.to_string(),
            service: service.clone(),
            ts,
        };
        let path = self.dir.join("log.ndjson");
        let mut line = serde_json::to_vec(&entry).expect("log entries always serialize");
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        f.write_all(&line).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))?;
        self.count(&entry);
        self.log.push(entry);
        Ok(())
    }

    pub fn request_count(&self, user: &str, service: &Iri) -> u64 {
        self.per_user
            .get(&(user.to_string(), service.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn global_count(&self, service: &Iri) -> u64 {
        self.global.get(service).copied().unwrap_or(0)
    }

    /// Live records, most used by `user` first, then most used overall,
    /// then by name.
    pub fn list_services(&self, user: &str) -> Result<Vec<&CompositeServiceRecord>> {
        if self.user(user).is_none() {
            return Err(RegistryError::UnknownUser(user.to_string()));
        }
        let mut live: Vec<_> = self.records.iter().filter(|r| !r.deleted).collect();
        live.sort_by(|a, b| {
            let key = |r: &CompositeServiceRecord| {
                (
                    self.request_count(user, &r.service_id),
                    self.global_count(&r.service_id),
                )
            };
            key(b).cmp(&key(a)).then_with(|| a.name.cmp(&b.name)).then_with(|| a.service_id.cmp(&b.service_id))
        });
        Ok(live)
    }

    /// Cached record for an identical request, if one was published.
    pub fn lookup_precomposed(&self, req: &CompositionRequest) -> Option<&CompositeServiceRecord> {
        let id = self.request_index.get(&req.canonical_hash())?;
        self.record(id)
            .filter(|r| !r.deleted && r.plan.request == *req)
    }
}
