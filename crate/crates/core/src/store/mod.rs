//! Durable storage of users, sessions, datasets, documents, vectors, models
//! and any other [`Entity`] family, over a pluggable transactional [`Backend`].

mod auth;
mod backend;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Dictionary, TfidfVector};
use crate::ingest::{Dataset, DatasetStatus, DatasetTableRow, FetchFailure};
use crate::textprep::{CleanDocument, PrepConfig};
use crate::topics::{load_model, save_model, LdaModel, TopicError};

pub use auth::{hash_password, verify_password, MAX_PASSWORD_LEN, MIN_PASSWORD_LEN};
pub use backend::{Backend, MemoryBackend, SqliteBackend, Tx, DB_FILE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("{family} `{id}` not found")]
    NotFound { family: String, id: String },
    #[error("duplicate {family} key `{key}`")]
    Duplicate { family: String, key: String },
    #[error("storage i/o: {0}")]
    Io(String),
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("authentication rejected")]
    Unauthenticated,
    #[error("password policy: {0}")]
    PasswordPolicy(String),
    #[error("rejected update: {0}")]
    Rejected(String),
    #[error(transparent)]
    Model(#[from] TopicError),
}

impl StoreError {
    fn not_found(family: &str, id: &str) -> Self {
        StoreError::NotFound {
            family: family.to_string(),
            id: id.to_string(),
        }
    }
}

/// A record family stored as JSON under a string id.
pub trait Entity: Serialize + DeserializeOwned {
    const FAMILY: &'static str;
    fn id(&self) -> String;
    /// Secondary keys that must be unique within the family.
    fn unique_keys(&self) -> Vec<String> {
        Vec::new()
    }
}

fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>, StoreError> {
    serde_json::to_vec(value).map_err(|e| StoreError::Corrupt(e.to_string()))
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, StoreError> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt(e.to_string()))
}

fn unique_family(family: &str) -> String {
    format!("__unique/{family}")
}

/// Typed read inside a [`Store::transact`] closure.
pub fn tx_get<T: Entity>(tx: &mut dyn Tx, id: &str) -> Result<Option<T>, StoreError> {
    tx.get(T::FAMILY, id)?.map(|b| decode(&b)).transpose()
}

/// Typed write inside a [`Store::transact`] closure, maintaining unique keys.
pub fn tx_put<T: Entity>(tx: &mut dyn Tx, entity: &T, must_be_new: bool) -> Result<(), StoreError> {
    let id = entity.id();
    let old: Option<T> = tx_get(tx, &id)?;
    if must_be_new && old.is_some() {
        return Err(StoreError::Duplicate {
            family: T::FAMILY.to_string(),
            key: id,
        });
    }
    let index = unique_family(T::FAMILY);
    let new_keys = entity.unique_keys();
    for key in &new_keys {
        if let Some(owner) = tx.get(&index, key)? {
            if owner != id.as_bytes() {
                return Err(StoreError::Duplicate {
                    family: T::FAMILY.to_string(),
                    key: key.clone(),
                });
            }
        }
    }
    for key in old.map(|o| o.unique_keys()).unwrap_or_default() {
        if !new_keys.contains(&key) {
            tx.delete(&index, &key)?;
        }
    }
    for key in &new_keys {
        tx.put(&index, key, id.as_bytes())?;
    }
    tx.put(T::FAMILY, &id, &encode(entity)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub username: String,
    pub credential_hash: String,
    pub created_at: DateTime<Utc>,
}

impl Entity for UserAccount {
    const FAMILY: &'static str = "users";
    fn id(&self) -> String {
        self.user_id.clone()
    }
    fn unique_keys(&self) -> Vec<String> {
        vec![self.username.clone()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: String,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SessionRecord {
    key: String,
    user_id: String,
    expires_at: DateTime<Utc>,
}

impl Entity for SessionRecord {
    const FAMILY: &'static str = "sessions";
    fn id(&self) -> String {
        self.key.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredModelRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub version: u64,
    pub created_at: DateTime<Utc>,
    /// SHA-256 (hex) of the container bytes.
    pub sha256: String,
}

impl Entity for StoredModelRecord {
    const FAMILY: &'static str = "model_meta";
    fn id(&self) -> String {
        self.model_id.clone()
    }
}

const MODEL_BLOBS: &str = "models";

fn model_id(dataset_id: &str, version: u64) -> String {
    format!("{dataset_id}/{version:010}")
}

/// Dataset metadata; documents and vectors are stored in their own families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dataset_id: String,
    pub owner_id: String,
    pub name: String,
    /// Readable by every user when set.
    pub public: bool,
    pub rows: Vec<DatasetTableRow>,
    pub document_rows: Vec<usize>,
    pub fetch_failures: Vec<FetchFailure>,
    pub status: DatasetStatus,
    pub prep: PrepConfig,
    pub stopword_hash: String,
    pub created_at: DateTime<Utc>,
}

impl Entity for DatasetRecord {
    const FAMILY: &'static str = "datasets";
    fn id(&self) -> String {
        self.dataset_id.clone()
    }
    fn unique_keys(&self) -> Vec<String> {
        vec![format!("{}/{}", self.owner_id, self.name)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DocumentSet {
    dataset_id: String,
    documents: Vec<CleanDocument>,
}

impl Entity for DocumentSet {
    const FAMILY: &'static str = "documents";
    fn id(&self) -> String {
        self.dataset_id.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VectorSet {
    dataset_id: String,
    dictionary: Dictionary,
    vectors: Vec<TfidfVector>,
}

impl Entity for VectorSet {
    const FAMILY: &'static str = "vectors";
    fn id(&self) -> String {
        self.dataset_id.clone()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Counter {
    next: u64,
}

#[derive(Clone)]
pub struct Store {
    backend: Arc<dyn Backend>,
}

impl Store {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self { backend }
    }

    /// SQLite-backed store in `data_dir`.
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        Ok(Self::new(Arc::new(SqliteBackend::open(data_dir)?)))
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemoryBackend::new()))
    }

    /// Runs `f` atomically.
    pub fn transact<R>(&self, mut f: impl FnMut(&mut dyn Tx) -> Result<R, StoreError>) -> Result<R, StoreError> {
        let mut out = None;
        self.backend.transact(&mut |tx| {
            out = Some(f(tx)?);
            Ok(())
        })?;
        Ok(out.expect("transaction produced a value"))
    }

    /// Inserts or replaces an entity.
    pub fn put<T: Entity>(&self, entity: &T) -> Result<(), StoreError> {
        self.transact(|tx| tx_put(tx, entity, false))
    }

    /// Inserts an entity whose id must not exist yet.
    pub fn insert<T: Entity>(&self, entity: &T) -> Result<(), StoreError> {
        self.transact(|tx| tx_put(tx, entity, true))
    }

    pub fn get<T: Entity>(&self, id: &str) -> Result<T, StoreError> {
        self.transact(|tx| tx_get::<T>(tx, id))?
            .ok_or_else(|| StoreError::not_found(T::FAMILY, id))
    }

    pub fn list<T: Entity>(&self) -> Result<Vec<T>, StoreError> {
        self.transact(|tx| tx.list(T::FAMILY, ""))?
            .iter()
            .map(|(_, b)| decode(b))
            .collect()
    }

    pub fn delete<T: Entity>(&self, id: &str) -> Result<(), StoreError> {
        self.transact(|tx| {
            let old: T = tx_get(tx, id)?.ok_or_else(|| StoreError::not_found(T::FAMILY, id))?;
            for key in old.unique_keys() {
                tx.delete(&unique_family(T::FAMILY), &key)?;
            }
            tx.delete(T::FAMILY, id)?;
            Ok(())
        })
    }

    /// Read-modify-write of one entity in a single transaction. `f` may
    /// reject the update, in which case nothing is written.
    pub fn update<T: Entity>(&self, id: &str, mut f: impl FnMut(T) -> Result<T, StoreError>) -> Result<T, StoreError> {
        self.transact(|tx| {
            let current: T = tx_get(tx, id)?.ok_or_else(|| StoreError::not_found(T::FAMILY, id))?;
            let next = f(current)?;
            if next.id() != id {
                return Err(StoreError::Rejected("update changed the entity id".into()));
            }
            tx_put(tx, &next, false)?;
            Ok(next)
        })
    }

    /// Next id from a named monotonic sequence, e.g. `job-000001`.
    pub fn next_id(&self, prefix: &str) -> Result<String, StoreError> {
        let n = self.transact(|tx| {
            let current: Counter = tx.get("__counters", prefix)?.map(|b| decode(&b)).transpose()?.unwrap_or(Counter { next: 1 });
            tx.put("__counters", prefix, &encode(&Counter { next: current.next + 1 })?)?;
            Ok(current.next)
        })?;
        Ok(format!("{prefix}-{n:06}"))
    }

    pub fn register_user(&self, username: &str, password: &str) -> Result<UserAccount, StoreError> {
        if username.trim().is_empty() {
            return Err(StoreError::Rejected("username must not be empty".into()));
        }
        let credential_hash = hash_password(password)?;
        let user = UserAccount {
            user_id: self.next_id("user")?,
            username: username.to_string(),
            credential_hash,
            created_at: Utc::now(),
        };
        self.insert(&user)?;
        Ok(user)
    }

    pub fn find_user(&self, username: &str) -> Result<Option<UserAccount>, StoreError> {
        self.transact(|tx| {
            let Some(id) = tx.get(&unique_family(UserAccount::FAMILY), username)? else {
                return Ok(None);
            };
            let id = String::from_utf8(id).map_err(|e| StoreError::Corrupt(e.to_string()))?;
            tx_get::<UserAccount>(tx, &id)
        })
    }

    /// Checks credentials; unknown users and wrong passwords are indistinguishable.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<UserAccount, StoreError> {
        match self.find_user(username)? {
            Some(user) if verify_password(password, &user.credential_hash) => Ok(user),
            _ => Err(StoreError::Unauthenticated),
        }
    }

    pub fn create_session(&self, user_id: &str, ttl: Duration) -> Result<SessionToken, StoreError> {
        let token = auth::new_token();
        let ttl = chrono::Duration::from_std(ttl).map_err(|e| StoreError::Rejected(e.to_string()))?;
        let expires_at = Utc::now() + ttl;
        self.insert(&SessionRecord {
            key: auth::token_key(&token),
            user_id: user_id.to_string(),
            expires_at,
        })?;
        Ok(SessionToken {
            token,
            user_id: user_id.to_string(),
            expires_at,
        })
    }

    pub fn resolve_session(&self, token: &str) -> Result<String, StoreError> {
        self.resolve_session_at(token, Utc::now())
    }

    pub fn resolve_session_at(&self, token: &str, now: DateTime<Utc>) -> Result<String, StoreError> {
        match self.get::<SessionRecord>(&auth::token_key(token)) {
            Ok(s) if now < s.expires_at => Ok(s.user_id),
            Ok(_) | Err(StoreError::NotFound { .. }) => Err(StoreError::Unauthenticated),
            Err(e) => Err(e),
        }
    }

    pub fn revoke_session(&self, token: &str) -> Result<(), StoreError> {
        match self.delete::<SessionRecord>(&auth::token_key(token)) {
            Ok(()) | Err(StoreError::NotFound { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Stores container bytes verbatim as the next version for the dataset.
    pub fn put_model(&self, dataset_id: &str, container: &[u8]) -> Result<StoredModelRecord, StoreError> {
        let sha256 = hex::encode(Sha256::digest(container));
        self.transact(|tx| {
            let prefix = format!("{dataset_id}/");
            let latest = tx
                .list(StoredModelRecord::FAMILY, &prefix)?
                .last()
                .map(|(_, b)| decode::<StoredModelRecord>(b))
                .transpose()?;
            let version = latest.map_or(1, |r| r.version + 1);
            let record = StoredModelRecord {
                model_id: model_id(dataset_id, version),
                dataset_id: dataset_id.to_string(),
                version,
                created_at: Utc::now(),
                sha256: sha256.clone(),
            };
            tx.put(MODEL_BLOBS, &record.model_id, container)?;
            tx_put(tx, &record, true)?;
            Ok(record)
        })
    }

    pub fn model_history(&self, dataset_id: &str) -> Result<Vec<StoredModelRecord>, StoreError> {
        self.transact(|tx| tx.list(StoredModelRecord::FAMILY, &format!("{dataset_id}/")))?
            .iter()
            .map(|(_, b)| decode(b))
            .collect()
    }

    pub fn latest_model(&self, dataset_id: &str) -> Result<Option<(StoredModelRecord, Vec<u8>)>, StoreError> {
        let Some(record) = self.model_history(dataset_id)?.pop() else {
            return Ok(None);
        };
        let bytes = self.model_bytes(&record.model_id)?;
        Ok(Some((record, bytes)))
    }

    pub fn model_bytes(&self, model_id: &str) -> Result<Vec<u8>, StoreError> {
        self.transact(|tx| tx.get(MODEL_BLOBS, model_id))?
            .ok_or_else(|| StoreError::not_found(MODEL_BLOBS, model_id))
    }

    /// Persists a dataset (metadata, documents, vectors) in one transaction.
    /// The model, if any, is stored separately through [`Store::put_model`].
    pub fn save_dataset(&self, owner_id: &str, public: bool, dataset: &Dataset) -> Result<DatasetRecord, StoreError> {
        let created_at = match self.get::<DatasetRecord>(&dataset.dataset_id) {
            Ok(existing) => existing.created_at,
            Err(StoreError::NotFound { .. }) => Utc::now(),
            Err(e) => return Err(e),
        };
        let record = DatasetRecord {
            dataset_id: dataset.dataset_id.clone(),
            owner_id: owner_id.to_string(),
            name: dataset.name.clone(),
            public,
            rows: dataset.rows.clone(),
            document_rows: dataset.document_rows.clone(),
            fetch_failures: dataset.fetch_failures.clone(),
            status: dataset.status,
            prep: dataset.prep.clone(),
            stopword_hash: dataset.stopword_hash.clone(),
            created_at,
        };
        let docs = DocumentSet {
            dataset_id: dataset.dataset_id.clone(),
            documents: dataset.documents.clone(),
        };
        let vectors = VectorSet {
            dataset_id: dataset.dataset_id.clone(),
            dictionary: dataset.dictionary.clone(),
            vectors: dataset.vectors.clone(),
        };
        self.transact(|tx| {
            tx_put(tx, &record, false)?;
            tx_put(tx, &docs, false)?;
            tx_put(tx, &vectors, false)
        })?;
        Ok(record)
    }

    /// Stores a freshly trained model for the dataset and marks it trained.
    pub fn save_trained(&self, dataset: &Dataset) -> Result<StoredModelRecord, StoreError> {
        let model = dataset
            .model
            .as_ref()
            .ok_or_else(|| StoreError::Rejected("dataset has no model".into()))?;
        let bytes = save_model(model, &dataset.dictionary)?;
        let record = self.put_model(&dataset.dataset_id, &bytes)?;
        self.update::<DatasetRecord>(&dataset.dataset_id, |mut r| {
            r.status = DatasetStatus::Trained;
            Ok(r)
        })?;
        Ok(record)
    }

    /// Reassembles a dataset with its latest model, if one exists.
    pub fn load_dataset(&self, dataset_id: &str) -> Result<(DatasetRecord, Dataset), StoreError> {
        let record: DatasetRecord = self.get(dataset_id)?;
        let docs: DocumentSet = self.get(dataset_id)?;
        let vectors: VectorSet = self.get(dataset_id)?;
        let mut dataset = Dataset {
            dataset_id: record.dataset_id.clone(),
            name: record.name.clone(),
            rows: record.rows.clone(),
            documents: docs.documents,
            document_rows: record.document_rows.clone(),
            dictionary: vectors.dictionary,
            vectors: vectors.vectors,
            model: None,
            fetch_failures: record.fetch_failures.clone(),
            status: record.status,
            prep: record.prep.clone(),
            stopword_hash: record.stopword_hash.clone(),
        };
        if let Some((_, bytes)) = self.latest_model(dataset_id)? {
            let (model, dict) = load_model(&bytes)?;
            if dict.hash() != dataset.dictionary.hash() {
                return Err(StoreError::Model(TopicError::DictionaryMismatch));
            }
            dataset.model = Some(model);
        }
        Ok((record, dataset))
    }

    pub fn load_model(&self, dataset_id: &str) -> Result<Option<(LdaModel, Dictionary)>, StoreError> {
        match self.latest_model(dataset_id)? {
            Some((_, bytes)) => Ok(Some(load_model(&bytes)?)),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Note {
        id: String,
        slug: String,
        body: String,
    }

    impl Entity for Note {
        const FAMILY: &'static str = "notes";
        fn id(&self) -> String {
            self.id.clone()
        }
        fn unique_keys(&self) -> Vec<String> {
            vec![self.slug.clone()]
        }
    }

    fn note(id: &str, slug: &str) -> Note {
        Note {
            id: id.into(),
            slug: slug.into(),
            body: "b".into(),
        }
    }

    fn stores() -> Vec<(tempfile::TempDir, Store)> {
        let dir = tempfile::tempdir().unwrap();
        let sqlite = Store::open(dir.path()).unwrap();
        vec![(tempfile::tempdir().unwrap(), Store::in_memory()), (dir, sqlite)]
    }

    #[test]
    fn crud_contract() {
        for (_dir, store) in stores() {
            store.put(&note("n1", "a")).unwrap();
            assert_eq!(store.get::<Note>("n1").unwrap(), note("n1", "a"));
            assert!(matches!(store.get::<Note>("zz"), Err(StoreError::NotFound { .. })));
            assert!(matches!(store.put(&note("n2", "a")), Err(StoreError::Duplicate { .. })));
            assert!(matches!(store.insert(&note("n1", "q")), Err(StoreError::Duplicate { .. })));
            store.put(&note("n1", "b")).unwrap();
            store.put(&note("n2", "a")).unwrap();
            assert_eq!(store.list::<Note>().unwrap().len(), 2);
            store.delete::<Note>("n1").unwrap();
            store.put(&note("n3", "b")).unwrap();
            assert!(matches!(store.delete::<Note>("n1"), Err(StoreError::NotFound { .. })));
        }
    }

    #[test]
    fn failed_update_writes_nothing() {
        for (_dir, store) in stores() {
            store.put(&note("n1", "a")).unwrap();
            let r = store.update::<Note>("n1", |_| Err(StoreError::Rejected("no".into())));
            assert!(r.is_err());
            assert_eq!(store.get::<Note>("n1").unwrap(), note("n1", "a"));
        }
    }

    #[test]
    fn durable_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path()).unwrap();
            store.put(&note("n1", "a")).unwrap();
            store.put_model("ds", b"v1").unwrap();
        }
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.get::<Note>("n1").unwrap(), note("n1", "a"));
        assert_eq!(store.latest_model("ds").unwrap().unwrap().1, b"v1");
    }

    #[test]
    fn model_versions_increase() {
        for (_dir, store) in stores() {
            assert!(store.latest_model("ds").unwrap().is_none());
            let v1 = store.put_model("ds", b"one").unwrap();
            let v2 = store.put_model("ds", b"two").unwrap();
            store.put_model("other", b"x").unwrap();
            assert_eq!((v1.version, v2.version), (1, 2));
            let (latest, bytes) = store.latest_model("ds").unwrap().unwrap();
            assert_eq!((latest.version, bytes.as_slice()), (2, b"two".as_slice()));
            assert_eq!(store.model_history("ds").unwrap().len(), 2);
            assert_eq!(store.model_bytes(&v1.model_id).unwrap(), b"one");
        }
    }

    #[test]
    fn users_and_sessions() {
        for (_dir, store) in stores() {
            let user = store.register_user("alice", "hunter2hunter2").unwrap();
            assert!(matches!(store.register_user("alice", "another-pass"), Err(StoreError::Duplicate { .. })));
            assert!(matches!(store.register_user("bob", "short"), Err(StoreError::PasswordPolicy(_))));
            assert_eq!(store.authenticate("alice", "hunter2hunter2").unwrap().user_id, user.user_id);
            assert_eq!(store.authenticate("alice", "wrong-password"), Err(StoreError::Unauthenticated));
            assert_eq!(store.authenticate("nobody", "hunter2hunter2"), Err(StoreError::Unauthenticated));

            let s = store.create_session(&user.user_id, Duration::from_secs(60)).unwrap();
            assert_eq!(store.resolve_session(&s.token).unwrap(), user.user_id);
            let later = s.expires_at + chrono::Duration::seconds(1);
            assert_eq!(store.resolve_session_at(&s.token, later), Err(StoreError::Unauthenticated));
            assert_eq!(store.resolve_session("garbage"), Err(StoreError::Unauthenticated));
            store.revoke_session(&s.token).unwrap();
            assert_eq!(store.resolve_session(&s.token), Err(StoreError::Unauthenticated));
        }
    }

    #[test]
    fn sequences() {
        let store = Store::in_memory();
        assert_eq!(store.next_id("job").unwrap(), "job-000001");
        assert_eq!(store.next_id("job").unwrap(), "job-000002");
        assert_eq!(store.next_id("file").unwrap(), "file-000001");
    }

    #[test]
    fn no_plaintext_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let password = "plaintext-canary-81723";
        {
            let store = Store::open(dir.path()).unwrap();
            let u = store.register_user("carol", password).unwrap();
            store.create_session(&u.user_id, Duration::from_secs(60)).unwrap();
            store.authenticate("carol", password).unwrap();
        }
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let bytes = std::fs::read(entry.unwrap().path()).unwrap();
            assert!(!bytes.windows(password.len()).any(|w| w == password.as_bytes()));
        }
    }
}
