//! Operations behind both the HTTP API and the CLI. Everything goes through
//! the store, so a CLI process and a server over the same data directory see
//! the same state.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use topicguard_core::ingest::{
    self, extract_text, load_dataset_table, DatasetStatus, FetchFailure, Fetcher, IngestError, RowError, TableError,
};
use topicguard_core::matching::{compare, CompareParams, ComparisonReport, MatchError};
use topicguard_core::store::{tx_get, tx_put, DatasetRecord, Entity, SessionToken, Store, StoreError, StoredModelRecord, UserAccount};
use topicguard_core::textprep::{CleanDocument, PrepConfig, Preprocessor, RawDocument};
use topicguard_core::topics::{top_words, LdaConfig};

use crate::config::Settings;
use crate::jobs::{self, Job, JobState, JobTask, Wakeup};

/// The account the CLI acts as. It has no usable password.
pub const LOCAL_USER: &str = "local";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BadRequest,
    Unauthenticated,
    Forbidden,
    NotFound,
    Conflict,
    Unprocessable,
    Internal,
}

#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct ServiceError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ServiceError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

fn err<T>(kind: ErrorKind, message: impl Into<String>) -> Result<T, ServiceError> {
    Err(ServiceError::new(kind, message))
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        let kind = match e {
            StoreError::NotFound { .. } => ErrorKind::NotFound,
            StoreError::Duplicate { .. } => ErrorKind::Conflict,
            StoreError::Unauthenticated => ErrorKind::Unauthenticated,
            StoreError::PasswordPolicy(_) | StoreError::Rejected(_) => ErrorKind::Unprocessable,
            StoreError::Io(_) | StoreError::Corrupt(_) | StoreError::Model(_) => ErrorKind::Internal,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<TableError> for ServiceError {
    fn from(e: TableError) -> Self {
        let kind = match e {
            TableError::Csv(_) => ErrorKind::BadRequest,
            _ => ErrorKind::Unprocessable,
        };
        Self::new(kind, e.to_string())
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadedFile {
    pub file_id: String,
    pub user_id: String,
    pub filename: String,
    pub clean_document: CleanDocument,
    /// SHA-256 of the raw bytes, which are kept alongside for re-processing.
    pub sha256: String,
    pub uploaded_at: DateTime<Utc>,
}

impl Entity for UploadedFile {
    const FAMILY: &'static str = "files";
    fn id(&self) -> String {
        self.file_id.clone()
    }
}

const FILE_BLOBS: &str = "file_blobs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub name: String,
    pub owner_id: String,
    pub public: bool,
    pub status: DatasetStatus,
    pub rows: usize,
    pub documents: usize,
    pub fetch_failures: Vec<FetchFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    #[serde(flatten)]
    pub dataset: DatasetSummary,
    pub row_errors: Vec<RowError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordWeight {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub words: Vec<WordWeight>,
}

/// Training options accepted from callers; unset fields take the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub num_topics: Option<usize>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
}

impl TrainRequest {
    pub fn config(&self) -> ServiceResult<LdaConfig> {
        let mut config = LdaConfig::new(self.num_topics.unwrap_or(10));
        config.seed = self.seed.unwrap_or(0);
        if let Some(iters) = self.iterations {
            config.train_iters = iters;
            config.burn_in = config.burn_in.min(iters / 5);
        }
        config
            .validate()
            .map_err(|e| ServiceError::new(ErrorKind::Unprocessable, e.to_string()))?;
        Ok(config)
    }
}

#[derive(Clone)]
pub struct Service {
    store: Store,
    settings: Arc<Settings>,
    prep: PrepConfig,
    wakeup: Arc<Wakeup>,
}

impl Service {
    /// Opens (creating if needed) the data directory's store.
    pub fn open(settings: Settings) -> ServiceResult<Self> {
        std::fs::create_dir_all(&settings.data_dir).map_err(|e| {
            ServiceError::new(
                ErrorKind::Internal,
                format!("creating data dir {}: {e}", settings.data_dir.display()),
            )
        })?;
        let store = Store::open(&settings.data_dir)?;
        Ok(Self::with_store(store, settings))
    }

    pub fn with_store(store: Store, settings: Settings) -> Self {
        Self {
            store,
            settings: Arc::new(settings),
            prep: PrepConfig::default(),
            wakeup: Arc::default(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub(crate) fn wakeup(&self) -> &Wakeup {
        &self.wakeup
    }

    pub fn register(&self, username: &str, password: &str) -> ServiceResult<UserAccount> {
        if username == LOCAL_USER {
            return err(ErrorKind::Conflict, format!("username `{LOCAL_USER}` is reserved"));
        }
        Ok(self.store.register_user(username, password)?)
    }

    pub fn login(&self, username: &str, password: &str) -> ServiceResult<SessionToken> {
        let user = self.store.authenticate(username, password)?;
        Ok(self.store.create_session(&user.user_id, self.settings.session_ttl)?)
    }

    pub fn logout(&self, token: &str) -> ServiceResult<()> {
        Ok(self.store.revoke_session(token)?)
    }

    pub fn authenticate(&self, token: &str) -> ServiceResult<String> {
        Ok(self.store.resolve_session(token)?)
    }

    /// Creates the CLI's account on first use.
    pub fn local_user(&self) -> ServiceResult<String> {
        let user = UserAccount {
            user_id: LOCAL_USER.to_string(),
            username: LOCAL_USER.to_string(),
            credential_hash: "!".to_string(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        };
        match self.store.insert(&user) {
            Ok(()) | Err(StoreError::Duplicate { .. }) => Ok(user.user_id),
            Err(e) => Err(e.into()),
        }
    }

    pub fn upload_file(&self, user_id: &str, filename: &str, bytes: &[u8]) -> ServiceResult<UploadedFile> {
        let filename = filename.rsplit(['/', '\\']).next().unwrap_or_default().trim();
        if filename.is_empty() {
            return err(ErrorKind::Unprocessable, "file name required");
        }
        let file_id = self.store.next_id("file")?;
        let raw = RawDocument {
            doc_id: file_id.clone(),
            source: filename.to_string(),
            raw_text: extract_text(bytes, content_type_for(filename)),
            retrieved_at: None,
        };
        let prep = Preprocessor::new(self.prep.clone()).map_err(|e| ServiceError::new(ErrorKind::Internal, e.to_string()))?;
        let file = UploadedFile {
            file_id: file_id.clone(),
            user_id: user_id.to_string(),
            filename: filename.to_string(),
            clean_document: prep.preprocess(&raw),
            sha256: hex::encode(Sha256::digest(bytes)),
            uploaded_at: Utc::now(),
        };
        self.store.transact(|tx| {
            tx_put(tx, &file, true)?;
            tx.put(FILE_BLOBS, &file_id, bytes)
        })?;
        Ok(file)
    }

    pub fn file(&self, user_id: &str, file_id: &str) -> ServiceResult<UploadedFile> {
        let file: UploadedFile = self.store.get(file_id)?;
        if file.user_id != user_id {
            return err(ErrorKind::Forbidden, format!("file `{file_id}` belongs to another user"));
        }
        Ok(file)
    }

    pub fn file_bytes(&self, user_id: &str, file_id: &str) -> ServiceResult<Vec<u8>> {
        self.file(user_id, file_id)?;
        self.store
            .transact(|tx| tx.get(FILE_BLOBS, file_id))?
            .ok_or_else(|| ServiceError::new(ErrorKind::Internal, format!("raw bytes of `{file_id}` missing")))
    }

    /// Parses the reference table, fetches and preprocesses every row and
    /// stores the result. Rows that fail to fetch are recorded, not fatal.
    pub fn create_dataset(&self, user_id: &str, name: &str, csv: &[u8], public: bool) -> ServiceResult<IngestOutcome> {
        let name = name.trim();
        if name.is_empty() {
            return err(ErrorKind::Unprocessable, "dataset name required");
        }
        if self
            .store
            .list::<DatasetRecord>()?
            .iter()
            .any(|d| d.owner_id == user_id && d.name == name)
        {
            return err(ErrorKind::Conflict, format!("dataset `{name}` already exists"));
        }
        let table = load_dataset_table(csv)?;
        if table.rows.is_empty() {
            return err(
                ErrorKind::Unprocessable,
                format!("no valid rows ({} rejected)", table.row_errors.len()),
            );
        }
        let dataset_id = self.store.next_id("ds")?;
        let fetcher = Fetcher::new(self.settings.fetch.clone());
        let dataset = ingest::ingest_dataset(&dataset_id, name, table.rows, &fetcher, &self.prep).map_err(|e| match e {
            IngestError::EmptyTable => ServiceError::new(ErrorKind::Unprocessable, e.to_string()),
            _ => ServiceError::new(ErrorKind::Internal, e.to_string()),
        })?;
        let record = self.store.save_dataset(user_id, public, &dataset)?;
        Ok(IngestOutcome {
            dataset: self.summarize(record)?,
            row_errors: table.row_errors,
        })
    }

    fn summarize(&self, r: DatasetRecord) -> ServiceResult<DatasetSummary> {
        let model_version = self.store.model_history(&r.dataset_id)?.last().map(|m| m.version);
        Ok(DatasetSummary {
            documents: r.document_rows.len(),
            rows: r.rows.len(),
            dataset_id: r.dataset_id,
            name: r.name,
            owner_id: r.owner_id,
            public: r.public,
            status: r.status,
            fetch_failures: r.fetch_failures,
            model_version,
        })
    }

    /// The caller's own datasets plus every public one, by id.
    pub fn list_datasets(&self, user_id: &str) -> ServiceResult<Vec<DatasetSummary>> {
        let mut records: Vec<DatasetRecord> = self
            .store
            .list::<DatasetRecord>()?
            .into_iter()
            .filter(|d| d.owner_id == user_id || d.public)
            .collect();
        records.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
        records.into_iter().map(|r| self.summarize(r)).collect()
    }

    fn readable_dataset(&self, user_id: &str, dataset_id: &str) -> ServiceResult<DatasetRecord> {
        let record: DatasetRecord = self.store.get(dataset_id)?;
        if record.owner_id != user_id && !record.public {
            return err(ErrorKind::Forbidden, format!("dataset `{dataset_id}` belongs to another user"));
        }
        Ok(record)
    }

    /// Looks a dataset up by id, then by name among the caller's own
    /// datasets, then among public ones.
    pub fn find_dataset(&self, user_id: &str, key: &str) -> ServiceResult<DatasetRecord> {
        match self.readable_dataset(user_id, key) {
            Err(ServiceError {
                kind: ErrorKind::NotFound,
                ..
            }) => {}
            other => return other,
        }
        let mut candidates: Vec<DatasetRecord> = self
            .store
            .list::<DatasetRecord>()?
            .into_iter()
            .filter(|d| d.name == key && (d.owner_id == user_id || d.public))
            .collect();
        candidates.sort_by_key(|d| (d.owner_id != user_id, d.dataset_id.clone()));
        candidates
            .into_iter()
            .next()
            .ok_or_else(|| ServiceError::new(ErrorKind::NotFound, format!("dataset `{key}` not found")))
    }

    pub fn topics(&self, user_id: &str, dataset_id: &str, words: usize) -> ServiceResult<Vec<TopicSummary>> {
        if words == 0 {
            return err(ErrorKind::Unprocessable, "words must be >= 1");
        }
        let record = self.readable_dataset(user_id, dataset_id)?;
        let (model, dict) = self
            .store
            .load_model(&record.dataset_id)?
            .ok_or_else(|| ServiceError::new(ErrorKind::Conflict, "train dataset first"))?;
        (0..model.num_topics())
            .map(|topic| {
                let words = top_words(&model, &dict, topic, words)
                    .map_err(|e| ServiceError::new(ErrorKind::Internal, e.to_string()))?;
                Ok(TopicSummary {
                    topic,
                    words: words.into_iter().map(|(word, weight)| WordWeight { word, weight }).collect(),
                })
            })
            .collect()
    }

    fn enqueue(&self, user_id: &str, task: JobTask) -> ServiceResult<Job> {
        let job = Job::new(self.store.next_id("job")?, user_id.to_string(), task);
        self.store.transact(|tx| jobs::write_job(tx, &job))?;
        self.wakeup.notify();
        Ok(job)
    }

    pub fn submit_train(&self, user_id: &str, dataset_id: &str, request: &TrainRequest) -> ServiceResult<Job> {
        let record: DatasetRecord = self.store.get(dataset_id)?;
        if record.owner_id != user_id {
            return err(ErrorKind::Forbidden, format!("dataset `{dataset_id}` belongs to another user"));
        }
        let config = request.config()?;
        self.enqueue(user_id, JobTask::Train {
            dataset_id: dataset_id.to_string(),
            config,
        })
    }

    pub fn submit_compare(
        &self,
        user_id: &str,
        file_id: &str,
        dataset_ids: &[String],
        params: &CompareParams,
    ) -> ServiceResult<Job> {
        if dataset_ids.is_empty() {
            return err(ErrorKind::Unprocessable, "dataset_ids must not be empty");
        }
        params
            .validate()
            .map_err(|e| ServiceError::new(ErrorKind::Unprocessable, e.to_string()))?;
        self.file(user_id, file_id)?;
        for id in dataset_ids {
            self.readable_dataset(user_id, id)?;
        }
        self.enqueue(user_id, JobTask::Compare {
            file_id: file_id.to_string(),
            dataset_ids: dataset_ids.to_vec(),
            params: params.clone(),
        })
    }

    pub fn job(&self, user_id: &str, job_id: &str) -> ServiceResult<Job> {
        let job: Job = self.store.get(job_id)?;
        if job.user_id != user_id {
            return err(ErrorKind::Forbidden, format!("job `{job_id}` belongs to another user"));
        }
        Ok(job)
    }

    pub fn report(&self, user_id: &str, job_id: &str) -> ServiceResult<ComparisonReport> {
        let job = self.job(user_id, job_id)?;
        match (job.state, job.report) {
            (JobState::Done, Some(report)) => Ok(report),
            (JobState::Done, None) => err(ErrorKind::NotFound, format!("job `{job_id}` produces no report")),
            (JobState::Failed, _) => err(
                ErrorKind::Conflict,
                format!("job `{job_id}` failed: {}", job.error.unwrap_or_default()),
            ),
            (state, _) => err(
                ErrorKind::Conflict,
                format!("job `{job_id}` not finished ({})", state_name(state)),
            ),
        }
    }

    /// Claims and runs the oldest claimable job, if any.
    pub fn run_next_job(&self) -> ServiceResult<Option<Job>> {
        let now = Utc::now();
        for id in jobs::pending(self)? {
            if let Some(job) = self.claim(&id, now)? {
                return Ok(Some(self.execute(job)?));
            }
        }
        Ok(None)
    }

    /// Claims and runs one specific job; `None` when another worker holds it
    /// or it already finished.
    pub fn run_job(&self, job_id: &str) -> ServiceResult<Option<Job>> {
        match self.claim(job_id, Utc::now())? {
            Some(job) => Ok(Some(self.execute(job)?)),
            None => Ok(None),
        }
    }

    fn claim(&self, job_id: &str, now: DateTime<Utc>) -> ServiceResult<Option<Job>> {
        let lease = chrono::Duration::from_std(self.settings.job_lease).unwrap_or(chrono::Duration::MAX);
        Ok(self.store.transact(|tx| {
            let Some(mut job) = tx_get::<Job>(tx, job_id)? else {
                return Ok(None);
            };
            if !job.claimable(now) {
                return Ok(None);
            }
            job.state = JobState::Running;
            job.started_at = Some(now);
            job.lease_until = Some(now + lease);
            job.attempts += 1;
            jobs::write_job(tx, &job)?;
            Ok(Some(job))
        })?)
    }

    fn execute(&self, mut job: Job) -> ServiceResult<Job> {
        let outcome = match &job.task {
            JobTask::Compare {
                file_id,
                dataset_ids,
                params,
            } => self.run_compare(&job.job_id, &job.user_id, file_id, dataset_ids, params).map(|r| {
                job.report = Some(r);
            }),
            JobTask::Train { dataset_id, config } => self.run_train(dataset_id, config).map(|m| {
                job.model = Some(m);
            }),
        };
        job.finished_at = Some(Utc::now());
        job.lease_until = None;
        match outcome {
            Ok(()) => job.state = JobState::Done,
            Err(e) => {
                job.state = JobState::Failed;
                job.report = None;
                job.error = Some(e.message);
            }
        }
        self.store.transact(|tx| jobs::write_job(tx, &job))?;
        Ok(job)
    }

    fn run_compare(
        &self,
        job_id: &str,
        user_id: &str,
        file_id: &str,
        dataset_ids: &[String],
        params: &CompareParams,
    ) -> ServiceResult<ComparisonReport> {
        let file = self.file(user_id, file_id)?;
        let mut datasets = Vec::with_capacity(dataset_ids.len());
        for id in dataset_ids {
            self.readable_dataset(user_id, id)?;
            let (_, dataset) = self.store.load_dataset(id)?;
            if dataset.model.is_none() {
                return err(ErrorKind::Conflict, "train dataset first");
            }
            datasets.push(dataset);
        }
        let refs: Vec<_> = datasets.iter().collect();
        compare(job_id, &file.filename, &file.clean_document, &refs, params).map_err(|e| match e {
            MatchError::ModelMissing(_) => ServiceError::new(ErrorKind::Conflict, "train dataset first"),
            e => ServiceError::new(ErrorKind::Unprocessable, e.to_string()),
        })
    }

    fn run_train(&self, dataset_id: &str, config: &LdaConfig) -> ServiceResult<StoredModelRecord> {
        let (_, dataset) = self.store.load_dataset(dataset_id)?;
        let trained = ingest::train_dataset(dataset, config).map_err(|e| ServiceError::new(ErrorKind::Unprocessable, e.to_string()))?;
        Ok(self.store.save_trained(&trained)?)
    }

    /// Trains in the calling thread through the job machinery.
    pub fn train_now(&self, user_id: &str, dataset_id: &str, request: &TrainRequest) -> ServiceResult<Job> {
        let job = self.submit_train(user_id, dataset_id, request)?;
        self.finish_now(&job.job_id)
    }

    /// Compares in the calling thread through the job machinery.
    pub fn compare_now(
        &self,
        user_id: &str,
        file_id: &str,
        dataset_ids: &[String],
        params: &CompareParams,
    ) -> ServiceResult<Job> {
        let job = self.submit_compare(user_id, file_id, dataset_ids, params)?;
        self.finish_now(&job.job_id)
    }

    fn finish_now(&self, job_id: &str) -> ServiceResult<Job> {
        if let Some(job) = self.run_job(job_id)? {
            return Ok(job);
        }
        // A background worker got there first; wait for it.
        loop {
            let job: Job = self.store.get(job_id)?;
            if matches!(job.state, JobState::Done | JobState::Failed) {
                return Ok(job);
            }
            std::thread::sleep(std::time::Duration::from_millis(50));
        }
    }
}

pub fn state_name(state: JobState) -> &'static str {
    match state {
        JobState::Queued => "queued",
        JobState::Running => "running",
        JobState::Done => "done",
        JobState::Failed => "failed",
    }
}

fn content_type_for(filename: &str) -> &'static str {
    let lower = filename.to_ascii_lowercase();
    if lower.ends_with(".html") || lower.ends_with(".htm") {
        "text/html"
    } else {
        "text/plain"
    }
}
