//! Page retrieval with a content-addressed on-disk cache.
//!
//! Cache entries live in `cache_dir` as `<sha256(url)>` (raw body) plus
//! `<sha256(url)>.meta.json` (content type, status, url). In offline mode only
//! the cache is consulted.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::extract::extract_text;
use crate::textprep::RawDocument;

pub const MAX_REDIRECTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FetchError {
    #[error("timeout")]
    Timeout,
    #[error("http status {0}")]
    Status(u16),
    #[error("size cap exceeded")]
    SizeCapExceeded,
    #[error("offline cache miss")]
    OfflineCacheMiss,
    #[error("too many redirects")]
    TooManyRedirects,
    #[error("invalid url")]
    InvalidUrl,
    #[error("transport: {0}")]
    Transport(String),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchPolicy {
    pub timeout: Duration,
    pub max_bytes: u64,
    pub retries: u32,
    pub offline_mode: bool,
    pub cache_dir: Option<PathBuf>,
    /// Concurrent fetches per ingest.
    pub parallelism: usize,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(20),
            max_bytes: 5 * 1024 * 1024,
            retries: 2,
            offline_mode: false,
            cache_dir: None,
            parallelism: 4,
        }
    }
}

impl FetchPolicy {
    pub fn offline(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            offline_mode: true,
            cache_dir: Some(cache_dir.into()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub url: String,
    pub content_type: String,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedPage {
    pub url: String,
    pub content_type: String,
    pub body: Vec<u8>,
    pub retrieved_at: Option<DateTime<Utc>>,
}

pub fn cache_key(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

fn cache_paths(dir: &Path, url: &str) -> (PathBuf, PathBuf) {
    let key = cache_key(url);
    (dir.join(&key), dir.join(format!("{key}.meta.json")))
}

/// Writes one cache entry (body plus sidecar).
pub fn write_cache_entry(dir: &Path, url: &str, content_type: &str, status: u16, body: &[u8]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let (body_path, meta_path) = cache_paths(dir, url);
    let meta = CacheMeta {
        url: url.to_string(),
        content_type: content_type.to_string(),
        status,
    };
    fs::write(body_path, body)?;
    fs::write(meta_path, serde_json::to_vec_pretty(&meta)?)
}

fn read_cache_entry(dir: &Path, url: &str) -> Result<Option<(CacheMeta, Vec<u8>)>, FetchError> {
    let (body_path, meta_path) = cache_paths(dir, url);
    if !body_path.exists() {
        return Ok(None);
    }
    let cache_err = |e: std::io::Error| FetchError::Cache(e.to_string());
    let body = fs::read(&body_path).map_err(cache_err)?;
    let meta = match fs::read(&meta_path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| FetchError::Cache(e.to_string()))?,
        Err(_) => CacheMeta {
            url: url.to_string(),
            content_type: "text/plain".into(),
            status: 200,
        },
    };
    Ok(Some((meta, body)))
}

/// Fetches pages under one policy, memoizing results so each URL is
/// requested at most once per fetcher.
pub struct Fetcher {
    policy: FetchPolicy,
    client: Mutex<Option<reqwest::blocking::Client>>,
    memo: Mutex<HashMap<String, Result<FetchedPage, FetchError>>>,
    network_requests: Mutex<usize>,
}

impl Fetcher {
    pub fn new(policy: FetchPolicy) -> Self {
        Self {
            policy,
            client: Mutex::new(None),
            memo: Mutex::new(HashMap::new()),
            network_requests: Mutex::new(0),
        }
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    /// Number of HTTP requests issued so far, retries included.
    pub fn network_requests(&self) -> usize {
        *self.network_requests.lock()
    }

    pub fn fetch(&self, url: &str) -> Result<FetchedPage, FetchError> {
        if let Some(hit) = self.memo.lock().get(url) {
            return hit.clone();
        }
        let result = self.fetch_uncached(url);
        self.memo.lock().insert(url.to_string(), result.clone());
        result
    }

    fn fetch_uncached(&self, url: &str) -> Result<FetchedPage, FetchError> {
        if !super::table::is_valid_reference(url) {
            return Err(FetchError::InvalidUrl);
        }
        if self.policy.offline_mode {
            let dir = self.policy.cache_dir.as_deref().ok_or(FetchError::OfflineCacheMiss)?;
            let (meta, body) = read_cache_entry(dir, url)?.ok_or(FetchError::OfflineCacheMiss)?;
            if !(200..300).contains(&meta.status) {
                return Err(FetchError::Status(meta.status));
            }
            if body.len() as u64 > self.policy.max_bytes {
                return Err(FetchError::SizeCapExceeded);
            }
            return Ok(FetchedPage {
                url: url.to_string(),
                content_type: meta.content_type,
                body,
                retrieved_at: None,
            });
        }
        let mut attempt = 0;
        loop {
            match self.fetch_network(url) {
                Err(FetchError::Timeout | FetchError::Transport(_)) if attempt < self.policy.retries => attempt += 1,
                Err(FetchError::Status(s)) if s >= 500 && attempt < self.policy.retries => attempt += 1,
                other => return other,
            }
        }
    }

    fn client(&self) -> Result<reqwest::blocking::Client, FetchError> {
        let mut slot = self.client.lock();
        if let Some(c) = slot.as_ref() {
            return Ok(c.clone());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(self.policy.timeout)
            .redirect(reqwest::redirect::Policy::limited(MAX_REDIRECTS))
            .user_agent(concat!("topicguard/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        *slot = Some(client.clone());
        Ok(client)
    }

    fn fetch_network(&self, url: &str) -> Result<FetchedPage, FetchError> {
        let client = self.client()?;
        *self.network_requests.lock() += 1;
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                FetchError::Timeout
            } else if e.is_redirect() {
                FetchError::TooManyRedirects
            } else {
                FetchError::Transport(e.to_string())
            }
        };
        let resp = client.get(url).send().map_err(classify)?;
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            return Err(FetchError::Status(status));
        }
        if resp.content_length().is_some_and(|n| n > self.policy.max_bytes) {
            return Err(FetchError::SizeCapExceeded);
        }
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("application/octet-stream")
            .to_string();
        let mut body = Vec::new();
        resp.take(self.policy.max_bytes + 1)
            .read_to_end(&mut body)
            .map_err(|e| {
                if e.to_string().contains("timed out") {
                    FetchError::Timeout
                } else {
                    FetchError::Transport(e.to_string())
                }
            })?;
        if body.len() as u64 > self.policy.max_bytes {
            return Err(FetchError::SizeCapExceeded);
        }
        if let Some(dir) = &self.policy.cache_dir {
            write_cache_entry(dir, url, &content_type, status, &body).map_err(|e| FetchError::Cache(e.to_string()))?;
        }
        Ok(FetchedPage {
            url: url.to_string(),
            content_type,
            body,
            retrieved_at: Some(Utc::now()),
        })
    }

    pub fn fetch_document(&self, url: &str) -> Result<RawDocument, FetchError> {
        let page = self.fetch(url)?;
        Ok(RawDocument {
            doc_id: url.to_string(),
            source: url.to_string(),
            raw_text: extract_text(&page.body, &page.content_type),
            retrieved_at: page.retrieved_at,
        })
    }
}

/// One-shot fetch of a URL into a [`RawDocument`] (doc id = URL).
pub fn fetch_url(url: &str, policy: &FetchPolicy) -> Result<RawDocument, FetchError> {
    Fetcher::new(policy.clone()).fetch_document(url)
}
