//! Dataset construction: reference table -> fetched pages -> clean documents
//! -> dictionary and TF-IDF vectors -> (optionally) a trained topic model.

mod extract;
mod fetch;
mod table;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{compute_tfidf, to_bow, BowVector, Dictionary, TfidfVector};
use crate::textprep::{CleanDocument, PrepConfig, PrepError, Preprocessor};
use crate::topics::{train, LdaConfig, LdaModel, TopicError};

pub use extract::extract_text;
pub use fetch::{
    cache_key, fetch_url, write_cache_entry, CacheMeta, FetchError, FetchPolicy, FetchedPage, Fetcher, MAX_REDIRECTS,
};
pub use table::{is_valid_reference, load_dataset_table, DatasetTableRow, RowError, TableError, TableLoad};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset table is empty")]
    EmptyTable,
    #[error("dataset not ready")]
    NotReady,
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Topic(#[from] TopicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetStatus {
    Ingesting,
    Ingested,
    Trained,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    /// Index into `Dataset::rows`.
    pub row: usize,
    pub reference: String,
    pub error: FetchError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: String,
    pub name: String,
    pub rows: Vec<DatasetTableRow>,
    pub documents: Vec<CleanDocument>,
    /// Row index of each document, parallel to `documents`.
    pub document_rows: Vec<usize>,
    pub dictionary: Dictionary,
    pub vectors: Vec<TfidfVector>,
    #[serde(skip)]
    pub model: Option<LdaModel>,
    pub fetch_failures: Vec<FetchFailure>,
    pub status: DatasetStatus,
    pub prep: PrepConfig,
    /// SHA-256 of the stopword list used to build the documents.
    pub stopword_hash: String,
}

impl Dataset {
    /// Assembles a dataset from already-cleaned documents.
    pub fn from_documents(
        dataset_id: impl Into<String>,
        name: impl Into<String>,
        rows: Vec<DatasetTableRow>,
        documents: Vec<(usize, CleanDocument)>,
        fetch_failures: Vec<FetchFailure>,
        prep: &Preprocessor,
    ) -> Self {
        let (document_rows, documents): (Vec<usize>, Vec<CleanDocument>) = documents.into_iter().unzip();
        let dictionary = Dictionary::build(&documents);
        let bows: Vec<BowVector> = documents.iter().map(|d| to_bow(d, &dictionary).0).collect();
        let vectors = compute_tfidf(&bows, &dictionary);
        let status = if documents.is_empty() {
            DatasetStatus::Failed
        } else {
            DatasetStatus::Ingested
        };
        Self {
            dataset_id: dataset_id.into(),
            name: name.into(),
            rows,
            documents,
            document_rows,
            dictionary,
            vectors,
            model: None,
            fetch_failures,
            status,
            prep: prep.config().clone(),
            stopword_hash: prep.stopwords().content_hash().to_string(),
        }
    }

    pub fn bows(&self) -> Vec<BowVector> {
        self.documents.iter().map(|d| to_bow(d, &self.dictionary).0).collect()
    }

    /// Source link of the `i`-th document.
    pub fn link(&self, i: usize) -> &str {
        self.document_rows
            .get(i)
            .and_then(|&r| self.rows.get(r))
            .map(|r| r.reference.as_str())
            .unwrap_or("")
    }

    /// Attaches a model, checking it is bound to this dataset's dictionary.
    pub fn with_model(mut self, model: LdaModel) -> Result<Self, TopicError> {
        if model.dictionary_hash != self.dictionary.hash() {
            return Err(TopicError::DictionaryMismatch);
        }
        self.model = Some(model);
        self.status = DatasetStatus::Trained;
        Ok(self)
    }
}

pub fn document_id(row: usize) -> String {
    format!("doc-{row:05}")
}

/// Fetches, extracts and preprocesses every row.
///
/// Distinct URLs are fetched once each, up to `policy.parallelism` at a time;
/// document order always follows table order.
pub fn ingest_dataset(
    dataset_id: &str,
    name: &str,
    table: Vec<DatasetTableRow>,
    fetcher: &Fetcher,
    prep: &PrepConfig,
) -> Result<Dataset, IngestError> {
    if table.is_empty() {
        return Err(IngestError::EmptyTable);
    }
    let prep = Preprocessor::new(prep.clone())?;
    let mut unique: Vec<&str> = table.iter().map(|r| r.reference.as_str()).collect();
    unique.sort_unstable();
    unique.dedup();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(fetcher.policy().parallelism.max(1))
        .build()
        .expect("fetch pool");
    let fetched: HashMap<&str, _> = pool.install(|| {
        unique
            .par_iter()
            .map(|&url| (url, fetcher.fetch_document(url)))
            .collect()
    });

    let mut documents = Vec::new();
    let mut failures = Vec::new();
    for (i, row) in table.iter().enumerate() {
        match &fetched[row.reference.as_str()] {
            Ok(raw) => {
                let mut raw = raw.clone();
                raw.doc_id = document_id(i);
                documents.push((i, prep.preprocess(&raw)));
            }
            Err(e) => failures.push(FetchFailure {
                row: i,
                reference: row.reference.clone(),
                error: e.clone(),
            }),
        }
    }
    Ok(Dataset::from_documents(dataset_id, name, table, documents, failures, &prep))
}

/// Trains (or retrains) the dataset's topic model.
pub fn train_dataset(dataset: Dataset, config: &LdaConfig) -> Result<Dataset, IngestError> {
    if !matches!(dataset.status, DatasetStatus::Ingested | DatasetStatus::Trained) {
        return Err(IngestError::NotReady);
    }
    let model = train(&dataset.bows(), &dataset.dictionary, config)?;
    Ok(dataset.with_model(model)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(urls: &[&str]) -> Vec<DatasetTableRow> {
        urls.iter()
            .map(|u| DatasetTableRow {
                reference: u.to_string(),
                title: None,
                date: None,
                notes: None,
                extra: Default::default(),
            })
            .collect()
    }

    fn fixture_fetcher() -> (tempfile::TempDir, Fetcher) {
        let dir = tempfile::tempdir().unwrap();
        let pages = [
            ("https://s.example/1", "<p>Ransomware encrypted the backup servers.</p>"),
            ("https://s.example/2", "<p>Phishing emails harvested employee credentials.</p>"),
            ("https://s.example/3", "<p>An exposed database leaked customer records.</p>"),
        ];
        for (url, body) in pages {
            write_cache_entry(dir.path(), url, "text/html", 200, body.as_bytes()).unwrap();
        }
        let f = Fetcher::new(FetchPolicy::offline(dir.path()));
        (dir, f)
    }

    #[test]
    fn all_rows_present() {
        let (_dir, f) = fixture_fetcher();
        let ds = ingest_dataset(
            "ds-1",
            "s",
            rows(&["https://s.example/1", "https://s.example/2", "https://s.example/3"]),
            &f,
            &PrepConfig::default(),
        )
        .unwrap();
        assert_eq!(ds.documents.len(), 3);
        assert!(ds.fetch_failures.is_empty());
        assert_eq!(ds.status, DatasetStatus::Ingested);
        assert_eq!(ds.documents[0].doc_id, "doc-00000");
        assert_eq!(ds.link(1), "https://s.example/2");
        assert_eq!(ds.vectors.len(), 3);
    }

    #[test]
    fn partial_and_total_failure() {
        let (_dir, f) = fixture_fetcher();
        let ds = ingest_dataset(
            "ds-1",
            "s",
            rows(&["https://s.example/1", "https://s.example/broken", "https://s.example/3"]),
            &f,
            &PrepConfig::default(),
        )
        .unwrap();
        assert_eq!(ds.documents.len() + ds.fetch_failures.len(), ds.rows.len());
        assert_eq!(ds.fetch_failures[0].row, 1);
        assert_eq!(ds.fetch_failures[0].error, FetchError::OfflineCacheMiss);
        assert_eq!(ds.document_rows, vec![0, 2]);
        assert_eq!(ds.status, DatasetStatus::Ingested);

        let dead = ingest_dataset("ds-2", "d", rows(&["https://s.example/x", "https://s.example/y"]), &f, &PrepConfig::default()).unwrap();
        assert_eq!(dead.status, DatasetStatus::Failed);
        assert!(matches!(train_dataset(dead, &LdaConfig::new(2)), Err(IngestError::NotReady)));
    }

    #[test]
    fn empty_table_rejected() {
        let (_dir, f) = fixture_fetcher();
        assert!(matches!(ingest_dataset("d", "d", vec![], &f, &PrepConfig::default()), Err(IngestError::EmptyTable)));
    }

    #[test]
    fn duplicate_urls_fetched_once() {
        let (_dir, f) = fixture_fetcher();
        let ds = ingest_dataset("d", "d", rows(&["https://s.example/1", "https://s.example/1"]), &f, &PrepConfig::default()).unwrap();
        assert_eq!(ds.documents.len(), 2);
        assert_eq!(ds.documents[0].tokens, ds.documents[1].tokens);
    }

    #[test]
    fn train_requires_ready_status() {
        let (_dir, f) = fixture_fetcher();
        let mut ds = ingest_dataset("d", "d", rows(&["https://s.example/1", "https://s.example/2"]), &f, &PrepConfig::default()).unwrap();
        ds.status = DatasetStatus::Ingesting;
        assert!(matches!(train_dataset(ds.clone(), &LdaConfig::new(2)), Err(IngestError::NotReady)));
        ds.status = DatasetStatus::Ingested;
        let config = LdaConfig {
            train_iters: 30,
            burn_in: 10,
            ..LdaConfig::new(2)
        };
        let trained = train_dataset(ds, &config).unwrap();
        assert_eq!(trained.status, DatasetStatus::Trained);
        trained.model.as_ref().unwrap().check_invariants().unwrap();
        let retrained = train_dataset(trained, &config.clone().with_seed(5)).unwrap();
        assert_eq!(retrained.status, DatasetStatus::Trained);
    }
}
