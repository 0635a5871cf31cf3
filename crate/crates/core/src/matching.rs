//! Cosine similarity, topic-space relevance gating and top-k ranking.

use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{l2_norm, tfidf, to_bow, TfidfVector};
use crate::ingest::Dataset;
use crate::textprep::CleanDocument;
use crate::topics::{infer, TopicDistribution, TopicError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("model missing for dataset `{0}`")]
    ModelMissing(String),
    #[error("no datasets selected")]
    NoDatasets,
    #[error("invalid params: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Topic(#[from] TopicError),
}

/// Cosine of two sparse vectors with entries sorted by index.
///
/// Zero-norm inputs give 0. The result is clamped to `[0, 1]`, which is the
/// full range for nonnegative vectors.
pub fn cosine_sparse(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    cosine_with_norms(a, l2_norm(a), b, l2_norm(b))
}

fn cosine_with_norms(a: &[(u32, f64)], norm_a: f64, b: &[(u32, f64)], norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
        }
    }
    (dot / (norm_a * norm_b)).clamp(0.0, 1.0)
}

pub fn cosine(a: &TfidfVector, b: &TfidfVector) -> f64 {
    cosine_with_norms(&a.entries, a.norm, &b.entries, b.norm)
}

pub fn cosine_dense(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareParams {
    pub k: usize,
    pub highlight_threshold: f64,
    pub relevance_gate_threshold: f64,
    pub gate_enabled: bool,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            k: 10,
            highlight_threshold: 0.60,
            relevance_gate_threshold: 0.20,
            gate_enabled: true,
        }
    }
}

impl CompareParams {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.k == 0 {
            return Err(MatchError::InvalidParams("k must be >= 1".into()));
        }
        for (name, t) in [
            ("highlight_threshold", self.highlight_threshold),
            ("relevance_gate_threshold", self.relevance_gate_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(MatchError::InvalidParams(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub rank: usize,
    pub dataset_name: String,
    pub doc_id: String,
    #[serde(rename = "link")]
    pub document_link: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetVerdict {
    pub name: String,
    /// Absent when the gate is off and the dataset has no model.
    pub relevance: Option<f64>,
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRef {
    pub rank: usize,
    pub dataset_name: String,
    pub doc_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub job_id: String,
    pub file: String,
    pub params: CompareParams,
    pub datasets: Vec<DatasetVerdict>,
    pub results: Vec<MatchResult>,
    pub highlights: Vec<DocRef>,
    pub generated_at: DateTime<Utc>,
}

impl ComparisonReport {
    pub fn has_highlights(&self) -> bool {
        !self.highlights.is_empty()
    }

    /// Copy with the generation timestamp pinned to the Unix epoch.
    pub fn without_timestamp(&self) -> Self {
        Self {
            generated_at: DateTime::<Utc>::UNIX_EPOCH,
            ..self.clone()
        }
    }
}

/// Vectorizes a query with the dataset's dictionary and idf weights.
pub fn query_vector(query: &CleanDocument, dataset: &Dataset) -> TfidfVector {
    let (bow, _) = to_bow(query, &dataset.dictionary);
    tfidf(&bow, &dataset.dictionary)
}

pub fn dataset_relevance(query_theta: &TopicDistribution, dataset: &Dataset) -> Result<f64, MatchError> {
    let centroid = dataset
        .model
        .as_ref()
        .and_then(|m| m.centroid())
        .ok_or_else(|| MatchError::ModelMissing(dataset.name.clone()))?;
    Ok(cosine_dense(&query_theta.theta, &centroid.theta))
}

/// Topic-space relevance of a query document to a dataset.
///
/// The query is folded into the dataset's model under the model seed, with a
/// sampling stream keyed by the query's content. A query with no
/// in-vocabulary tokens carries no topical evidence and scores 0.
pub fn query_relevance(query: &CleanDocument, dataset: &Dataset) -> Result<f64, MatchError> {
    let model = dataset
        .model
        .as_ref()
        .ok_or_else(|| MatchError::ModelMissing(dataset.name.clone()))?;
    let (mut bow, _) = to_bow(query, &dataset.dictionary);
    if bow.is_empty() {
        return Ok(0.0);
    }
    bow.doc_id = format!("query:{}", hex::encode(Sha256::digest(query.summary.as_bytes())));
    let theta = infer(model, &bow, model.config.seed)?;
    dataset_relevance(&theta, dataset)
}

fn by_score(a: &MatchResult, b: &MatchResult) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.dataset_name.cmp(&b.dataset_name))
}

pub fn top_k(query: &CleanDocument, dataset: &Dataset, params: &CompareParams) -> Vec<MatchResult> {
    let q = query_vector(query, dataset);
    let mut scored: Vec<MatchResult> = dataset
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| MatchResult {
            rank: 0,
            dataset_name: dataset.name.clone(),
            doc_id: v.doc_id.clone(),
            document_link: dataset.link(i).to_string(),
            similarity: cosine(&q, v),
        })
        .collect();
    scored.sort_by(by_score);
    scored.truncate(params.k);
    for (i, r) in scored.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    scored
}

/// Gates each dataset on topic relevance, ranks the survivors and merges
/// them into one report of at most `k` rows.
pub fn compare(
    job_id: &str,
    file: &str,
    query: &CleanDocument,
    datasets: &[&Dataset],
    params: &CompareParams,
) -> Result<ComparisonReport, MatchError> {
    params.validate()?;
    if datasets.is_empty() {
        return Err(MatchError::NoDatasets);
    }
    let per_dataset: Vec<(DatasetVerdict, Vec<MatchResult>)> = datasets
        .par_iter()
        .map(|ds| {
            let relevance = match (&ds.model, params.gate_enabled) {
                (Some(_), _) => Some(query_relevance(query, ds)?),
                (None, true) => return Err(MatchError::ModelMissing(ds.name.clone())),
                (None, false) => None,
            };
            let gated = params.gate_enabled && relevance.is_some_and(|r| r < params.relevance_gate_threshold);
            let results = if gated { Vec::new() } else { top_k(query, ds, params) };
            Ok((
                DatasetVerdict {
                    name: ds.name.clone(),
                    relevance,
                    gated,
                },
                results,
            ))
        })
        .collect::<Result<_, MatchError>>()?;

    let mut verdicts = Vec::with_capacity(per_dataset.len());
    let mut merged = Vec::new();
    for (verdict, results) in per_dataset {
        verdicts.push(verdict);
        merged.extend(results);
    }
    merged.sort_by(by_score);
    merged.truncate(params.k);
    for (i, r) in merged.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    let highlights = merged
        .iter()
        .filter(|r| r.similarity > params.highlight_threshold)
        .map(|r| DocRef {
            rank: r.rank,
            dataset_name: r.dataset_name.clone(),
            doc_id: r.doc_id.clone(),
        })
        .collect();
    Ok(ComparisonReport {
        job_id: job_id.to_string(),
        file: file.to_string(),
        params: params.clone(),
        datasets: verdicts,
        results: merged,
        highlights,
        generated_at: Utc::now(),
    })
}
