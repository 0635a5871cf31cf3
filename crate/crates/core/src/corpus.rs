//! Vocabulary dictionary, bag-of-words rows and TF-IDF weighting.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::textprep::CleanDocument;

/// SHA-256 of a dictionary's serialized block. Binds models and vectors to it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct DictionaryHash(pub [u8; 32]);

impl fmt::Debug for DictionaryHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DictionaryHash({})", hex::encode(&self.0[..8]))
    }
}

impl fmt::Display for DictionaryHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DictionaryParts", into = "DictionaryParts")]
pub struct Dictionary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    doc_freq: Vec<u32>,
    num_docs: u64,
    hash: DictionaryHash,
}

#[derive(Serialize, Deserialize)]
struct DictionaryParts {
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    num_docs: u64,
}

impl From<DictionaryParts> for Dictionary {
    fn from(p: DictionaryParts) -> Self {
        Dictionary::from_parts(p.tokens, p.doc_freq, p.num_docs)
    }
}

impl From<Dictionary> for DictionaryParts {
    fn from(d: Dictionary) -> Self {
        DictionaryParts {
            tokens: d.id_to_token,
            doc_freq: d.doc_freq,
            num_docs: d.num_docs,
        }
    }
}

impl Dictionary {
    /// Assigns ids in order of first appearance; document frequency counts a
    /// document at most once per token.
    pub fn build<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a CleanDocument>,
    {
        let mut token_to_id: HashMap<String, u32> = HashMap::new();
        let mut id_to_token = Vec::new();
        let mut doc_freq: Vec<u32> = Vec::new();
        let mut last_seen: Vec<u64> = Vec::new();
        let mut num_docs = 0u64;
        for doc in docs {
            num_docs += 1;
            for token in &doc.tokens {
                let id = *token_to_id.entry(token.clone()).or_insert_with(|| {
                    id_to_token.push(token.clone());
                    doc_freq.push(0);
                    last_seen.push(0);
                    (id_to_token.len() - 1) as u32
                });
                let slot = id as usize;
                if last_seen[slot] != num_docs {
                    last_seen[slot] = num_docs;
                    doc_freq[slot] += 1;
                }
            }
        }
        let hash = hash_dictionary(&id_to_token, &doc_freq, num_docs);
        Self {
            token_to_id,
            id_to_token,
            doc_freq,
            num_docs,
            hash,
        }
    }

    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<u32>, num_docs: u64) -> Self {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let hash = hash_dictionary(&tokens, &doc_freq, num_docs);
        Self {
            token_to_id,
            id_to_token: tokens,
            doc_freq,
            num_docs,
            hash,
        }
    }

    /// Drops terms with `doc_freq < min_df` or `doc_freq > max_df_ratio * num_docs`,
    /// reassigning dense ids while keeping relative order.
    pub fn filter_extremes(&self, min_df: u32, max_df_ratio: f64) -> Self {
        let max_df = max_df_ratio * self.num_docs as f64;
        let (tokens, dfs): (Vec<String>, Vec<u32>) = self
            .id_to_token
            .iter()
            .zip(&self.doc_freq)
            .filter(|(_, &df)| df >= min_df && df as f64 <= max_df)
            .map(|(t, &df)| (t.clone(), df))
            .unzip();
        Self::from_parts(tokens, dfs, self.num_docs)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn num_docs(&self) -> u64 {
        self.num_docs
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq[id as usize]
    }

    pub fn doc_freqs(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn hash(&self) -> DictionaryHash {
        self.hash
    }

    /// Smoothed inverse document frequency, always > 0.
    pub fn idf(&self, id: u32) -> f64 {
        let n = self.num_docs as f64;
        let df = self.doc_freq[id as usize] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Serialized block: u32 V, then per token (u32 byte length, UTF-8), then
    /// V little-endian u32 doc frequencies, then u64 num_docs.
    pub fn to_block(&self) -> Vec<u8> {
        encode_dictionary(&self.id_to_token, &self.doc_freq, self.num_docs)
    }
}

fn encode_dictionary(tokens: &[String], doc_freq: &[u32], num_docs: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(tokens.len() as u32).to_le_bytes());
    for t in tokens {
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }
    for df in doc_freq {
        out.extend_from_slice(&df.to_le_bytes());
    }
    out.extend_from_slice(&num_docs.to_le_bytes());
    out
}

fn hash_dictionary(tokens: &[String], doc_freq: &[u32], num_docs: u64) -> DictionaryHash {
    let digest = Sha256::digest(encode_dictionary(tokens, doc_freq, num_docs));
    DictionaryHash(digest.into())
}

/// One row of the document-term matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowVector {
    pub doc_id: String,
    /// `(term_id, count)`, strictly ascending by term id, counts ≥ 1.
    pub entries: Vec<(u32, u32)>,
    pub dictionary_hash: DictionaryHash,
}

impl BowVector {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Counts in-vocabulary tokens; returns the vector and the number of
/// out-of-vocabulary tokens that were dropped.
pub fn to_bow(doc: &CleanDocument, dict: &Dictionary) -> (BowVector, usize) {
    let mut counts: Vec<(u32, u32)> = Vec::new();
    let mut dropped = 0;
    let mut ids: Vec<u32> = doc
        .tokens
        .iter()
        .filter_map(|t| {
            let id = dict.id(t);
            if id.is_none() {
                dropped += 1;
            }
            id
        })
        .collect();
    ids.sort_unstable();
    for id in ids {
        match counts.last_mut() {
            Some((last, c)) if *last == id => *c += 1,
            _ => counts.push((id, 1)),
        }
    }
    (
        BowVector {
            doc_id: doc.doc_id.clone(),
            entries: counts,
            dictionary_hash: dict.hash(),
        },
        dropped,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVector {
    pub doc_id: String,
    pub entries: Vec<(u32, f64)>,
    pub norm: f64,
}

impl TfidfVector {
    pub fn new(doc_id: String, entries: Vec<(u32, f64)>) -> Self {
        let norm = l2_norm(&entries);
        Self {
            doc_id,
            entries,
            norm,
        }
    }
}

/// Sum of squares in ascending term order, then square root.
pub fn l2_norm(entries: &[(u32, f64)]) -> f64 {
    entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
}

/// Raw count times smoothed idf. Vectors are left unnormalized.
pub fn tfidf(bow: &BowVector, dict: &Dictionary) -> TfidfVector {
    let entries = bow
        .entries
        .iter()
        .map(|&(id, count)| (id, count as f64 * dict.idf(id)))
        .collect();
    TfidfVector::new(bow.doc_id.clone(), entries)
}

pub fn compute_tfidf(bows: &[BowVector], dict: &Dictionary) -> Vec<TfidfVector> {
    bows.iter().map(|b| tfidf(b, dict)).collect()
}
