#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use topicguard_core::corpus::{to_bow, BowVector, Dictionary};
use topicguard_core::ingest::{Dataset, DatasetTableRow};
use topicguard_core::matching::{top_k, CompareParams};
use topicguard_core::textprep::{CleanDocument, PrepConfig, Preprocessor};

pub const CLUSTER_A: [&str; 5] = ["ransomware", "encryption", "backup", "extortion", "payload"];
pub const CLUSTER_B: [&str; 5] = ["phishing", "credential", "mailbox", "spoofing", "domain"];

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// `per_cluster` documents of `len` tokens drawn uniformly from each cluster's
/// vocabulary, cluster A first. Returns the documents and their cluster labels.
pub fn two_cluster(per_cluster: usize, len: usize, seed: u64) -> (Vec<CleanDocument>, Vec<usize>) {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for (label, vocab) in [CLUSTER_A, CLUSTER_B].iter().enumerate() {
        for i in 0..per_cluster {
            let tokens = (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect();
            docs.push(CleanDocument::from_tokens(format!("c{label}-{i:02}"), tokens));
            labels.push(label);
        }
    }
    (docs, labels)
}

pub fn bows(docs: &[CleanDocument]) -> (Dictionary, Vec<BowVector>) {
    let dict = Dictionary::build(docs);
    let bows = docs.iter().map(|d| to_bow(d, &dict).0).collect();
    (dict, bows)
}

/// Zipf-ish draws from `word0..word59`, with a few exact duplicates so that
/// ties occur.
pub fn synthetic(n: usize, rng: &mut SplitMix64) -> Vec<CleanDocument> {
    let mut docs: Vec<CleanDocument> = (0..n)
        .map(|i| {
            let len = rng.gen_range(3..40);
            let tokens = (0..len).map(|_| format!("word{}", (rng.gen_range(0.0f64..1.0).powi(2) * 60.0) as usize)).collect();
            CleanDocument::from_tokens(format!("doc-{:05}", (i * 7919) % n), tokens)
        })
        .collect();
    for i in 0..n / 20 {
        let src = docs[i].tokens.clone();
        let j = n - 1 - i;
        docs[j] = CleanDocument::from_tokens(docs[j].doc_id.clone(), src);
    }
    docs
}

/// Dense TF-IDF with smoothed idf, computed directly from the token lists.
/// Term indices follow first appearance so floating-point sums run in the
/// same order as in the sparse implementation.
pub struct DenseOracle {
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
    rows: Vec<(String, Vec<f64>)>,
}

impl DenseOracle {
    pub fn new(docs: &[CleanDocument]) -> Self {
        let mut vocab = HashMap::new();
        let mut df: Vec<u64> = Vec::new();
        for d in docs {
            let mut seen = HashSet::new();
            for t in &d.tokens {
                let next = vocab.len();
                let id = *vocab.entry(t.clone()).or_insert(next);
                if id == df.len() {
                    df.push(0);
                }
                if seen.insert(id) {
                    df[id] += 1;
                }
            }
        }
        let n = docs.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&f| ((1.0 + n) / (1.0 + f as f64)).ln() + 1.0).collect();
        let mut oracle = Self {
            vocab,
            idf,
            rows: Vec::new(),
        };
        oracle.rows = docs.iter().map(|d| (d.doc_id.clone(), oracle.vector(&d.tokens))).collect();
        oracle
    }

    pub fn vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut counts = vec![0u32; self.idf.len()];
        for t in tokens {
            if let Some(&id) = self.vocab.get(t) {
                counts[id] += 1;
            }
        }
        counts.iter().zip(&self.idf).map(|(&c, &idf)| c as f64 * idf).collect()
    }

    pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(0.0, 1.0)
        }
    }

    pub fn top_k(&self, query: &[String], k: usize) -> Vec<(String, f64)> {
        let q = self.vector(query);
        let mut all: Vec<(String, f64)> = self.rows.iter().map(|(id, v)| (id.clone(), Self::cosine(&q, v))).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }
}

fn row(url: String) -> DatasetTableRow {
    DatasetTableRow {
        reference: url,
        title: None,
        date: None,
        notes: None,
        extra: Default::default(),
    }
}

pub fn dataset(name: &str, docs: Vec<CleanDocument>) -> Dataset {
    let rows = (0..docs.len()).map(|i| row(format!("https://{name}.example/{i}"))).collect();
    let prep = Preprocessor::new(PrepConfig::default()).unwrap();
    Dataset::from_documents(name, name, rows, docs.into_iter().enumerate().collect(), vec![], &prep)
}

/// Random queries over `word0..word59` with some unseen terms, plus the
/// empty query, an all-unseen query and an exact copy of the first document.
pub fn queries(docs: &[CleanDocument], rng: &mut SplitMix64) -> Vec<Vec<String>> {
    let mut queries: Vec<Vec<String>> = (0..17)
        .map(|_| {
            let len = rng.gen_range(1..30);
            (0..len)
                .map(|_| match rng.gen_range(0..10) {
                    0 => "unseen".to_string(),
                    _ => format!("word{}", rng.gen_range(0..60)),
                })
                .collect()
        })
        .collect();
    queries.push(vec![]);
    queries.push(vec!["unseen".into(), "absent".into()]);
    queries.push(docs[0].tokens.clone());
    queries
}

/// Runs `top_k` for every query and k and demands bit-identical scores, order
/// and tie-breaks from the dense oracle. Returns how many adjacent ties the
/// rankings contained.
pub fn check_top_k_against_oracle(docs: &[CleanDocument], queries: &[Vec<String>], ks: &[usize]) -> Result<usize, String> {
    let ds = dataset("synthetic", docs.to_vec());
    let oracle = DenseOracle::new(docs);
    let mut ties = 0;
    for (qi, q) in queries.iter().enumerate() {
        for &k in ks {
            let params = CompareParams { k, ..CompareParams::default() };
            let got = top_k(&CleanDocument::from_tokens("q", q.clone()), &ds, &params);
            let want = oracle.top_k(q, k);
            if got.len() != want.len() {
                return Err(format!("query {qi}, k {k}: {} results, oracle {}", got.len(), want.len()));
            }
            for (i, (g, (id, sim))) in got.iter().zip(&want).enumerate() {
                if g.rank != i + 1 || &g.doc_id != id || g.similarity.to_bits() != sim.to_bits() {
                    return Err(format!(
                        "query {qi}, k {k}, rank {}: got {} {} {}, oracle {id} {sim}",
                        i + 1,
                        g.rank,
                        g.doc_id,
                        g.similarity
                    ));
                }
            }
            ties += got.windows(2).filter(|w| w[0].similarity == w[1].similarity).count();
        }
    }
    Ok(ties)
}
