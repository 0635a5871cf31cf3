//! TF-IDF top-k ranking of a query against a handful of documents.

use topicguard_core::ingest::{Dataset, DatasetTableRow};
use topicguard_core::matching::{top_k, CompareParams};
use topicguard_core::textprep::{PrepConfig, Preprocessor, RawDocument};

const PAGES: [(&str, &str); 4] = [
    ("https://example.org/ci-token-leak", "A CI token leaked in build logs let attackers push signed releases."),
    ("https://example.org/typosquat", "Typosquatted packages on the registry installed a credential stealer."),
    ("https://example.org/router", "A router firmware flaw allowed remote code execution."),
    ("https://example.org/build-cache", "Poisoned build cache entries shipped a backdoor in signed releases."),
];

fn main() {
    let prep = Preprocessor::new(PrepConfig::default()).unwrap();
    let rows: Vec<DatasetTableRow> = PAGES
        .iter()
        .map(|(url, _)| DatasetTableRow {
            reference: url.to_string(),
            title: None,
            date: None,
            notes: None,
            extra: Default::default(),
        })
        .collect();
    let docs = PAGES
        .iter()
        .enumerate()
        .map(|(i, (url, text))| {
            let raw = RawDocument {
                doc_id: format!("doc-{i:05}"),
                source: url.to_string(),
                raw_text: text.to_string(),
                retrieved_at: None,
            };
            (i, prep.preprocess(&raw))
        })
        .collect();
    let dataset = Dataset::from_documents("ds-demo", "demo", rows, docs, vec![], &prep);

    let query = prep.preprocess(&RawDocument {
        doc_id: "query".into(),
        source: "argv".into(),
        raw_text: std::env::args().nth(1).unwrap_or_else(|| "signed releases from a leaked build token".into()),
        retrieved_at: None,
    });
    println!("query tokens: {:?}", query.tokens);
    for hit in top_k(&query, &dataset, &CompareParams { k: 3, ..CompareParams::default() }) {
        println!("{:>2}. {:.3}  {}", hit.rank, hit.similarity, hit.document_link);
    }
}
