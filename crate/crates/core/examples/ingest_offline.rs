//! Ingests the bundled supply-chain reference table from the fixture cache,
//! trains it, and compares the release-notes fixture against it.
//!
//!     cargo run -p topicguard-core --example ingest_offline

use std::path::PathBuf;

use topicguard_core::ingest::{ingest_dataset, load_dataset_table, train_dataset, FetchPolicy, Fetcher};
use topicguard_core::matching::{compare, CompareParams};
use topicguard_core::textprep::{PrepConfig, Preprocessor, RawDocument};
use topicguard_core::topics::LdaConfig;

fn main() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let table = load_dataset_table(std::fs::File::open(fixtures.join("supply-chain.csv")).unwrap()).unwrap();
    println!("table: {} rows, {} rejected", table.rows.len(), table.row_errors.len());

    let fetcher = Fetcher::new(FetchPolicy::offline(fixtures.join("cache")));
    let dataset = ingest_dataset("ds-demo", "supply-chain", table.rows, &fetcher, &PrepConfig::default()).unwrap();
    println!("documents: {}, vocabulary: {}", dataset.documents.len(), dataset.dictionary.len());
    for f in &dataset.fetch_failures {
        println!("  row {} not fetched: {}", f.row, f.error);
    }
    let dataset = train_dataset(dataset, &LdaConfig::new(10).with_seed(42)).unwrap();

    let prep = Preprocessor::new(PrepConfig::default()).unwrap();
    let notes = prep.preprocess(&RawDocument {
        doc_id: "release-notes".into(),
        source: "release-notes.txt".into(),
        raw_text: std::fs::read_to_string(fixtures.join("release-notes.txt")).unwrap(),
        retrieved_at: None,
    });
    let report = compare("job-demo", "release-notes.txt", &notes, &[&dataset], &CompareParams::default()).unwrap();
    for r in report.results.iter().take(3) {
        println!("{:>2}. {:.3}  {}", r.rank, r.similarity, r.document_link);
    }
    println!("highlights: {}", report.highlights.len());
}
