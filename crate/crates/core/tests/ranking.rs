//! Ranking checked against a dense full-scan oracle, plus cosine and
//! comparison-report properties.

mod common;

use std::time::Instant;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

use topicguard_core::ingest::Dataset;
use topicguard_core::matching::{compare, cosine_sparse, CompareParams};
use topicguard_core::textprep::CleanDocument;
use topicguard_core::topics::{train, LdaConfig};

#[test]
fn top_k_matches_dense_oracle() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(2024);
    let docs = common::synthetic(200, &mut rng);
    let queries = common::queries(&docs, &mut rng);
    assert_eq!(queries.len(), 20);
    let ties_seen = common::check_top_k_against_oracle(&docs, &queries, &[1, 10, 250]).unwrap();
    assert!(ties_seen > 0, "corpus should exercise tie-breaks");
    assert!(start.elapsed().as_secs_f64() < 10.0, "took {:?}", start.elapsed());
}

fn sparse() -> impl Strategy<Value = Vec<(u32, f64)>> {
    proptest::collection::btree_map(0u32..64, 0.0f64..1e3, 0..24).prop_map(|m| m.into_iter().collect())
}

fn nonzero_sparse() -> impl Strategy<Value = Vec<(u32, f64)>> {
    proptest::collection::btree_map(0u32..64, 1e-3f64..1e3, 1..24).prop_map(|m| m.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cosine_symmetric_bounded_scale_invariant(a in sparse(), b in sparse(), c in 1e-3f64..1e3) {
        let ab = cosine_sparse(&a, &b);
        prop_assert_eq!(ab.to_bits(), cosine_sparse(&b, &a).to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
        let scaled: Vec<(u32, f64)> = a.iter().map(|&(i, x)| (i, c * x)).collect();
        prop_assert!((cosine_sparse(&scaled, &b) - ab).abs() <= 1e-12);
    }

    #[test]
    fn self_similarity_is_one(a in nonzero_sparse()) {
        prop_assert!((cosine_sparse(&a, &a) - 1.0).abs() <= 1e-9);
    }
}

fn trained(name: &str, docs: Vec<CleanDocument>, seed: u64) -> Dataset {
    let ds = common::dataset(name, docs);
    let config = LdaConfig {
        train_iters: 100,
        burn_in: 20,
        ..LdaConfig::new(2)
    }
    .with_seed(seed);
    let model = train(&ds.bows(), &ds.dictionary, &config).unwrap();
    ds.with_model(model).unwrap()
}

#[test]
fn compare_is_deterministic_and_gate_monotone() {
    let (a, _) = common::two_cluster(10, 30, 1);
    let mut rng = SplitMix64::seed_from_u64(5);
    let incidents = trained("incidents", a, 1);
    let words = trained("words", common::synthetic(40, &mut rng), 2);
    let mut query_tokens: Vec<String> = common::CLUSTER_A.iter().map(|w| w.to_string()).collect();
    query_tokens.extend(["word1", "word2", "word3"].map(String::from));
    let query = CleanDocument::from_tokens("q", query_tokens);
    let sets = [&incidents, &words];

    let first = compare("job-1", "notes.txt", &query, &sets, &CompareParams::default()).unwrap();
    let again = compare("job-1", "notes.txt", &query, &sets, &CompareParams::default()).unwrap();
    assert_eq!(
        serde_json::to_vec(&first.without_timestamp()).unwrap(),
        serde_json::to_vec(&again.without_timestamp()).unwrap()
    );

    let mut previously_passed: Vec<String> = Vec::new();
    for step in (0..=20).rev() {
        let params = CompareParams {
            relevance_gate_threshold: step as f64 / 20.0,
            ..CompareParams::default()
        };
        let report = compare("job-1", "notes.txt", &query, &sets, &params).unwrap();
        let passed: Vec<String> = report.datasets.iter().filter(|d| !d.gated).map(|d| d.name.clone()).collect();
        assert!(previously_passed.iter().all(|p| passed.contains(p)));
        previously_passed = passed;
    }
    assert_eq!(previously_passed.len(), 2);
}

#[test]
fn out_of_vocabulary_query_is_gated() {
    let (a, _) = common::two_cluster(10, 30, 1);
    let incidents = trained("incidents", a, 1);
    let query = CleanDocument::from_tokens("q", vec!["tomato".into(), "compost".into()]);
    let report = compare("job-1", "garden.txt", &query, &[&incidents], &CompareParams::default()).unwrap();
    assert_eq!(report.datasets[0].relevance, Some(0.0));
    assert!(report.datasets[0].gated);
    assert!(report.results.is_empty());

    let ungated = CompareParams {
        gate_enabled: false,
        ..CompareParams::default()
    };
    let report = compare("job-1", "garden.txt", &query, &[&incidents], &ungated).unwrap();
    assert_eq!(report.results.len(), 10);
    assert!(report.results.iter().all(|r| r.similarity == 0.0));
    assert!(!report.has_highlights());
}
