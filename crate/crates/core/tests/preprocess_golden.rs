//! Pinned input → token cases for the preprocessing pipeline.

mod common;

use topicguard_core::textprep::{preprocess_document, PrepConfig, RawDocument};

struct Case {
    line: usize,
    pos_filter: bool,
    input: String,
    expected: Vec<String>,
}

fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(common::fixtures_dir().join("preprocess-golden.tsv")).unwrap();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            assert_eq!(cols.len(), 3, "line {}: expected 3 columns", i + 1);
            Case {
                line: i + 1,
                pos_filter: cols[0] == "on",
                input: cols[1].to_string(),
                expected: cols[2].split_whitespace().map(str::to_string).collect(),
            }
        })
        .collect()
}

#[test]
fn golden_cases() {
    let cases = cases();
    assert!(cases.len() >= 30);
    assert!(cases.iter().any(|c| c.pos_filter) && cases.iter().any(|c| !c.pos_filter));
    let mut failures = Vec::new();
    for c in &cases {
        let config = PrepConfig {
            pos_filter_enabled: c.pos_filter,
            ..PrepConfig::default()
        };
        let raw = RawDocument {
            doc_id: format!("golden-{}", c.line),
            source: "golden".into(),
            raw_text: c.input.clone(),
            retrieved_at: None,
        };
        let doc = preprocess_document(&raw, &config).unwrap();
        if doc.tokens != c.expected {
            failures.push(format!("line {}: {:?} -> {:?}, expected {:?}", c.line, c.input, doc.tokens, c.expected));
        }
        assert_eq!(doc.summary, doc.tokens.join(" "));
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn rerunning_on_summary_is_stable() {
    for c in cases() {
        let config = PrepConfig {
            pos_filter_enabled: c.pos_filter,
            ..PrepConfig::default()
        };
        let raw = |text: &str| RawDocument {
            doc_id: "x".into(),
            source: "golden".into(),
            raw_text: text.to_string(),
            retrieved_at: None,
        };
        let once = preprocess_document(&raw(&c.input), &config).unwrap();
        let twice = preprocess_document(&raw(&once.summary), &config).unwrap();
        assert_eq!(once.tokens, twice.tokens, "line {}", c.line);
    }
}
