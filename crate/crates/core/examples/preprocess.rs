//! Runs text through each preprocessing stage.
//!
//!     cargo run -p topicguard-core --example preprocess -- "The servers WERE breached twice in 2023!"

use topicguard_core::textprep::{clean_text, PrepConfig, Preprocessor, RawDocument};

fn main() {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "Attackers exploited 3 vulnerable build servers, stealing signing keys and credentials.".to_string()
    });

    let prep = Preprocessor::new(PrepConfig::default()).expect("bundled resources");
    let cleaned = clean_text(&text);
    let tokens = prep.tokenize(&cleaned);
    let kept = prep.remove_stopwords(tokens.clone());
    let lemmas = prep.lemmatize(kept.clone());
    println!("cleaned:    {cleaned}");
    println!("tokens:     {tokens:?}");
    println!("stopped:    {kept:?}");
    println!("lemmatized: {lemmas:?}");

    let raw = RawDocument {
        doc_id: "example".into(),
        source: "argv".into(),
        raw_text: text.clone(),
        retrieved_at: None,
    };
    println!("pipeline:   {:?}", prep.preprocess(&raw).tokens);

    let pos = Preprocessor::new(PrepConfig {
        pos_filter_enabled: true,
        ..PrepConfig::default()
    })
    .expect("bundled resources");
    println!("nouns only: {:?}", pos.tokens(&text));
}
