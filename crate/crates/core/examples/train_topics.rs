//! Trains LDA on a synthetic two-topic corpus and prints what it found.
//!
//!     cargo run -p topicguard-core --example train_topics -- 7

use topicguard_core::corpus::{to_bow, Dictionary};
use topicguard_core::textprep::CleanDocument;
use topicguard_core::topics::rng::SamplerRng;
use topicguard_core::topics::{infer, perplexity, top_words, train, LdaConfig, LdaModel};

const RANSOM: [&str; 5] = ["ransomware", "encryption", "backup", "extortion", "payload"];
const PHISH: [&str; 5] = ["phishing", "credential", "mailbox", "spoofing", "domain"];

fn corpus(seed: u64) -> Vec<CleanDocument> {
    let mut rng = SamplerRng::from_seed(seed);
    let mut docs = Vec::new();
    for (name, vocab) in [("ransom", RANSOM), ("phish", PHISH)] {
        for i in 0..20 {
            let tokens = (0..50).map(|_| vocab[rng.below(vocab.len())].to_string()).collect();
            docs.push(CleanDocument::from_tokens(format!("{name}-{i:02}"), tokens));
        }
    }
    docs
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let docs = corpus(seed);
    let dict = Dictionary::build(&docs);
    let bows: Vec<_> = docs.iter().map(|d| to_bow(d, &dict).0).collect();

    let config = LdaConfig::new(2).with_seed(seed);
    let model = train(&bows, &dict, &config).unwrap();
    for k in 0..model.num_topics() {
        let words: Vec<String> = top_words(&model, &dict, k, 5)
            .unwrap()
            .into_iter()
            .map(|(w, p)| format!("{w} {p:.3}"))
            .collect();
        println!("topic {k}: {}", words.join(", "));
    }

    let uniform = LdaModel::uniform(&dict, config).unwrap();
    println!(
        "perplexity: trained {:.3}, uniform {:.3}",
        perplexity(&model, &bows).unwrap(),
        perplexity(&uniform, &bows).unwrap()
    );

    let query = CleanDocument::from_tokens("query", "mailbox spoofing credential phishing backup".split(' ').map(String::from).collect());
    let theta = infer(&model, &to_bow(&query, &dict).0, seed).unwrap();
    println!("query theta: {:?}", theta.theta);
}
