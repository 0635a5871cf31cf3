//! Writes a trained model to the `.ldam` container, reads it back and shows
//! that a damaged file is refused.

use topicguard_core::corpus::{to_bow, Dictionary};
use topicguard_core::textprep::CleanDocument;
use topicguard_core::topics::{infer, load_model, save_model, train, LdaConfig};

fn main() {
    let docs: Vec<CleanDocument> = [
        "leak token pipeline token secret",
        "pipeline runner secret leak",
        "garden tomato compost tomato",
        "compost soil garden seedling",
    ]
    .iter()
    .enumerate()
    .map(|(i, text)| CleanDocument::from_tokens(format!("d{i}"), text.split(' ').map(String::from).collect()))
    .collect();
    let dict = Dictionary::build(&docs);
    let bows: Vec<_> = docs.iter().map(|d| to_bow(d, &dict).0).collect();
    let model = train(&bows, &dict, &LdaConfig::new(2).with_seed(1)).unwrap();

    let bytes = save_model(&model, &dict).unwrap();
    println!("container: {} bytes, magic {:?}", bytes.len(), String::from_utf8_lossy(&bytes[..4]));
    let path = std::env::temp_dir().join("topicguard-example.ldam");
    std::fs::write(&path, &bytes).unwrap();
    println!("wrote {}", path.display());

    let (loaded, loaded_dict) = load_model(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(loaded_dict, dict);
    let probe = to_bow(&docs[0], &dict).0;
    assert_eq!(infer(&model, &probe, 3).unwrap(), infer(&loaded, &probe, 3).unwrap());
    println!("round trip: same dictionary, same inference");

    let mut damaged = bytes.clone();
    let last = damaged.len() - 1;
    damaged[last] ^= 0xff;
    match load_model(&damaged) {
        Ok(_) => println!("damaged file loaded?!"),
        Err(e) => println!("damaged file refused: {e}"),
    }
}
