//! Text cleaning, tokenization, stopword removal and rule-based lemmatization.
//!
//! The pipeline is `clean_text -> tokenize -> remove_stopwords -> lemmatize`.
//! Every stage is a pure function of its input and the resolved
//! [`Preprocessor`] resources, so the same `(raw_text, PrepConfig)` pair
//! always produces a bit-identical [`CleanDocument`].

use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const ENGLISH_STOPWORDS: &str = include_str!("../resources/stopwords_english.txt");
const LEMMA_EXCEPTIONS: &str = include_str!("../resources/lemma_exceptions.tsv");
const POS_LEXICON: &str = include_str!("../resources/pos_lexicon.tsv");

/// Identifier of the stopword list bundled with the crate.
pub const DEFAULT_STOPWORD_LIST: &str = "english";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrepError {
    #[error("unknown stopword list `{0}`")]
    UnknownStopwordList(String),
    #[error("min_token_len must be at least 1")]
    InvalidMinTokenLen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    /// URL or uploaded filename.
    pub source: String,
    pub raw_text: String,
    pub retrieved_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CleanDocument {
    pub doc_id: String,
    pub summary: String,
    pub tokens: Vec<String>,
}

impl CleanDocument {
    /// Builds a document straight from tokens; the summary is their space-join.
    pub fn from_tokens(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            summary: tokens.join(" "),
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub stopword_list_id: String,
    /// Keep only tokens the lexicon tags as noun/adjective (unknown words are kept).
    pub pos_filter_enabled: bool,
    pub min_token_len: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            stopword_list_id: DEFAULT_STOPWORD_LIST.to_string(),
            pos_filter_enabled: false,
            min_token_len: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosTag {
    Noun,
    Adjective,
    Verb,
    Other,
}

impl PosTag {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "n" => Some(PosTag::Noun),
            "adj" => Some(PosTag::Adjective),
            "v" => Some(PosTag::Verb),
            "other" => Some(PosTag::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StopwordList {
    id: String,
    words: HashSet<String>,
    sha256: String,
}

impl StopwordList {
    pub fn resolve(id: &str) -> Result<Self, PrepError> {
        match id {
            DEFAULT_STOPWORD_LIST => Ok(Self::from_text(id, ENGLISH_STOPWORDS)),
            other => Err(PrepError::UnknownStopwordList(other.to_string())),
        }
    }

    fn from_text(id: &str, text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self {
            id: id.to_string(),
            words,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// SHA-256 (hex) of the list file as bundled.
    pub fn content_hash(&self) -> &str {
        &self.sha256
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }
}

fn parse_tsv(text: &str) -> impl Iterator<Item = (&str, &str)> {
    text.lines().filter_map(|line| {
        let mut parts = line.splitn(2, '\t');
        let key = parts.next()?.trim();
        let value = parts.next()?.trim();
        (!key.is_empty() && !value.is_empty()).then_some((key, value))
    })
}

/// Exception table for irregular forms plus a part-of-speech lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    exceptions: HashMap<String, String>,
    pos: HashMap<String, PosTag>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(LEMMA_EXCEPTIONS, POS_LEXICON)
    }

    pub fn from_tsv(exceptions: &str, pos: &str) -> Self {
        Self {
            exceptions: parse_tsv(exceptions)
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            pos: parse_tsv(pos)
                .filter_map(|(k, v)| PosTag::parse(v).map(|tag| (k.to_string(), tag)))
                .collect(),
        }
    }

    pub fn pos(&self, token: &str) -> Option<PosTag> {
        self.pos.get(token).copied()
    }

    pub fn lemma(&self, token: &str) -> String {
        if let Some(lemma) = self.exceptions.get(token) {
            return lemma.clone();
        }
        suffix_lemma(token)
    }
}

fn is_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Plural-stripping rule table. Tokens of three letters or fewer are left alone.
fn suffix_lemma(token: &str) -> String {
    let b = token.as_bytes();
    let n = b.len();
    if n <= 3 || !token.is_ascii() {
        return token.to_string();
    }
    if token.ends_with("ies") && n > 4 {
        return format!("{}y", &token[..n - 3]);
    }
    if token.ends_with("sses") {
        return token[..n - 2].to_string();
    }
    if ["xes", "zes", "ches", "shes"].iter().any(|s| token.ends_with(s)) {
        return token[..n - 2].to_string();
    }
    if token.ends_with("es") {
        // times -> time, releases -> release
        return token[..n - 1].to_string();
    }
    if b[n - 1] == b's' {
        let prev = b[n - 2];
        if prev != b's' && !is_vowel(prev) {
            return token[..n - 1].to_string();
        }
    }
    token.to_string()
}

/// NFC-normalize, lowercase, and reduce to ASCII letters separated by single spaces.
pub fn clean_text(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_ascii_lowercase() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Resolved preprocessing resources for one [`PrepConfig`].
#[derive(Debug, Clone)]
pub struct Preprocessor {
    config: PrepConfig,
    stopwords: StopwordList,
    lexicon: Lexicon,
}

impl Preprocessor {
    pub fn new(config: PrepConfig) -> Result<Self, PrepError> {
        Self::with_lexicon(config, Lexicon::bundled())
    }

    pub fn with_lexicon(config: PrepConfig, lexicon: Lexicon) -> Result<Self, PrepError> {
        if config.min_token_len == 0 {
            return Err(PrepError::InvalidMinTokenLen);
        }
        let stopwords = StopwordList::resolve(&config.stopword_list_id)?;
        Ok(Self {
            config,
            stopwords,
            lexicon,
        })
    }

    pub fn config(&self) -> &PrepConfig {
        &self.config
    }

    pub fn stopwords(&self) -> &StopwordList {
        &self.stopwords
    }

    pub fn tokenize(&self, cleaned: &str) -> Vec<String> {
        tokenize(cleaned, self.config.min_token_len)
    }

    pub fn remove_stopwords(&self, tokens: Vec<String>) -> Vec<String> {
        tokens
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }

    /// Maps tokens to lemmas and applies the optional POS filter.
    ///
    /// A lemma that lands on a stopword or below `min_token_len` is dropped, so
    /// the output always satisfies the same closure rules as the input.
    pub fn lemmatize(&self, tokens: Vec<String>) -> Vec<String> {
        tokens
            .into_iter()
            .filter_map(|token| {
                let lemma = self.lexicon.lemma(&token);
                if self.config.pos_filter_enabled
                    && !(self.keeps_pos(&token) && self.keeps_pos(&lemma))
                {
                    return None;
                }
                if lemma.len() < self.config.min_token_len || self.stopwords.contains(&lemma) {
                    return None;
                }
                Some(lemma)
            })
            .collect()
    }

    fn keeps_pos(&self, token: &str) -> bool {
        match self.lexicon.pos(token) {
            Some(PosTag::Noun | PosTag::Adjective) | None => true,
            Some(PosTag::Verb | PosTag::Other) => false,
        }
    }

    pub fn tokens(&self, raw_text: &str) -> Vec<String> {
        let cleaned = clean_text(raw_text);
        let tokens = self.tokenize(&cleaned);
        let tokens = self.remove_stopwords(tokens);
        self.lemmatize(tokens)
    }

    pub fn preprocess(&self, raw: &RawDocument) -> CleanDocument {
        CleanDocument::from_tokens(raw.doc_id.clone(), self.tokens(&raw.raw_text))
    }
}

pub fn tokenize(cleaned: &str, min_token_len: usize) -> Vec<String> {
    cleaned
        .split(' ')
        .filter(|t| !t.is_empty() && t.len() >= min_token_len)
        .map(str::to_string)
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, config: &PrepConfig) -> Result<Vec<String>, PrepError> {
    Ok(Preprocessor::new(config.clone())?.remove_stopwords(tokens))
}

pub fn lemmatize(tokens: Vec<String>, config: &PrepConfig) -> Result<Vec<String>, PrepError> {
    Ok(Preprocessor::new(config.clone())?.lemmatize(tokens))
}

pub fn preprocess_document(raw: &RawDocument, config: &PrepConfig) -> Result<CleanDocument, PrepError> {
    Ok(Preprocessor::new(config.clone())?.preprocess(raw))
}
