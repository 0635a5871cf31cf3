//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Training resamples every token's topic assignment from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + Vβ)
//! ```
//!
//! and averages the smoothed estimates of φ and θ over thinned post-burn-in
//! sweeps. Inference folds a new document in with φ held fixed.

mod container;
pub mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BowVector, Dictionary, DictionaryHash};
use rng::SamplerRng;

pub use container::{load_model, save_model, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopicError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no observable tokens")]
    NoObservableTokens,
    #[error("model/dictionary mismatch")]
    DictionaryMismatch,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("topic {topic} out of range (K = {num_topics})")]
    TopicOutOfRange { topic: usize, num_topics: usize },
    #[error("zero total tokens")]
    ZeroTokens,
    #[error("corrupt container")]
    CorruptContainer,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    /// Symmetric doc-topic prior.
    pub alpha: f64,
    /// Symmetric topic-word prior.
    pub beta: f64,
    pub train_iters: usize,
    pub infer_iters: usize,
    pub burn_in: usize,
    pub infer_burn_in: usize,
    /// Keep every `thin`-th sweep after burn-in.
    pub thin: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// Defaults for `num_topics` topics: α = 50/K, β = 0.01, 1000 training
    /// sweeps with 200 burn-in, 200 inference sweeps with 50 burn-in, thinning 10.
    pub fn new(num_topics: usize) -> Self {
        Self {
            num_topics,
            alpha: 50.0 / num_topics.max(1) as f64,
            beta: 0.01,
            train_iters: 1000,
            infer_iters: 200,
            burn_in: 200,
            infer_burn_in: 50,
            thin: 10,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TopicError> {
        let bad = |m: &str| Err(TopicError::InvalidConfig(m.to_string()));
        if self.num_topics == 0 {
            return bad("num_topics must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be > 0");
        }
        if self.train_iters == 0 || self.infer_iters == 0 {
            return bad("iteration counts must be >= 1");
        }
        if self.burn_in >= self.train_iters {
            return bad("burn_in must be < train_iters");
        }
        if self.infer_burn_in >= self.infer_iters {
            return bad("infer_burn_in must be < infer_iters");
        }
        if self.thin == 0 {
            return bad("thin must be >= 1");
        }
        Ok(())
    }

    /// Sweep `s` (1-based) is sampled when past burn-in and a multiple of
    /// `thin` away from the final sweep, so the last sweep is always kept.
    fn keeps(&self, sweep: usize, burn_in: usize, iters: usize) -> bool {
        sweep > burn_in && (iters - sweep).is_multiple_of(self.thin)
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::new(10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDistribution {
    pub theta: Vec<f64>,
}

impl TopicDistribution {
    pub fn uniform(k: usize) -> Self {
        Self {
            theta: vec![1.0 / k as f64; k],
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.theta.iter().enumerate() {
            if p > self.theta[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub dictionary_hash: DictionaryHash,
    num_topics: usize,
    vocab_size: usize,
    /// Row-major K×V topic-word probabilities.
    phi: Vec<f64>,
    /// `(doc_id, θ_d)` for each training document, in corpus order.
    pub training_doc_topics: Vec<(String, TopicDistribution)>,
    pub format_version: u32,
}

impl LdaModel {
    /// A model whose topics are all uniform over the vocabulary.
    pub fn uniform(dict: &Dictionary, config: LdaConfig) -> Result<Self, TopicError> {
        config.validate()?;
        let v = dict.len();
        if v == 0 {
            return Err(TopicError::NoObservableTokens);
        }
        Ok(Self {
            num_topics: config.num_topics,
            vocab_size: v,
            phi: vec![1.0 / v as f64; config.num_topics * v],
            config,
            dictionary_hash: dict.hash(),
            training_doc_topics: Vec::new(),
            format_version: FORMAT_VERSION,
        })
    }

    pub(crate) fn from_parts(
        config: LdaConfig,
        dictionary_hash: DictionaryHash,
        vocab_size: usize,
        phi: Vec<f64>,
        training_doc_topics: Vec<(String, TopicDistribution)>,
    ) -> Self {
        Self {
            num_topics: config.num_topics,
            vocab_size,
            phi,
            config,
            dictionary_hash,
            training_doc_topics,
            format_version: FORMAT_VERSION,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        &self.phi[topic * self.vocab_size..(topic + 1) * self.vocab_size]
    }

    pub(crate) fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Normalized mean of the training documents' θ vectors.
    pub fn centroid(&self) -> Option<TopicDistribution> {
        if self.training_doc_topics.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.num_topics];
        for (_, t) in &self.training_doc_topics {
            for (m, p) in mean.iter_mut().zip(&t.theta) {
                *m += p;
            }
        }
        normalize(&mut mean);
        Some(TopicDistribution { theta: mean })
    }

    pub fn check_invariants(&self) -> Result<(), TopicError> {
        let violation = |m: String| Err(TopicError::InvariantViolation(m));
        if self.phi.len() != self.num_topics * self.vocab_size {
            return violation("phi dimensions".into());
        }
        for k in 0..self.num_topics {
            let row = self.phi_row(k);
            if row.iter().any(|&p| p.is_nan() || p <= 0.0) {
                return violation(format!("phi row {k} has a non-positive entry"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return violation(format!("phi row {k} sums to {s}"));
            }
        }
        for (id, t) in &self.training_doc_topics {
            if t.theta.len() != self.num_topics {
                return violation(format!("theta for {id} has wrong length"));
            }
            if t.theta.iter().any(|&p| p.is_nan() || p <= 0.0) {
                return violation(format!("theta for {id} has a non-positive entry"));
            }
            let s: f64 = t.theta.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return violation(format!("theta for {id} sums to {s}"));
            }
        }
        Ok(())
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

/// Count tables of the collapsed sampler, exposed to [`SweepObserver`]s.
pub struct GibbsState {
    num_topics: usize,
    vocab_size: usize,
    words: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_total: Vec<u32>,
}

impl GibbsState {
    pub fn num_docs(&self) -> usize {
        self.words.len()
    }
    pub fn num_topics(&self) -> usize {
        self.num_topics
    }
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }
    /// Word ids of document `d`, one entry per token.
    pub fn words(&self, d: usize) -> &[u32] {
        &self.words[d]
    }
    pub fn assignments(&self, d: usize) -> &[u32] {
        &self.assignments[d]
    }
    pub fn doc_len(&self, d: usize) -> usize {
        self.words[d].len()
    }
    pub fn doc_topic(&self, d: usize, k: usize) -> u32 {
        self.doc_topic[d * self.num_topics + k]
    }
    pub fn topic_word(&self, k: usize, w: usize) -> u32 {
        self.topic_word[k * self.vocab_size + w]
    }
    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_total[k]
    }

    fn conserved(&self) -> bool {
        let docs_ok = (0..self.num_docs()).all(|d| {
            (0..self.num_topics).map(|k| self.doc_topic(d, k) as usize).sum::<usize>() == self.doc_len(d)
        });
        let topics_ok = (0..self.num_topics).all(|k| {
            (0..self.vocab_size).map(|w| self.topic_word(k, w)).sum::<u32>() == self.topic_total[k]
        });
        docs_ok && topics_ok
    }
}

/// Called after every training sweep with the current count tables.
pub trait SweepObserver {
    fn after_sweep(&mut self, sweep: usize, state: &GibbsState);
}

impl SweepObserver for () {
    fn after_sweep(&mut self, _: usize, _: &GibbsState) {}
}

impl<F: FnMut(usize, &GibbsState)> SweepObserver for F {
    fn after_sweep(&mut self, sweep: usize, state: &GibbsState) {
        self(sweep, state)
    }
}

/// Draws index `k` with probability `weights[k] / Σ weights`.
fn sample_index(weights: &[f64], rng: &mut SamplerRng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

pub fn train(bows: &[BowVector], dict: &Dictionary, config: &LdaConfig) -> Result<LdaModel, TopicError> {
    train_observed(bows, dict, config, &mut ())
}

pub fn train_observed(
    bows: &[BowVector],
    dict: &Dictionary,
    config: &LdaConfig,
    observer: &mut dyn SweepObserver,
) -> Result<LdaModel, TopicError> {
    config.validate()?;
    if bows.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    if bows.iter().any(|b| b.dictionary_hash != dict.hash()) {
        return Err(TopicError::DictionaryMismatch);
    }
    if bows.iter().all(BowVector::is_empty) {
        return Err(TopicError::NoObservableTokens);
    }
    let k_count = config.num_topics;
    let v = dict.len();
    let (alpha, beta) = (config.alpha, config.beta);
    let v_beta = v as f64 * beta;
    let k_alpha = k_count as f64 * alpha;

    let mut rng = SamplerRng::from_seed(config.seed);
    let words: Vec<Vec<u32>> = bows
        .iter()
        .map(|b| {
            b.entries
                .iter()
                .flat_map(|&(id, c)| std::iter::repeat_n(id, c as usize))
                .collect()
        })
        .collect();
    let mut state = GibbsState {
        num_topics: k_count,
        vocab_size: v,
        assignments: Vec::with_capacity(words.len()),
        doc_topic: vec![0; words.len() * k_count],
        topic_word: vec![0; k_count * v],
        topic_total: vec![0; k_count],
        words,
    };
    for d in 0..state.words.len() {
        let mut z = Vec::with_capacity(state.words[d].len());
        for &w in &state.words[d] {
            let k = rng.below(k_count);
            z.push(k as u32);
            state.doc_topic[d * k_count + k] += 1;
            state.topic_word[k * v + w as usize] += 1;
            state.topic_total[k] += 1;
        }
        state.assignments.push(z);
    }

    let mut phi_sum = vec![0.0; k_count * v];
    let mut theta_sum = vec![0.0; state.words.len() * k_count];
    let mut samples = 0usize;
    let mut weights = vec![0.0; k_count];

    for sweep in 1..=config.train_iters {
        for d in 0..state.words.len() {
            for i in 0..state.words[d].len() {
                let w = state.words[d][i] as usize;
                let old = state.assignments[d][i] as usize;
                state.doc_topic[d * k_count + old] -= 1;
                state.topic_word[old * v + w] -= 1;
                state.topic_total[old] -= 1;
                for (k, slot) in weights.iter_mut().enumerate() {
                    *slot = (state.doc_topic[d * k_count + k] as f64 + alpha)
                        * (state.topic_word[k * v + w] as f64 + beta)
                        / (state.topic_total[k] as f64 + v_beta);
                }
                let new = sample_index(&weights, &mut rng);
                state.assignments[d][i] = new as u32;
                state.doc_topic[d * k_count + new] += 1;
                state.topic_word[new * v + w] += 1;
                state.topic_total[new] += 1;
            }
        }
        debug_assert!(state.conserved(), "count conservation broken at sweep {sweep}");
        observer.after_sweep(sweep, &state);

        if config.keeps(sweep, config.burn_in, config.train_iters) {
            samples += 1;
            for k in 0..k_count {
                let denom = state.topic_total[k] as f64 + v_beta;
                for w in 0..v {
                    phi_sum[k * v + w] += (state.topic_word[k * v + w] as f64 + beta) / denom;
                }
            }
            for d in 0..state.words.len() {
                let denom = state.words[d].len() as f64 + k_alpha;
                for k in 0..k_count {
                    theta_sum[d * k_count + k] += (state.doc_topic[d * k_count + k] as f64 + alpha) / denom;
                }
            }
        }
    }

    let n = samples as f64;
    let mut phi: Vec<f64> = phi_sum.into_iter().map(|x| x / n).collect();
    for row in phi.chunks_mut(v) {
        normalize(row);
    }
    let training_doc_topics = bows
        .iter()
        .enumerate()
        .map(|(d, b)| {
            let mut theta: Vec<f64> = theta_sum[d * k_count..(d + 1) * k_count].iter().map(|x| x / n).collect();
            normalize(&mut theta);
            (b.doc_id.clone(), TopicDistribution { theta })
        })
        .collect();
    let model = LdaModel::from_parts(config.clone(), dict.hash(), v, phi, training_doc_topics);
    debug_assert!(model.check_invariants().is_ok());
    Ok(model)
}

/// Fold-in Gibbs sampling of a document's topic mixture with φ fixed.
///
/// Uses `infer_iters` sweeps from a stream keyed by `(seed, bow.doc_id)`.
/// An empty document gets the uniform distribution.
pub fn infer(model: &LdaModel, bow: &BowVector, seed: u64) -> Result<TopicDistribution, TopicError> {
    if bow.dictionary_hash != model.dictionary_hash {
        return Err(TopicError::DictionaryMismatch);
    }
    let k_count = model.num_topics;
    if bow.is_empty() {
        return Ok(TopicDistribution::uniform(k_count));
    }
    let config = &model.config;
    let alpha = config.alpha;
    let words: Vec<usize> = bow
        .entries
        .iter()
        .flat_map(|&(id, c)| std::iter::repeat_n(id as usize, c as usize))
        .collect();
    if words.iter().any(|&w| w >= model.vocab_size) {
        return Err(TopicError::DictionaryMismatch);
    }
    let mut rng = SamplerRng::for_document(seed, &bow.doc_id);
    let mut counts = vec![0u32; k_count];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let k = rng.below(k_count);
            counts[k] += 1;
            k
        })
        .collect();
    let denom = words.len() as f64 + k_count as f64 * alpha;
    let mut theta_sum = vec![0.0; k_count];
    let mut weights = vec![0.0; k_count];
    for sweep in 1..=config.infer_iters {
        for (i, &w) in words.iter().enumerate() {
            counts[z[i]] -= 1;
            for (k, slot) in weights.iter_mut().enumerate() {
                *slot = (counts[k] as f64 + alpha) * model.phi[k * model.vocab_size + w];
            }
            z[i] = sample_index(&weights, &mut rng);
            counts[z[i]] += 1;
        }
        if config.keeps(sweep, config.infer_burn_in, config.infer_iters) {
            for (k, t) in theta_sum.iter_mut().enumerate() {
                *t += (counts[k] as f64 + alpha) / denom;
            }
        }
    }
    normalize(&mut theta_sum);
    Ok(TopicDistribution { theta: theta_sum })
}

/// The `n` most probable words of `topic`, ties broken by ascending term id.
pub fn top_words(
    model: &LdaModel,
    dict: &Dictionary,
    topic: usize,
    n: usize,
) -> Result<Vec<(String, f64)>, TopicError> {
    if topic >= model.num_topics {
        return Err(TopicError::TopicOutOfRange {
            topic,
            num_topics: model.num_topics,
        });
    }
    if dict.hash() != model.dictionary_hash {
        return Err(TopicError::DictionaryMismatch);
    }
    let row = model.phi_row(topic);
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    Ok(ids
        .into_iter()
        .take(n)
        .map(|w| (dict.token(w as u32).unwrap_or_default().to_string(), row[w]))
        .collect())
}

/// `exp(-Σ log p(w|d) / N)` with θ_d inferred under the model's seed.
pub fn perplexity(model: &LdaModel, bows: &[BowVector]) -> Result<f64, TopicError> {
    let mut log_lik = 0.0;
    let mut total = 0u64;
    for bow in bows {
        let theta = infer(model, bow, model.config.seed)?;
        for &(w, c) in &bow.entries {
            let p: f64 = (0..model.num_topics)
                .map(|k| theta.theta[k] * model.phi[k * model.vocab_size + w as usize])
                .sum();
            log_lik += c as f64 * p.ln();
            total += c as u64;
        }
    }
    if total == 0 {
        return Err(TopicError::ZeroTokens);
    }
    Ok((-log_lik / total as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::to_bow;
    use crate::textprep::CleanDocument;

    fn corpus(docs: &[Vec<&str>]) -> (Dictionary, Vec<BowVector>) {
        let docs: Vec<CleanDocument> = docs
            .iter()
            .enumerate()
            .map(|(i, t)| CleanDocument::from_tokens(format!("d{i:03}"), t.iter().map(|s| s.to_string()).collect()))
            .collect();
        let dict = Dictionary::build(&docs);
        let bows = docs.iter().map(|d| to_bow(d, &dict).0).collect();
        (dict, bows)
    }

    fn quick(k: usize) -> LdaConfig {
        LdaConfig {
            train_iters: 60,
            burn_in: 20,
            infer_iters: 40,
            infer_burn_in: 10,
            ..LdaConfig::new(k)
        }
    }

    #[test]
    fn single_word_point_mass() {
        let (dict, bows) = corpus(&[vec!["x"; 5]]);
        let model = train(&bows, &dict, &LdaConfig::new(1)).unwrap();
        assert_eq!(model.phi_row(0), &[1.0]);
        assert_eq!(model.training_doc_topics[0].1.theta, vec![1.0]);
    }

    #[test]
    fn training_errors() {
        let (dict, _) = corpus(&[vec!["a"]]);
        assert_eq!(train(&[], &dict, &quick(2)), Err(TopicError::EmptyCorpus));
        let empty = BowVector {
            doc_id: "e".into(),
            entries: vec![],
            dictionary_hash: dict.hash(),
        };
        assert_eq!(train(&[empty], &dict, &quick(2)), Err(TopicError::NoObservableTokens));
        let (_, bows) = corpus(&[vec!["a"]]);
        let mut bad = quick(2);
        bad.burn_in = bad.train_iters;
        assert!(matches!(train(&bows, &dict, &bad), Err(TopicError::InvalidConfig(_))));
    }

    #[test]
    fn more_topics_than_terms_is_allowed() {
        let (dict, bows) = corpus(&[vec!["a", "b", "a"], vec!["b"]]);
        let model = train(&bows, &dict, &quick(5)).unwrap();
        model.check_invariants().unwrap();
        assert_eq!(model.num_topics(), 5);
    }

    #[test]
    fn infer_empty_is_uniform_and_checks_dictionary() {
        let (dict, bows) = corpus(&[vec!["a", "b"], vec!["b", "c"]]);
        let model = train(&bows, &dict, &LdaConfig { num_topics: 10, ..quick(10) }).unwrap();
        let empty = BowVector {
            doc_id: "q".into(),
            entries: vec![],
            dictionary_hash: dict.hash(),
        };
        assert_eq!(infer(&model, &empty, 1).unwrap().theta, vec![0.1; 10]);
        let (other, _) = corpus(&[vec!["zz"]]);
        let foreign = BowVector {
            dictionary_hash: other.hash(),
            ..empty
        };
        assert_eq!(infer(&model, &foreign, 1), Err(TopicError::DictionaryMismatch));
    }

    #[test]
    fn top_words_rules() {
        let (dict, bows) = corpus(&[vec!["solo"; 3]]);
        let model = train(&bows, &dict, &quick(1)).unwrap();
        assert_eq!(top_words(&model, &dict, 0, 5).unwrap(), vec![("solo".to_string(), 1.0)]);
        assert!(top_words(&model, &dict, 0, 0).unwrap().is_empty());
        assert!(matches!(top_words(&model, &dict, 1, 1), Err(TopicError::TopicOutOfRange { .. })));
    }

    #[test]
    fn top_words_tie_break_by_id() {
        let (dict, _) = corpus(&[vec!["c", "a", "b"]]);
        let model = LdaModel::uniform(&dict, LdaConfig::new(1)).unwrap();
        let words: Vec<String> = top_words(&model, &dict, 0, 2).unwrap().into_iter().map(|w| w.0).collect();
        assert_eq!(words, vec!["c", "a"]);
    }

    #[test]
    fn perplexity_edge_cases() {
        let (dict, bows) = corpus(&[vec!["a", "b", "c"], vec!["c", "d"]]);
        let uniform = LdaModel::uniform(&dict, quick(3)).unwrap();
        assert!((perplexity(&uniform, &bows).unwrap() - 4.0).abs() < 1e-6);

        let (dict1, bows1) = corpus(&[vec!["only", "only"]]);
        let m = train(&bows1, &dict1, &quick(2)).unwrap();
        assert!((perplexity(&m, &bows1).unwrap() - 1.0).abs() < 1e-12);

        let empty = BowVector {
            doc_id: "e".into(),
            entries: vec![],
            dictionary_hash: dict.hash(),
        };
        assert_eq!(perplexity(&uniform, &[empty]), Err(TopicError::ZeroTokens));
    }

    #[test]
    fn sweep_schedule_keeps_last() {
        let c = LdaConfig {
            train_iters: 25,
            burn_in: 3,
            thin: 10,
            ..LdaConfig::new(2)
        };
        let kept: Vec<usize> = (1..=25).filter(|&s| c.keeps(s, c.burn_in, c.train_iters)).collect();
        assert_eq!(kept, vec![5, 15, 25]);
    }
}
