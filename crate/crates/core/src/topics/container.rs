//! `.ldam` model container.
//!
//! ```text
//! "LDAM" | u32 format_version | [32] SHA-256(payload) | u64 payload_len | payload
//! payload = config | dictionary | binding | phi | theta   (each: u64 len + bytes)
//! ```
//!
//! All integers and floats are little-endian. `phi` is `u32 K, u32 V` followed
//! by K×V f64 in row-major order; `theta` is `u32 D, u32 K` followed by D
//! records of `(u32 id_len, id, K × f64)`.

use sha2::{Digest, Sha256};

use super::{LdaConfig, LdaModel, TopicDistribution, TopicError};
use crate::corpus::{Dictionary, DictionaryHash};

pub const MAGIC: &[u8; 4] = b"LDAM";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 32 + 8;

fn put_block(out: &mut Vec<u8>, block: &[u8]) {
    out.extend_from_slice(&(block.len() as u64).to_le_bytes());
    out.extend_from_slice(block);
}

fn config_block(c: &LdaConfig) -> Vec<u8> {
    let mut b = Vec::with_capacity(64);
    b.extend_from_slice(&(c.num_topics as u32).to_le_bytes());
    b.extend_from_slice(&c.alpha.to_le_bytes());
    b.extend_from_slice(&c.beta.to_le_bytes());
    for n in [c.train_iters, c.infer_iters, c.burn_in, c.infer_burn_in, c.thin] {
        b.extend_from_slice(&(n as u32).to_le_bytes());
    }
    b.extend_from_slice(&c.seed.to_le_bytes());
    b
}

/// Serializes a model together with the dictionary it was trained against.
pub fn save_model(model: &LdaModel, dict: &Dictionary) -> Result<Vec<u8>, TopicError> {
    if model.dictionary_hash != dict.hash() || model.vocab_size() != dict.len() {
        return Err(TopicError::DictionaryMismatch);
    }
    let k = model.num_topics();
    let mut payload = Vec::new();
    put_block(&mut payload, &config_block(&model.config));
    put_block(&mut payload, &dict.to_block());
    put_block(&mut payload, &model.dictionary_hash.0);

    let mut phi = Vec::with_capacity(8 + model.phi().len() * 8);
    phi.extend_from_slice(&(k as u32).to_le_bytes());
    phi.extend_from_slice(&(model.vocab_size() as u32).to_le_bytes());
    for p in model.phi() {
        phi.extend_from_slice(&p.to_le_bytes());
    }
    put_block(&mut payload, &phi);

    let mut theta = Vec::new();
    theta.extend_from_slice(&(model.training_doc_topics.len() as u32).to_le_bytes());
    theta.extend_from_slice(&(k as u32).to_le_bytes());
    for (id, t) in &model.training_doc_topics {
        theta.extend_from_slice(&(id.len() as u32).to_le_bytes());
        theta.extend_from_slice(id.as_bytes());
        for p in &t.theta {
            theta.extend_from_slice(&p.to_le_bytes());
        }
    }
    put_block(&mut payload, &theta);

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&model.format_version.to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TopicError> {
        if self.buf.len() < n {
            return Err(TopicError::CorruptContainer);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u32(&mut self) -> Result<u32, TopicError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, TopicError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, TopicError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize32(&mut self) -> Result<usize, TopicError> {
        Ok(self.u32()? as usize)
    }
    fn string(&mut self) -> Result<String, TopicError> {
        let n = self.usize32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| TopicError::CorruptContainer)
    }
    fn block(&mut self) -> Result<Reader<'a>, TopicError> {
        let n = usize::try_from(self.u64()?).map_err(|_| TopicError::CorruptContainer)?;
        Ok(Reader { buf: self.take(n)? })
    }
    fn finish(self) -> Result<(), TopicError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(TopicError::CorruptContainer)
        }
    }
}

pub fn load_model(bytes: &[u8]) -> Result<(LdaModel, Dictionary), TopicError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(TopicError::CorruptContainer);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(TopicError::UnsupportedVersion(version));
    }
    let checksum = r.take(32)?;
    let len = usize::try_from(r.u64()?).map_err(|_| TopicError::CorruptContainer)?;
    let payload = r.take(len)?;
    r.finish()?;
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(TopicError::ChecksumMismatch);
    }

    let mut p = Reader { buf: payload };
    let mut c = p.block()?;
    let config = LdaConfig {
        num_topics: c.usize32()?,
        alpha: c.f64()?,
        beta: c.f64()?,
        train_iters: c.usize32()?,
        infer_iters: c.usize32()?,
        burn_in: c.usize32()?,
        infer_burn_in: c.usize32()?,
        thin: c.usize32()?,
        seed: c.u64()?,
    };
    c.finish()?;
    config
        .validate()
        .map_err(|e| TopicError::InvariantViolation(e.to_string()))?;

    let mut d = p.block()?;
    let v = d.usize32()?;
    let tokens = (0..v).map(|_| d.string()).collect::<Result<Vec<_>, _>>()?;
    let doc_freq = (0..v).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let num_docs = d.u64()?;
    d.finish()?;
    let dict = Dictionary::from_parts(tokens, doc_freq, num_docs);

    let mut b = p.block()?;
    let hash = DictionaryHash(b.take(32)?.try_into().unwrap());
    b.finish()?;
    if hash != dict.hash() {
        return Err(TopicError::InvariantViolation("dictionary hash does not match dictionary block".into()));
    }

    let mut ph = p.block()?;
    let (k, pv) = (ph.usize32()?, ph.usize32()?);
    if k != config.num_topics || pv != v {
        return Err(TopicError::InvariantViolation("phi dimensions".into()));
    }
    let phi = (0..k * v).map(|_| ph.f64()).collect::<Result<Vec<_>, _>>()?;
    ph.finish()?;

    let mut th = p.block()?;
    let (docs, tk) = (th.usize32()?, th.usize32()?);
    if tk != k {
        return Err(TopicError::InvariantViolation("theta dimensions".into()));
    }
    let mut training_doc_topics = Vec::with_capacity(docs);
    for _ in 0..docs {
        let id = th.string()?;
        let theta = (0..k).map(|_| th.f64()).collect::<Result<Vec<_>, _>>()?;
        training_doc_topics.push((id, TopicDistribution { theta }));
    }
    th.finish()?;
    p.finish()?;

    let mut model = LdaModel::from_parts(config, hash, v, phi, training_doc_topics);
    model.format_version = version;
    model.check_invariants()?;
    Ok((model, dict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::to_bow;
    use crate::textprep::CleanDocument;
    use crate::topics::{infer, train};

    fn trained() -> (LdaModel, Dictionary) {
        let docs: Vec<CleanDocument> = [["alpha", "beta", "alpha"], ["gamma", "delta", "gamma"]]
            .iter()
            .enumerate()
            .map(|(i, t)| CleanDocument::from_tokens(format!("d{i}"), t.iter().map(|s| s.to_string()).collect()))
            .collect();
        let dict = Dictionary::build(&docs);
        let bows: Vec<_> = docs.iter().map(|d| to_bow(d, &dict).0).collect();
        let config = LdaConfig {
            train_iters: 50,
            burn_in: 10,
            ..LdaConfig::new(2).with_seed(9)
        };
        (train(&bows, &dict, &config).unwrap(), dict)
    }

    #[test]
    fn round_trip_preserves_inference() {
        let (model, dict) = trained();
        let bytes = save_model(&model, &dict).unwrap();
        assert_eq!(&bytes[..4], MAGIC);
        let (back, back_dict) = load_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_dict, dict);
        let q = CleanDocument::from_tokens("q", vec!["alpha".into(), "gamma".into()]);
        let bow = to_bow(&q, &dict).0;
        assert_eq!(infer(&model, &bow, 3).unwrap(), infer(&back, &bow, 3).unwrap());
        assert_eq!(save_model(&back, &back_dict).unwrap(), bytes);
    }

    #[test]
    fn truncated_is_corrupt() {
        let (model, dict) = trained();
        let bytes = save_model(&model, &dict).unwrap();
        for cut in [0, 3, 10, HEADER_LEN, bytes.len() - 1] {
            assert_eq!(load_model(&bytes[..cut]).unwrap_err(), TopicError::CorruptContainer, "cut {cut}");
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let (model, dict) = trained();
        let mut bytes = save_model(&model, &dict).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert_eq!(load_model(&bytes).unwrap_err(), TopicError::UnsupportedVersion(7));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let (model, dict) = trained();
        let mut bytes = save_model(&model, &dict).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert_eq!(load_model(&bytes).unwrap_err(), TopicError::ChecksumMismatch);
    }

    #[test]
    fn wrong_dictionary_rejected_on_save() {
        let (model, _) = trained();
        let other = Dictionary::build(&[CleanDocument::from_tokens("x", vec!["zz".into()])]);
        assert_eq!(save_model(&model, &other), Err(TopicError::DictionaryMismatch));
    }
}
