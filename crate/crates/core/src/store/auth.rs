//! Salted Argon2id credential hashes and random session tokens.

use argon2::password_hash::rand_core::{OsRng, RngCore};
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use sha2::{Digest, Sha256};

use super::StoreError;

pub const MIN_PASSWORD_LEN: usize = 8;
pub const MAX_PASSWORD_LEN: usize = 1024;

/// PHC-format Argon2id hash with a fresh random salt.
pub fn hash_password(plaintext: &str) -> Result<String, StoreError> {
    let len = plaintext.chars().count();
    if !(MIN_PASSWORD_LEN..=MAX_PASSWORD_LEN).contains(&len) {
        return Err(StoreError::PasswordPolicy(format!(
            "password must be {MIN_PASSWORD_LEN}..{MAX_PASSWORD_LEN} characters"
        )));
    }
    let salt = SaltString::generate(&mut OsRng);
    Argon2::default()
        .hash_password(plaintext.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| StoreError::Io(e.to_string()))
}

pub fn verify_password(plaintext: &str, credential_hash: &str) -> bool {
    PasswordHash::new(credential_hash)
        .map(|parsed| Argon2::default().verify_password(plaintext.as_bytes(), &parsed).is_ok())
        .unwrap_or(false)
}

/// 256 random bits, URL-safe base64 without padding.
pub(crate) fn new_token() -> String {
    let mut bytes = [0u8; 32];
    OsRng.fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Sessions are stored under the token's digest, never the token itself.
pub(crate) fn token_key(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}
