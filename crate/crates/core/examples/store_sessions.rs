//! Users, sessions and model versions in the SQLite-backed store.

use std::time::Duration;

use topicguard_core::store::{Store, StoreError};

fn main() -> Result<(), StoreError> {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path())?;

    let user = store.register_user("ana", "correct horse battery")?;
    println!("registered {} as {}", user.username, user.user_id);
    println!("stored hash: {}...", &user.credential_hash[..30]);
    println!("duplicate: {:?}", store.register_user("ana", "another password").unwrap_err());
    println!("bad password: {:?}", store.authenticate("ana", "wrong wrong").unwrap_err());

    let session = store.create_session(&user.user_id, Duration::from_secs(3600))?;
    println!("session for {} until {}", store.resolve_session(&session.token)?, session.expires_at);
    store.revoke_session(&session.token)?;
    println!("after logout: {:?}", store.resolve_session(&session.token).unwrap_err());

    for blob in [b"model one".as_slice(), b"model two"] {
        let record = store.put_model("ds-000001", blob)?;
        println!("stored {} sha256 {}", record.model_id, &record.sha256[..12]);
    }
    drop(store);

    // Everything above survives a reopen.
    let store = Store::open(dir.path())?;
    let history = store.model_history("ds-000001")?;
    println!("reopened: {} model versions, user found: {}", history.len(), store.find_user("ana")?.is_some());
    Ok(())
}
