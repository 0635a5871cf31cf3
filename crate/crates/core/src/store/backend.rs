//! Raw transactional key-value backends.

use std::collections::BTreeMap;
use std::path::Path;

use parking_lot::Mutex;
use rusqlite::{params, Connection, OptionalExtension};

use super::StoreError;

/// Operations available inside one transaction.
pub trait Tx {
    fn get(&mut self, family: &str, id: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn put(&mut self, family: &str, id: &str, body: &[u8]) -> Result<(), StoreError>;
    fn delete(&mut self, family: &str, id: &str) -> Result<bool, StoreError>;
    /// Entries of `family` whose id starts with `prefix`, ascending by id.
    fn list(&mut self, family: &str, prefix: &str) -> Result<Vec<(String, Vec<u8>)>, StoreError>;
}

/// A storage engine. Each `transact` call is atomic: either every write made
/// through the [`Tx`] is applied or none is.
pub trait Backend: Send + Sync {
    fn transact(&self, f: &mut dyn FnMut(&mut dyn Tx) -> Result<(), StoreError>) -> Result<(), StoreError>;
}

pub const DB_FILE: &str = "topicguard.db";
const SCHEMA_VERSION: i64 = 1;

/// Embedded SQLite file in a data directory.
pub struct SqliteBackend {
    conn: Mutex<Connection>,
}

fn io(e: rusqlite::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

impl SqliteBackend {
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(data_dir).map_err(|e| StoreError::Io(e.to_string()))?;
        Self::init(Connection::open(data_dir.join(DB_FILE)).map_err(io)?)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory().map_err(io)?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.busy_timeout(std::time::Duration::from_secs(10)).map_err(io)?;
        conn.execute_batch(
            "PRAGMA journal_mode = WAL;
             PRAGMA synchronous = FULL;
             CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value INTEGER NOT NULL);
             CREATE TABLE IF NOT EXISTS entities (
                 family TEXT NOT NULL,
                 id TEXT NOT NULL,
                 body BLOB NOT NULL,
                 PRIMARY KEY (family, id)
             ) WITHOUT ROWID;",
        )
        .map_err(io)?;
        let version: Option<i64> = conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()
            .map_err(io)?;
        match version {
            None => {
                conn.execute("INSERT INTO meta (key, value) VALUES ('schema_version', ?1)", [SCHEMA_VERSION])
                    .map_err(io)?;
            }
            Some(SCHEMA_VERSION) => {}
            Some(other) => return Err(StoreError::Io(format!("unsupported store schema version {other}"))),
        }
        Ok(Self { conn: Mutex::new(conn) })
    }
}

struct SqliteTx<'a>(&'a rusqlite::Transaction<'a>);

impl Tx for SqliteTx<'_> {
    fn get(&mut self, family: &str, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        self.0
            .query_row(
                "SELECT body FROM entities WHERE family = ?1 AND id = ?2",
                params![family, id],
                |r| r.get(0),
            )
            .optional()
            .map_err(io)
    }

    fn put(&mut self, family: &str, id: &str, body: &[u8]) -> Result<(), StoreError> {
        self.0
            .execute(
                "INSERT INTO entities (family, id, body) VALUES (?1, ?2, ?3)
                 ON CONFLICT (family, id) DO UPDATE SET body = excluded.body",
                params![family, id, body],
            )
            .map(|_| ())
            .map_err(io)
    }

    fn delete(&mut self, family: &str, id: &str) -> Result<bool, StoreError> {
        self.0
            .execute("DELETE FROM entities WHERE family = ?1 AND id = ?2", params![family, id])
            .map(|n| n > 0)
            .map_err(io)
    }

    fn list(&mut self, family: &str, prefix: &str) -> Result<Vec<(String, Vec<u8>)>, StoreError> {
        let mut stmt = self
            .0
            .prepare("SELECT id, body FROM entities WHERE family = ?1 AND substr(id, 1, length(?2)) = ?2 ORDER BY id")
            .map_err(io)?;
        let rows = stmt
            .query_map(params![family, prefix], |r| Ok((r.get(0)?, r.get(1)?)))
            .map_err(io)?;
        rows.collect::<Result<_, _>>().map_err(io)
    }
}

impl Backend for SqliteBackend {
    fn transact(&self, f: &mut dyn FnMut(&mut dyn Tx) -> Result<(), StoreError>) -> Result<(), StoreError> {
        let mut conn = self.conn.lock();
        let tx = conn
            .transaction_with_behavior(rusqlite::TransactionBehavior::Immediate)
            .map_err(io)?;
        f(&mut SqliteTx(&tx))?;
        tx.commit().map_err(io)
    }
}

/// Volatile backend; transactions run on a copy that replaces the map on success.
#[derive(Default)]
pub struct MemoryBackend {
    map: Mutex<BTreeMap<(String, String), Vec<u8>>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

struct MemoryTx<'a>(&'a mut BTreeMap<(String, String), Vec<u8>>);

impl Tx for MemoryTx<'_> {
    fn get(&mut self, family: &str, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self.0.get(&(family.to_string(), id.to_string())).cloned())
    }

    fn put(&mut self, family: &str, id: &str, body: &[u8]) -> Result<(), StoreError> {
        self.0.insert((family.to_string(), id.to_string()), body.to_vec());
        Ok(())
    }

    fn delete(&mut self, family: &str, id: &str) -> Result<bool, StoreError> {
        Ok(self.0.remove(&(family.to_string(), id.to_string())).is_some())
    }

    fn list(&mut self, family: &str, prefix: &str) -> Result<Vec<(String, Vec<u8>)>, StoreError> {
        Ok(self
            .0
            .range((family.to_string(), prefix.to_string())..)
            .take_while(|((f, id), _)| f == family && id.starts_with(prefix))
            .map(|((_, id), body)| (id.clone(), body.clone()))
            .collect())
    }
}

impl Backend for MemoryBackend {
    fn transact(&self, f: &mut dyn FnMut(&mut dyn Tx) -> Result<(), StoreError>) -> Result<(), StoreError> {
        let mut guard = self.map.lock();
        let mut working = guard.clone();
        f(&mut MemoryTx(&mut working))?;
        *guard = working;
        Ok(())
    }
}
