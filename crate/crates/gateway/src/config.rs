//! Runtime settings. Each key resolves from a command-line flag, then an
//! environment variable, then the config file, then a built-in default.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use topicguard_core::ingest::FetchPolicy;

pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";

/// The config file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub listen_addr: Option<String>,
    pub offline_mode: Option<bool>,
    pub cache_dir: Option<PathBuf>,
    pub fetch_timeout_secs: Option<u64>,
    pub fetch_max_bytes: Option<u64>,
    pub fetch_retries: Option<u32>,
    pub worker_count: Option<usize>,
    pub session_ttl_secs: Option<u64>,
    pub job_lease_secs: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("parsing config {}: {e}", path.display()))
    }

    /// `self` wins wherever it has a value.
    pub fn or(self, lower: FileConfig) -> FileConfig {
        FileConfig {
            data_dir: self.data_dir.or(lower.data_dir),
            listen_addr: self.listen_addr.or(lower.listen_addr),
            offline_mode: self.offline_mode.or(lower.offline_mode),
            cache_dir: self.cache_dir.or(lower.cache_dir),
            fetch_timeout_secs: self.fetch_timeout_secs.or(lower.fetch_timeout_secs),
            fetch_max_bytes: self.fetch_max_bytes.or(lower.fetch_max_bytes),
            fetch_retries: self.fetch_retries.or(lower.fetch_retries),
            worker_count: self.worker_count.or(lower.worker_count),
            session_ttl_secs: self.session_ttl_secs.or(lower.session_ttl_secs),
            job_lease_secs: self.job_lease_secs.or(lower.job_lease_secs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub listen_addr: String,
    pub fetch: FetchPolicy,
    pub worker_count: usize,
    pub session_ttl: Duration,
    /// How long a running job may go without finishing before another
    /// worker may take it over.
    pub job_lease: Duration,
}

impl Settings {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self::resolve(FileConfig {
            data_dir: Some(data_dir.into()),
            ..FileConfig::default()
        })
        .expect("data_dir given")
    }

    /// Applies defaults to an already-merged configuration.
    pub fn resolve(c: FileConfig) -> anyhow::Result<Self> {
        let data_dir = c
            .data_dir
            .ok_or_else(|| anyhow::anyhow!("no data directory configured (--data-dir or TOPICGUARD_DATA_DIR)"))?;
        let defaults = FetchPolicy::default();
        let fetch = FetchPolicy {
            timeout: c.fetch_timeout_secs.map_or(defaults.timeout, Duration::from_secs),
            max_bytes: c.fetch_max_bytes.unwrap_or(defaults.max_bytes),
            retries: c.fetch_retries.unwrap_or(defaults.retries),
            offline_mode: c.offline_mode.unwrap_or(false),
            cache_dir: Some(c.cache_dir.unwrap_or_else(|| data_dir.join("cache"))),
            ..defaults
        };
        if fetch.timeout.is_zero() || fetch.max_bytes == 0 {
            anyhow::bail!("fetch timeout and size cap must be > 0");
        }
        Ok(Self {
            listen_addr: c.listen_addr.unwrap_or_else(|| DEFAULT_LISTEN_ADDR.to_string()),
            fetch,
            worker_count: c.worker_count.unwrap_or(1).max(1),
            session_ttl: Duration::from_secs(c.session_ttl_secs.unwrap_or(24 * 3600)),
            job_lease: Duration::from_secs(c.job_lease_secs.unwrap_or(600)),
            data_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let flags = FileConfig {
            worker_count: Some(3),
            ..Default::default()
        };
        let env = FileConfig {
            worker_count: Some(2),
            data_dir: Some("/env".into()),
            ..Default::default()
        };
        let file: FileConfig = toml::from_str(
            r#"
            data_dir = "/file"
            worker_count = 1
            offline_mode = true
            listen_addr = "0.0.0.0:9000"
            "#,
        )
        .unwrap();
        let s = Settings::resolve(flags.or(env).or(file)).unwrap();
        assert_eq!(s.worker_count, 3);
        assert_eq!(s.data_dir, PathBuf::from("/env"));
        assert!(s.fetch.offline_mode);
        assert_eq!(s.listen_addr, "0.0.0.0:9000");
        assert_eq!(s.fetch.cache_dir, Some(PathBuf::from("/env/cache")));
    }

    #[test]
    fn data_dir_required_and_unknown_keys_rejected() {
        assert!(Settings::resolve(FileConfig::default()).is_err());
        assert!(toml::from_str::<FileConfig>("datadir = 1").is_err());
    }
}
