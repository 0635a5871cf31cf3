//! The `topicguard` command line. It acts as the built-in `local` user over
//! the configured data directory and shares every code path with the API.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error, 3 when a
//! comparison found matches above the highlight threshold.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::Serialize;

use topicguard_core::matching::CompareParams;

use crate::config::{FileConfig, Settings};
use crate::jobs::{JobState, Workers};
use crate::service::{Service, ServiceError, TrainRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_HIGHLIGHTS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "topicguard", version, about = "Topic-gated similarity search of CI/CD artifacts against incident corpora")]
pub struct Cli {
    /// TOML config file; flags and environment variables override it.
    #[arg(long, global = true, env = "TOPICGUARD_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "TOPICGUARD_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Fetch cache / fixture directory (default: <data-dir>/cache).
    #[arg(long, global = true, env = "TOPICGUARD_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Read pages only from the cache; never touch the network.
    #[arg(long, global = true, env = "TOPICGUARD_OFFLINE", num_args = 0..=1, default_missing_value = "true",
          value_parser = clap::builder::BoolishValueParser::new())]
    pub offline: Option<bool>,
    /// Per-request fetch timeout in seconds.
    #[arg(long, global = true, env = "TOPICGUARD_FETCH_TIMEOUT")]
    pub fetch_timeout: Option<u64>,
    /// Background job workers (serve only).
    #[arg(long, global = true, env = "TOPICGUARD_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a reference table, fetch its pages and build a dataset.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        name: String,
        /// Make the dataset readable by every user.
        #[arg(long)]
        public: bool,
    },
    /// Train (or retrain) a dataset's topic model.
    Train {
        dataset: String,
        #[arg(long)]
        topics: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Also write the model container to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a file against datasets and print the report.
    Compare {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        datasets: Vec<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Highlight threshold.
        #[arg(long, default_value_t = 0.60)]
        threshold: f64,
        /// Topic relevance a dataset needs to be searched.
        #[arg(long, default_value_t = 0.20)]
        gate: f64,
        #[arg(long)]
        no_gate: bool,
    },
    /// Print the report of a finished comparison job.
    Report { job: String },
    /// Print the top words of each topic.
    Topics {
        dataset: String,
        #[arg(long, default_value_t = 10)]
        words: usize,
    },
    /// Run the HTTP API with background workers.
    Serve {
        #[arg(long, env = "TOPICGUARD_LISTEN_ADDR")]
        addr: Option<String>,
    },
}

impl Cli {
    pub fn settings(&self) -> anyhow::Result<Settings> {
        let flags = FileConfig {
            data_dir: self.data_dir.clone(),
            offline_mode: self.offline,
            cache_dir: self.cache_dir.clone(),
            fetch_timeout_secs: self.fetch_timeout,
            worker_count: self.workers,
            listen_addr: match &self.command {
                Command::Serve { addr } => addr.clone(),
                _ => None,
            },
            ..FileConfig::default()
        };
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Settings::resolve(flags.or(file))
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

/// A closed pipe (`topicguard ... | head`) is not an error.
fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))
}

fn fail(e: ServiceError) -> anyhow::Error {
    anyhow::anyhow!(e.message)
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let settings = cli.settings()?;
    let service = Service::open(settings).map_err(fail)?;
    let user = service.local_user().map_err(fail)?;
    match cli.command {
        Command::Ingest { csv, name, public } => {
            let outcome = service.create_dataset(&user, &name, &read(&csv)?, public).map_err(fail)?;
            print_json(&outcome)?;
        }
        Command::Train {
            dataset,
            topics,
            seed,
            iterations,
            out,
        } => {
            let record = service.find_dataset(&user, &dataset).map_err(fail)?;
            let request = TrainRequest {
                num_topics: topics,
                seed,
                iterations,
            };
            let job = service.train_now(&user, &record.dataset_id, &request).map_err(fail)?;
            let Some(model) = job.model.filter(|_| job.state == JobState::Done) else {
                anyhow::bail!("training failed: {}", job.error.unwrap_or_default());
            };
            if let Some(out) = out {
                let bytes = service.store().model_bytes(&model.model_id).map_err(|e| fail(e.into()))?;
                std::fs::write(&out, bytes).map_err(|e| anyhow::anyhow!("writing {}: {e}", out.display()))?;
            }
            print_json(&serde_json::json!({
                "job_id": job.job_id,
                "dataset_id": model.dataset_id,
                "model_id": model.model_id,
                "version": model.version,
                "sha256": model.sha256,
            }))?;
        }
        Command::Compare {
            file,
            datasets,
            k,
            threshold,
            gate,
            no_gate,
        } => {
            let filename = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "upload.txt".to_string());
            let uploaded = service.upload_file(&user, &filename, &read(&file)?).map_err(fail)?;
            let ids = datasets
                .iter()
                .map(|d| service.find_dataset(&user, d).map(|r| r.dataset_id))
                .collect::<Result<Vec<_>, _>>()
                .map_err(fail)?;
            let params = CompareParams {
                k,
                highlight_threshold: threshold,
                relevance_gate_threshold: gate,
                gate_enabled: !no_gate,
            };
            let job = service.compare_now(&user, &uploaded.file_id, &ids, &params).map_err(fail)?;
            let Some(report) = job.report else {
                anyhow::bail!("{}", job.error.unwrap_or_else(|| "comparison failed".into()));
            };
            print_json(&report)?;
            if report.has_highlights() {
                return Ok(EXIT_HIGHLIGHTS);
            }
        }
        Command::Report { job } => {
            print_json(&service.report(&user, &job).map_err(fail)?)?;
        }
        Command::Topics { dataset, words } => {
            let record = service.find_dataset(&user, &dataset).map_err(fail)?;
            let topics = service.topics(&user, &record.dataset_id, words).map_err(fail)?;
            print_json(&serde_json::json!({ "dataset_id": record.dataset_id, "topics": topics }))?;
        }
        Command::Serve { .. } => serve(service)?,
    }
    Ok(EXIT_OK)
}

fn serve(service: Service) -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    let workers = Workers::start(service.clone(), service.settings().worker_count, Duration::from_millis(250));
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&service.settings().listen_addr).await?;
        let addr = listener.local_addr()?;
        tracing::info!("listening on http://{addr}");
        eprintln!("listening on http://{addr}");
        crate::api::serve(service.clone(), listener, shutdown_signal()).await
    });
    workers.shutdown();
    Ok(result?)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
