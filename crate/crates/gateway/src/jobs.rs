//! Store-backed job queue. A job moves queued → running → done | failed and
//! nothing else; a running job whose lease lapsed (its worker died) may be
//! claimed again, which re-runs it from scratch.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use topicguard_core::matching::{CompareParams, ComparisonReport};
use topicguard_core::store::{tx_get, tx_put, Entity, StoreError, StoredModelRecord, Tx};
use topicguard_core::topics::LdaConfig;

use crate::service::Service;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!((self, next), (Queued, Running) | (Running, Done) | (Running, Failed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JobTask {
    Compare {
        file_id: String,
        dataset_ids: Vec<String>,
        params: CompareParams,
    },
    Train {
        dataset_id: String,
        config: LdaConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub user_id: String,
    #[serde(flatten)]
    pub task: JobTask,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ComparisonReport>,
    /// The model a finished training job produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<StoredModelRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub submitted_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub lease_until: Option<DateTime<Utc>>,
    pub attempts: u32,
}

impl Entity for Job {
    const FAMILY: &'static str = "jobs";
    fn id(&self) -> String {
        self.job_id.clone()
    }
}

impl Job {
    pub fn new(job_id: String, user_id: String, task: JobTask) -> Self {
        Self {
            job_id,
            user_id,
            task,
            state: JobState::Queued,
            report: None,
            model: None,
            error: None,
            submitted_at: Utc::now(),
            started_at: None,
            finished_at: None,
            lease_until: None,
            attempts: 0,
        }
    }

    pub fn claimable(&self, now: DateTime<Utc>) -> bool {
        match self.state {
            JobState::Queued => true,
            JobState::Running => self.lease_until.is_some_and(|t| t <= now),
            _ => false,
        }
    }

    fn check_shape(&self) -> Result<(), StoreError> {
        let ok = match self.state {
            JobState::Queued | JobState::Running => self.report.is_none() && self.error.is_none(),
            JobState::Done => self.error.is_none() && (self.report.is_some() != matches!(self.task, JobTask::Train { .. })),
            JobState::Failed => self.error.is_some() && self.report.is_none(),
        };
        if ok {
            Ok(())
        } else {
            Err(StoreError::Rejected(format!("job {} has inconsistent {:?} record", self.job_id, self.state)))
        }
    }
}

/// Pending work, one entry per queued or running job.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct QueueEntry {
    job_id: String,
}

impl Entity for QueueEntry {
    const FAMILY: &'static str = "job_queue";
    fn id(&self) -> String {
        self.job_id.clone()
    }
}

/// The single write path for jobs: enforces the state machine and keeps the
/// queue in step, all inside the caller's transaction.
pub(crate) fn write_job(tx: &mut dyn Tx, job: &Job) -> Result<(), StoreError> {
    job.check_shape()?;
    match tx_get::<Job>(tx, &job.job_id)? {
        None if job.state != JobState::Queued => {
            return Err(StoreError::Rejected(format!("job {} must start queued", job.job_id)));
        }
        Some(old) if old.state != job.state && !old.state.can_become(job.state) => {
            return Err(StoreError::Rejected(format!(
                "job {}: illegal transition {:?} -> {:?}",
                job.job_id, old.state, job.state
            )));
        }
        Some(old) if old.state == job.state && !matches!(job.state, JobState::Running) => {
            return Err(StoreError::Rejected(format!("job {} is already {:?}", job.job_id, job.state)));
        }
        _ => {}
    }
    tx_put(tx, job, false)?;
    match job.state {
        JobState::Queued | JobState::Running => tx_put(
            tx,
            &QueueEntry {
                job_id: job.job_id.clone(),
            },
            false,
        ),
        JobState::Done | JobState::Failed => tx.delete(QueueEntry::FAMILY, &job.job_id).map(|_| ()),
    }
}

/// Ids of queued or running jobs, oldest first.
pub(crate) fn pending(service: &Service) -> Result<Vec<String>, StoreError> {
    let mut ids: Vec<String> = service.store().list::<QueueEntry>()?.into_iter().map(|e| e.job_id).collect();
    ids.sort();
    Ok(ids)
}

/// Wakes idle workers when work is submitted.
#[derive(Default)]
pub struct Wakeup {
    generation: Mutex<u64>,
    cond: Condvar,
}

impl Wakeup {
    pub fn notify(&self) {
        *self.generation.lock() += 1;
        self.cond.notify_all();
    }

    fn wait(&self, seen: u64, timeout: Duration) -> u64 {
        let mut g = self.generation.lock();
        if *g == seen {
            self.cond.wait_for(&mut g, timeout);
        }
        *g
    }

    fn current(&self) -> u64 {
        *self.generation.lock()
    }
}

/// Background worker threads draining the queue.
pub struct Workers {
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
    service: Service,
}

impl Workers {
    pub fn start(service: Service, count: usize, poll: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let handles = (0..count.max(1))
            .map(|i| {
                let service = service.clone();
                let stop = stop.clone();
                std::thread::Builder::new()
                    .name(format!("job-worker-{i}"))
                    .spawn(move || {
                        let wake = service.wakeup();
                        let mut seen = wake.current();
                        while !stop.load(Ordering::Relaxed) {
                            match service.run_next_job() {
                                Ok(Some(_)) => continue,
                                Ok(None) => {}
                                Err(e) => tracing::error!("job worker: {e}"),
                            }
                            seen = wake.wait(seen, poll);
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        Self { stop, handles, service }
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        self.service.wakeup().notify();
        for h in self.handles {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_forward_transitions() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_become(b))
            .collect();
        assert_eq!(allowed, vec![(Queued, Running), (Running, Done), (Running, Failed)]);
    }

    #[test]
    fn write_job_enforces_state_machine() {
        let store = topicguard_core::Store::in_memory();
        let write = |job: &Job| store.transact(|tx| write_job(tx, job));
        let task = JobTask::Train {
            dataset_id: "ds-000001".into(),
            config: LdaConfig::new(2),
        };
        let mut job = Job::new("job-000001".into(), "u".into(), task);

        job.state = JobState::Running;
        assert!(write(&job).is_err(), "must start queued");
        job.state = JobState::Queued;
        write(&job).unwrap();
        assert!(write(&job).is_err(), "queued -> queued");

        job.state = JobState::Done;
        assert!(write(&job).is_err(), "queued -> done skips running");
        job.state = JobState::Running;
        write(&job).unwrap();
        write(&job).unwrap();

        job.state = JobState::Failed;
        assert!(write(&job).is_err(), "failed needs an error");
        job.error = Some("boom".into());
        write(&job).unwrap();
        let rows: Vec<QueueEntry> = store.list().unwrap();
        assert!(rows.is_empty());

        job.state = JobState::Queued;
        job.error = None;
        assert!(write(&job).is_err(), "no way back from failed");
        assert_eq!(store.get::<Job>("job-000001").unwrap().state, JobState::Failed);
    }
}
