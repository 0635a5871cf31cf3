//! The topic gate at work: one comparison against an on-topic and an
//! off-topic dataset, with the gate on and off.
//!
//!     cargo run -p topicguard-gateway --example pipeline_gate

use std::path::PathBuf;

use topicguard_core::ingest::FetchPolicy;
use topicguard_core::matching::CompareParams;
use topicguard_gateway::service::TrainRequest;
use topicguard_gateway::{Service, Settings};

fn main() -> anyhow::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let dir = tempfile::tempdir()?;
    let mut settings = Settings::new(dir.path());
    settings.fetch = FetchPolicy::offline(fixtures.join("cache"));
    let service = Service::open(settings).map_err(|e| anyhow::anyhow!(e.message))?;
    let run = || -> Result<(), topicguard_gateway::ServiceError> {
        let user = service.local_user()?;
        let mut ids = Vec::new();
        for name in ["supply-chain", "gardening"] {
            let csv = std::fs::read(fixtures.join(format!("{name}.csv"))).unwrap();
            let outcome = service.create_dataset(&user, name, &csv, false)?;
            let request = TrainRequest {
                seed: Some(42),
                ..TrainRequest::default()
            };
            service.train_now(&user, &outcome.dataset.dataset_id, &request)?;
            ids.push(outcome.dataset.dataset_id);
        }
        let notes = std::fs::read(fixtures.join("release-notes.txt")).unwrap();
        let file = service.upload_file(&user, "release-notes.txt", &notes)?;

        for gate_enabled in [true, false] {
            let params = CompareParams {
                gate_enabled,
                ..CompareParams::default()
            };
            let report = service.compare_now(&user, &file.file_id, &ids, &params)?.report.expect("finished");
            println!("gate {}:", if gate_enabled { "on" } else { "off" });
            for d in &report.datasets {
                let relevance = d.relevance.map_or("-".to_string(), |r| format!("{r:.3}"));
                println!("  {:<13} relevance {relevance:<6} {}", d.name, if d.gated { "skipped" } else { "searched" });
            }
            for r in report.results.iter().take(4) {
                println!("  {:>2}. {:.3} {}/{}", r.rank, r.similarity, r.dataset_name, r.doc_id);
            }
        }
        Ok(())
    };
    run().map_err(|e| anyhow::anyhow!(e.message))
}
