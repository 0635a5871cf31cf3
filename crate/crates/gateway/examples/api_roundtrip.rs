//! Starts the HTTP API on a free port and walks the whole flow over HTTP:
//! register, log in, upload a reference table, train, compare, fetch the
//! report.
//!
//!     cargo run -p topicguard-gateway --example api_roundtrip

use std::path::PathBuf;
use std::time::Duration;

use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::Client;
use serde_json::{json, Value};

use topicguard_core::ingest::FetchPolicy;
use topicguard_gateway::jobs::Workers;
use topicguard_gateway::{Service, Settings};

fn main() -> anyhow::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let dir = tempfile::tempdir()?;
    let mut settings = Settings::new(dir.path());
    settings.fetch = FetchPolicy::offline(fixtures.join("cache"));
    let service = Service::open(settings).map_err(|e| anyhow::anyhow!(e.message))?;
    let workers = Workers::start(service.clone(), 1, Duration::from_millis(50));

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = runtime.spawn(topicguard_gateway::api::serve(service, listener, async {
        let _ = stopped.await;
    }));
    println!("serving on {base}");

    let http = Client::new();
    let url = |path: &str| format!("{base}{path}");
    let creds = json!({ "username": "ana", "password": "correct horse battery" });
    http.post(url("/api/register")).json(&creds).send()?.error_for_status()?;
    let login: Value = http.post(url("/api/login")).json(&creds).send()?.json()?;
    let token = login["token"].as_str().unwrap().to_string();

    let form = Form::new()
        .text("name", "supply-chain")
        .part("csv", Part::bytes(std::fs::read(fixtures.join("supply-chain.csv"))?).file_name("supply-chain.csv"));
    let dataset: Value = http.post(url("/api/datasets")).bearer_auth(&token).multipart(form).send()?.json()?;
    println!("dataset {} with {} documents", dataset["dataset_id"], dataset["documents"]);
    let ds = dataset["dataset_id"].as_str().unwrap();

    let wait = |job: &Value| -> anyhow::Result<Value> {
        let path = url(&format!("/api/jobs/{}", job["job_id"].as_str().unwrap()));
        loop {
            let job: Value = http.get(&path).bearer_auth(&token).send()?.json()?;
            if job["state"] == "done" || job["state"] == "failed" {
                return Ok(job);
            }
            std::thread::sleep(Duration::from_millis(50));
        }
    };
    let job: Value = http
        .post(url(&format!("/api/datasets/{ds}/train")))
        .bearer_auth(&token)
        .json(&json!({ "seed": 42 }))
        .send()?
        .json()?;
    println!("train job {} -> {}", job["job_id"], wait(&job)?["state"]);

    let form = Form::new().part("file", Part::bytes(std::fs::read(fixtures.join("release-notes.txt"))?).file_name("release-notes.txt"));
    let file: Value = http.post(url("/api/files")).bearer_auth(&token).multipart(form).send()?.json()?;
    let job: Value = http
        .post(url("/api/compare"))
        .bearer_auth(&token)
        .json(&json!({ "file_id": file["file_id"], "dataset_ids": [ds] }))
        .send()?
        .json()?;
    wait(&job)?;
    let report: Value = http
        .get(url(&format!("/api/jobs/{}/report", job["job_id"].as_str().unwrap())))
        .bearer_auth(&token)
        .send()?
        .json()?;
    for r in report["results"].as_array().unwrap().iter().take(3) {
        println!("{:>2}. {:.3} {}", r["rank"], r["similarity"].as_f64().unwrap(), r["link"].as_str().unwrap());
    }
    println!("highlights: {}", report["highlights"]);

    let unauthenticated = http.get(url("/api/datasets")).send()?;
    println!("without a token: {}", unauthenticated.status());

    let _ = stop.send(());
    runtime.block_on(server)??;
    workers.shutdown();
    Ok(())
}
