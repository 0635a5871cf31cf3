#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use topicguard_gateway::config::{FileConfig, Settings};
use topicguard_gateway::Service;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixtures().join(name)).unwrap()
}

/// Offline settings over the bundled fetch cache.
pub fn settings(data_dir: &Path) -> Settings {
    Settings::resolve(FileConfig {
        data_dir: Some(data_dir.to_path_buf()),
        offline_mode: Some(true),
        cache_dir: Some(fixtures().join("cache")),
        ..FileConfig::default()
    })
    .unwrap()
}

pub struct Api {
    pub service: Service,
    router: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub json: Value,
}

impl Reply {
    pub fn expect(self, status: u16) -> Value {
        assert_eq!(self.status.as_u16(), status, "body: {}", self.json);
        assert!(self.json.is_object() || self.json.is_array(), "non-JSON body");
        self.json
    }
}

pub const BOUNDARY: &str = "tg-test-boundary";

/// `(name, filename, bytes)` parts as a multipart/form-data body.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, filename, bytes) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match filename {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: application/octet-stream\r\n\r\n").as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

impl Api {
    pub fn new(settings: Settings) -> Self {
        let service = Service::open(settings).unwrap();
        Self::from_service(service)
    }

    pub fn from_service(service: Service) -> Self {
        let router = topicguard_gateway::api::router(service.clone());
        Self { service, router }
    }

    pub async fn call(&self, method: &str, path: &str, token: Option<&str>, content_type: Option<&str>, body: Vec<u8>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if let Some(ct) = content_type {
            req = req.header("content-type", ct);
        }
        let resp = self.router.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let json = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()));
        Reply { status, json }
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> Reply {
        self.call("GET", path, token, None, vec![]).await
    }

    pub async fn post_json(&self, path: &str, token: Option<&str>, body: Value) -> Reply {
        self.call("POST", path, token, Some("application/json"), serde_json::to_vec(&body).unwrap()).await
    }

    pub async fn post_raw(&self, path: &str, token: Option<&str>, body: &str) -> Reply {
        self.call("POST", path, token, Some("application/json"), body.as_bytes().to_vec()).await
    }

    pub async fn post_multipart(&self, path: &str, token: Option<&str>, parts: &[(&str, Option<&str>, &[u8])]) -> Reply {
        let ct = format!("multipart/form-data; boundary={BOUNDARY}");
        self.call("POST", path, token, Some(&ct), multipart(parts)).await
    }

    /// Registers and logs in; returns the session token.
    pub async fn user(&self, name: &str) -> String {
        let creds = serde_json::json!({ "username": name, "password": "correct horse battery" });
        self.post_json("/api/register", None, creds.clone()).await.expect(201);
        self.post_json("/api/login", None, creds).await.expect(200)["token"].as_str().unwrap().to_string()
    }

    pub async fn upload(&self, token: &str, name: &str, bytes: &[u8]) -> String {
        self.post_multipart("/api/files", Some(token), &[("file", Some(name), bytes)])
            .await
            .expect(201)["file_id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    pub async fn dataset(&self, token: &str, name: &str, csv: &[u8]) -> String {
        self.post_multipart("/api/datasets", Some(token), &[("name", None, name.as_bytes()), ("csv", Some("t.csv"), csv)])
            .await
            .expect(201)["dataset_id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    /// Runs queued jobs in this thread until none remain.
    pub fn drain(&self) {
        let service = self.service.clone();
        while service.run_next_job().unwrap().is_some() {}
    }

    pub async fn train(&self, token: &str, dataset_id: &str, body: Value) -> Value {
        let job = self.post_json(&format!("/api/datasets/{dataset_id}/train"), Some(token), body).await.expect(202);
        self.drain();
        let job = self.get(&format!("/api/jobs/{}", job["job_id"].as_str().unwrap()), Some(token)).await.expect(200);
        assert_eq!(job["state"], "done", "{job}");
        job
    }
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliRun {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}\n{}", self.stdout, self.stderr))
    }
}

pub fn cli_command(data_dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_topicguard"));
    cmd.env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("TOPICGUARD_DATA_DIR", data_dir)
        .env("TOPICGUARD_CACHE_DIR", fixtures().join("cache"))
        .env("TOPICGUARD_OFFLINE", "true")
        .current_dir(fixtures());
    cmd
}

pub fn cli(data_dir: &Path, args: &[&str]) -> CliRun {
    let out = cli_command(data_dir).args(args).output().unwrap();
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Report JSON with job id and timestamp pinned, for byte comparisons.
pub fn normalized_report(report: &Value) -> String {
    let mut r = report.clone();
    r["job_id"] = Value::String(String::new());
    r["generated_at"] = Value::String("1970-01-01T00:00:00Z".into());
    serde_json::to_string_pretty(&r).unwrap()
}
