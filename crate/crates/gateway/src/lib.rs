//! Operational surface of topicguard: the JSON HTTP API, the store-backed job
//! queue and its workers, and the `topicguard` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod jobs;
pub mod service;

pub use config::Settings;
pub use service::{Service, ServiceError};
