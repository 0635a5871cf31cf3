//! JSON HTTP API under `/api`. Every response body, errors included, is JSON.

use std::collections::HashMap;
use std::future::Future;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, State};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use topicguard_core::matching::CompareParams;

use crate::service::{state_name, ErrorKind, Service, ServiceError, ServiceResult, TrainRequest};

const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
            ErrorKind::Unauthenticated => StatusCode::UNAUTHORIZED,
            ErrorKind::Forbidden => StatusCode::FORBIDDEN,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        // Never reveal why a token was rejected.
        let message = match self.0.kind {
            ErrorKind::Unauthenticated => "unauthenticated".to_string(),
            _ => self.0.message,
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(ServiceError::new(ErrorKind::BadRequest, message))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::new(ErrorKind::Internal, e.to_string())))?
        .map_err(ApiError)
}

/// Parses a JSON body; an empty body means "all defaults" when `T` allows it.
fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed JSON: {e}")))
}

/// The session behind an `Authorization: Bearer <token>` header.
pub struct AuthUser {
    pub user_id: String,
    pub token: String,
}

impl FromRequestParts<Service> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, service: &Service) -> ApiResult<Self> {
        let unauthenticated = || ApiError(ServiceError::new(ErrorKind::Unauthenticated, "unauthenticated"));
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(unauthenticated)?
            .to_string();
        let (svc, t) = (service.clone(), token.clone());
        let user_id = blocking(move || svc.authenticate(&t)).await.map_err(|_| unauthenticated())?;
        Ok(Self { user_id, token })
    }
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/files", post(upload_file))
        .route("/api/datasets", post(create_dataset).get(list_datasets))
        .route("/api/datasets/{id}/train", post(train))
        .route("/api/datasets/{id}/topics", get(topics))
        .route("/api/compare", post(submit_compare))
        .route("/api/jobs/{id}", get(job))
        .route("/api/jobs/{id}/report", get(report))
        .fallback(|| async { ApiError(ServiceError::new(ErrorKind::NotFound, "no such endpoint")) })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(service)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    service: Service,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}

#[derive(Deserialize)]
struct Credentials {
    username: String,
    password: String,
}

async fn register(State(service): State<Service>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let c: Credentials = parse_json(&body)?;
    let user = blocking(move || service.register(&c.username, &c.password)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "user_id": user.user_id, "username": user.username })),
    ))
}

async fn login(State(service): State<Service>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let c: Credentials = parse_json(&body)?;
    let session = blocking(move || service.login(&c.username, &c.password)).await?;
    Ok(Json(json!({ "token": session.token, "expires_at": session.expires_at })))
}

async fn logout(State(service): State<Service>, user: AuthUser) -> ApiResult<impl IntoResponse> {
    blocking(move || service.logout(&user.token)).await?;
    Ok(Json(json!({ "logged_out": true })))
}

/// Collects multipart fields as (name, original filename, bytes).
async fn fields(multipart: Result<Multipart, MultipartRejection>) -> ApiResult<Vec<(String, Option<String>, Bytes)>> {
    let mut multipart = multipart.map_err(|e| bad_request(e.body_text()))?;
    let mut out = Vec::new();
    while let Some(field) = multipart.next_field().await.map_err(|e| bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let filename = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| bad_request(e.body_text()))?;
        out.push((name, filename, bytes));
    }
    Ok(out)
}

fn take_field(fields: &mut Vec<(String, Option<String>, Bytes)>, name: &str) -> ApiResult<(Option<String>, Bytes)> {
    let i = fields
        .iter()
        .position(|(n, _, _)| n == name)
        .ok_or_else(|| bad_request(format!("multipart field `{name}` required")))?;
    let (_, filename, bytes) = fields.swap_remove(i);
    Ok((filename, bytes))
}

async fn upload_file(
    State(service): State<Service>,
    user: AuthUser,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<impl IntoResponse> {
    let mut fields = fields(multipart).await?;
    let (filename, bytes) = take_field(&mut fields, "file")?;
    let filename = filename.unwrap_or_else(|| "upload.txt".to_string());
    let file = blocking(move || service.upload_file(&user.user_id, &filename, &bytes)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "file_id": file.file_id,
            "filename": file.filename,
            "tokens": file.clean_document.tokens.len(),
        })),
    ))
}

async fn create_dataset(
    State(service): State<Service>,
    user: AuthUser,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<impl IntoResponse> {
    let mut fields = fields(multipart).await?;
    let (_, csv) = take_field(&mut fields, "csv")?;
    let (_, name) = take_field(&mut fields, "name")?;
    let name = String::from_utf8(name.to_vec()).map_err(|_| bad_request("name must be UTF-8"))?;
    let outcome = blocking(move || service.create_dataset(&user.user_id, &name, &csv, false)).await?;
    Ok((StatusCode::CREATED, Json(outcome)))
}

async fn list_datasets(State(service): State<Service>, user: AuthUser) -> ApiResult<impl IntoResponse> {
    let datasets = blocking(move || service.list_datasets(&user.user_id)).await?;
    Ok(Json(json!({ "datasets": datasets })))
}

async fn train(
    State(service): State<Service>,
    user: AuthUser,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let request: TrainRequest = parse_json(&body)?;
    let job = blocking(move || service.submit_train(&user.user_id, &id, &request)).await?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": job.job_id, "state": state_name(job.state) })),
    ))
}

async fn topics(
    State(service): State<Service>,
    user: AuthUser,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let words = match query.get("words") {
        None => 10,
        Some(w) => w.parse::<usize>().map_err(|_| bad_request("words must be a non-negative integer"))?,
    };
    let id2 = id.clone();
    let topics = blocking(move || service.topics(&user.user_id, &id2, words)).await?;
    Ok(Json(json!({ "dataset_id": id, "topics": topics })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    file_id: String,
    dataset_ids: Vec<String>,
    #[serde(default)]
    params: CompareParams,
}

async fn submit_compare(State(service): State<Service>, user: AuthUser, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: CompareRequest = parse_json(&body)?;
    let job = blocking(move || service.submit_compare(&user.user_id, &request.file_id, &request.dataset_ids, &request.params))
        .await?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": job.job_id, "state": state_name(job.state) })),
    ))
}

async fn job(State(service): State<Service>, user: AuthUser, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || service.job(&user.user_id, &id)).await?))
}

async fn report(State(service): State<Service>, user: AuthUser, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || service.report(&user.user_id, &id)).await?))
}
