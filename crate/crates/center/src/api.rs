//! HTTP/JSON API. Binary fields are base64; envelopes travel in their wire
//! encoding.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use padme_core::crypto::{AuditEntry, KeyId, PublicKey};
use padme_core::types::{AnalysisTask, ApprovalRecord, HopReport, StationDescriptor, TrainManifest};
use padme_core::RouteStatus;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::auth::Credential;
use crate::error::CenterError;
use crate::service::{CenterService, Delivery, ResultsBundle, SignedRequest, StatusView};

/// Serde adapter carrying an envelope as base64 of its wire encoding.
pub mod envelope_b64 {
    use padme_core::canonical::b64;
    use padme_core::crypto::EncryptedEnvelope;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(env: &EncryptedEnvelope, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64::encode(&env.to_wire()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EncryptedEnvelope, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = b64::decode(&text).map_err(serde::de::Error::custom)?;
        EncryptedEnvelope::from_wire(&bytes).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(env: &Option<EncryptedEnvelope>, s: S) -> Result<S::Ok, S::Error> {
            match env {
                Some(env) => s.serialize_some(&b64::encode(&env.to_wire())),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<EncryptedEnvelope>, D::Error> {
            match Option::<String>::deserialize(d)? {
                Some(text) => {
                    let bytes = b64::decode(&text).map_err(serde::de::Error::custom)?;
                    EncryptedEnvelope::from_wire(&bytes).map(Some).map_err(serde::de::Error::custom)
                }
                None => Ok(None),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeResponse {
    pub nonce: String,
    pub ttl_secs: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterInfo {
    pub key_id: KeyId,
    pub public_key: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterStationRequest {
    pub descriptor: StationDescriptor,
    pub public_key: PublicKey,
    pub owner_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterStationResponse {
    pub station_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitTaskRequest {
    pub task: AnalysisTask,
    pub route: Vec<String>,
    pub researcher_public_key: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitTaskResponse {
    pub train_id: String,
    pub manifest: TrainManifest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusResponse {
    pub status: RouteStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PollResponse {
    pub delivery: Option<Delivery>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PushHopRequest {
    pub report: HopReport,
    #[serde(default, with = "envelope_b64::option")]
    pub envelope: Option<padme_core::crypto::EncryptedEnvelope>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerResponse {
    pub entries: Vec<AuditEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Deserialize)]
struct PollQuery {
    station: String,
}

pub struct ApiError(pub CenterError);

impl From<CenterError> for ApiError {
    fn from(e: CenterError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            warn!(error = %self.0, "request failed");
        }
        let body = ErrorBody {
            error: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    service: Arc<Mutex<CenterService>>,
}

impl AppState {
    pub fn new(service: CenterService) -> Self {
        Self {
            service: Arc::new(Mutex::new(service)),
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, CenterService> {
        self.service.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(CenterError::Invalid(format!("request body: {e}"))))
}

fn credential(headers: &HeaderMap) -> Result<Credential, ApiError> {
    Ok(Credential::from_headers(|h| headers.get(h).and_then(|v| v.to_str().ok()))?)
}

fn path_of(uri: &Uri) -> &str {
    uri.path_and_query().map(|p| p.as_str()).unwrap_or("/")
}

fn signed<'a>(method: &'a str, uri: &'a Uri, headers: &HeaderMap, body: &'a [u8]) -> Result<SignedRequest<'a>, ApiError> {
    Ok(SignedRequest {
        credential: credential(headers)?,
        method,
        path: path_of(uri),
        body,
    })
}

async fn challenge(State(state): State<AppState>) -> Json<ChallengeResponse> {
    let mut svc = state.lock();
    let nonce = svc.issue_challenge();
    Json(ChallengeResponse {
        nonce,
        ttl_secs: svc.challenge_ttl().as_secs(),
    })
}

async fn center_info(State(state): State<AppState>) -> Json<CenterInfo> {
    let svc = state.lock();
    Json(CenterInfo {
        key_id: svc.public_key().key_id(),
        public_key: svc.public_key().clone(),
    })
}

async fn register_station(
    State(state): State<AppState>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<RegisterStationResponse> {
    let req: RegisterStationRequest = parse(&body)?;
    let signed = signed("POST", &uri, &headers, &body)?;
    let station_id = state
        .lock()
        .register_station(&signed, req.descriptor, req.public_key, req.owner_id)?;
    Ok(Json(RegisterStationResponse { station_id }))
}

async fn submit_task(State(state): State<AppState>, uri: Uri, headers: HeaderMap, body: Bytes) -> ApiResult<SubmitTaskResponse> {
    let req: SubmitTaskRequest = parse(&body)?;
    let signed = signed("POST", &uri, &headers, &body)?;
    let manifest = state
        .lock()
        .submit_task(&signed, req.task, req.route, req.researcher_public_key)?;
    Ok(Json(SubmitTaskResponse {
        train_id: manifest.train_id.clone(),
        manifest,
    }))
}

async fn approve(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<StatusResponse> {
    let record: ApprovalRecord = parse(&body)?;
    let status = state.lock().approve_task(&id, record)?;
    Ok(Json(StatusResponse { status }))
}

async fn dispatch(
    State(state): State<AppState>,
    Path(id): Path<String>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<StatusResponse> {
    let signed = signed("POST", &uri, &headers, &body)?;
    let status = state.lock().dispatch(&signed, &id)?;
    Ok(Json(StatusResponse { status }))
}

async fn poll_next(
    State(state): State<AppState>,
    Query(query): Query<PollQuery>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<PollResponse> {
    let signed = signed("GET", &uri, &headers, &body)?;
    let delivery = state.lock().poll_next(&signed, &query.station)?;
    Ok(Json(PollResponse { delivery }))
}

async fn push_hop(
    State(state): State<AppState>,
    Path(id): Path<String>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<StatusResponse> {
    let req: PushHopRequest = parse(&body)?;
    let signed = signed("POST", &uri, &headers, &body)?;
    let status = state.lock().push_hop(&signed, &id, req.report, req.envelope)?;
    Ok(Json(StatusResponse { status }))
}

async fn results(
    State(state): State<AppState>,
    Path(id): Path<String>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<ResultsBundle> {
    let signed = signed("GET", &uri, &headers, &body)?;
    Ok(Json(state.lock().fetch_results(&signed, &id)?))
}

async fn status(
    State(state): State<AppState>,
    Path(id): Path<String>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<StatusView> {
    let signed = signed("GET", &uri, &headers, &body)?;
    Ok(Json(state.lock().route_status(&signed, &id)?))
}

async fn ledger(
    State(state): State<AppState>,
    Path(id): Path<String>,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<LedgerResponse> {
    let signed = signed("GET", &uri, &headers, &body)?;
    let entries = state.lock().ledger(&signed, &id)?;
    Ok(Json(LedgerResponse { entries }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/auth/challenge", post(challenge))
        .route("/center", get(center_info))
        .route("/stations", post(register_station))
        .route("/trains", post(submit_task))
        .route("/trains/next", get(poll_next))
        .route("/trains/{id}/approvals", post(approve))
        .route("/trains/{id}/dispatch", post(dispatch))
        .route("/trains/{id}/hops", post(push_hop))
        .route("/trains/{id}/results", get(results))
        .route("/trains/{id}/status", get(status))
        .route("/trains/{id}/ledger", get(ledger))
        .with_state(state)
}
