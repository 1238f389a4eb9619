//! Typed client for the center API over a pluggable transport.
//!
//! [`LoopbackTransport`] drives the router in-process (same handlers, no
//! sockets); [`HttpTransport`] talks to a running center.

use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use padme_core::crypto::{AuditEntry, EncryptedEnvelope, KeyPair, PublicKey};
use padme_core::types::{AnalysisTask, ApprovalRecord, HopReport, StationDescriptor};
use padme_core::RouteStatus;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tower::ServiceExt;

use crate::api::{
    CenterInfo, ChallengeResponse, ErrorBody, LedgerResponse, PollResponse, PushHopRequest, RegisterStationRequest,
    RegisterStationResponse, StatusResponse, SubmitTaskRequest, SubmitTaskResponse,
};
use crate::auth::Credential;
use crate::service::{Delivery, ResultsBundle, StatusView};

pub type BoxFuture<'a, T> = Pin<Box<dyn Future<Output = T> + Send + 'a>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

pub trait Transport: Send + Sync {
    fn send(&self, request: WireRequest) -> BoxFuture<'_, Result<WireResponse, ClientError>>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("{code} ({status}): {message}")]
    Api { status: u16, code: String, message: String },
    #[error("decode: {0}")]
    Decode(String),
}

impl ClientError {
    /// The center's error code, when the center answered with one.
    pub fn api_code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub struct LoopbackTransport {
    router: Router,
}

impl LoopbackTransport {
    pub fn new(router: Router) -> Self {
        Self { router }
    }
}

impl Transport for LoopbackTransport {
    fn send(&self, request: WireRequest) -> BoxFuture<'_, Result<WireResponse, ClientError>> {
        Box::pin(async move {
            let mut builder = Request::builder().method(request.method.as_str()).uri(request.path.as_str());
            for (k, v) in &request.headers {
                builder = builder.header(k.as_str(), v.as_str());
            }
            let http_request = builder
                .body(Body::from(request.body))
                .map_err(|e| ClientError::Transport(e.to_string()))?;
            let response = self
                .router
                .clone()
                .oneshot(http_request)
                .await
                .map_err(|e| ClientError::Transport(e.to_string()))?;
            let status = response.status().as_u16();
            let body = response
                .into_body()
                .collect()
                .await
                .map_err(|e| ClientError::Transport(e.to_string()))?
                .to_bytes()
                .to_vec();
            Ok(WireResponse { status, body })
        })
    }
}

#[derive(Clone)]
pub struct HttpTransport {
    base_url: String,
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client: reqwest::Client::new(),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: WireRequest) -> BoxFuture<'_, Result<WireResponse, ClientError>> {
        Box::pin(async move {
            let method = reqwest::Method::from_bytes(request.method.as_bytes())
                .map_err(|e| ClientError::Transport(e.to_string()))?;
            let mut builder = self
                .client
                .request(method, format!("{}{}", self.base_url, request.path))
                .header("content-type", "application/json");
            for (k, v) in &request.headers {
                builder = builder.header(k.as_str(), v.as_str());
            }
            let response = builder
                .body(request.body)
                .send()
                .await
                .map_err(|e| ClientError::Transport(e.to_string()))?;
            let status = response.status().as_u16();
            let body = response
                .bytes()
                .await
                .map_err(|e| ClientError::Transport(e.to_string()))?
                .to_vec();
            Ok(WireResponse { status, body })
        })
    }
}

/// A party's view of the center: every request it signs uses `key`.
#[derive(Clone)]
pub struct CenterClient {
    transport: Arc<dyn Transport>,
    key: KeyPair,
}

impl CenterClient {
    pub fn new(transport: Arc<dyn Transport>, key: KeyPair) -> Self {
        Self { transport, key }
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    async fn call<T: DeserializeOwned>(
        &self,
        method: &str,
        path: &str,
        body: Vec<u8>,
        sign: bool,
    ) -> Result<T, ClientError> {
        let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
        if sign {
            let challenge: ChallengeResponse = Box::pin(self.call("POST", "/auth/challenge", Vec::new(), false)).await?;
            let credential = Credential::sign(&self.key, method, path, &challenge.nonce, &body);
            headers.extend(credential.headers().into_iter().map(|(k, v)| (k.to_string(), v)));
        }
        let response = self
            .transport
            .send(WireRequest {
                method: method.to_string(),
                path: path.to_string(),
                headers,
                body,
            })
            .await?;
        if !(200..300).contains(&response.status) {
            return Err(match serde_json::from_slice::<ErrorBody>(&response.body) {
                Ok(e) => ClientError::Api {
                    status: response.status,
                    code: e.error,
                    message: e.message,
                },
                Err(_) => ClientError::Api {
                    status: response.status,
                    code: "Http".into(),
                    message: String::from_utf8_lossy(&response.body).into_owned(),
                },
            });
        }
        serde_json::from_slice(&response.body).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn json(value: &impl Serialize) -> Vec<u8> {
        serde_json::to_vec(value).expect("request bodies serialize")
    }

    pub async fn center_info(&self) -> Result<CenterInfo, ClientError> {
        self.call("GET", "/center", Vec::new(), false).await
    }

    pub async fn register_station(&self, descriptor: StationDescriptor, owner_id: &str) -> Result<String, ClientError> {
        let body = Self::json(&RegisterStationRequest {
            descriptor,
            public_key: self.key.public().clone(),
            owner_id: owner_id.to_string(),
        });
        let r: RegisterStationResponse = self.call("POST", "/stations", body, true).await?;
        Ok(r.station_id)
    }

    pub async fn submit_task(&self, task: AnalysisTask, route: Vec<String>) -> Result<SubmitTaskResponse, ClientError> {
        let body = Self::json(&SubmitTaskRequest {
            task,
            route,
            researcher_public_key: self.key.public().clone(),
        });
        self.call("POST", "/trains", body, true).await
    }

    pub async fn approve(&self, train_id: &str, record: &ApprovalRecord) -> Result<RouteStatus, ClientError> {
        let r: StatusResponse = self
            .call("POST", &format!("/trains/{train_id}/approvals"), Self::json(record), false)
            .await?;
        Ok(r.status)
    }

    pub async fn dispatch(&self, train_id: &str) -> Result<RouteStatus, ClientError> {
        let r: StatusResponse = self.call("POST", &format!("/trains/{train_id}/dispatch"), Vec::new(), true).await?;
        Ok(r.status)
    }

    pub async fn poll(&self, station_id: &str) -> Result<Option<Delivery>, ClientError> {
        let r: PollResponse = self
            .call("GET", &format!("/trains/next?station={station_id}"), Vec::new(), true)
            .await?;
        Ok(r.delivery)
    }

    pub async fn push_hop(
        &self,
        train_id: &str,
        report: HopReport,
        envelope: Option<EncryptedEnvelope>,
    ) -> Result<RouteStatus, ClientError> {
        let body = Self::json(&PushHopRequest { report, envelope });
        let r: StatusResponse = self.call("POST", &format!("/trains/{train_id}/hops"), body, true).await?;
        Ok(r.status)
    }

    pub async fn results(&self, train_id: &str) -> Result<ResultsBundle, ClientError> {
        self.call("GET", &format!("/trains/{train_id}/results"), Vec::new(), true).await
    }

    pub async fn status(&self, train_id: &str) -> Result<StatusView, ClientError> {
        self.call("GET", &format!("/trains/{train_id}/status"), Vec::new(), true).await
    }

    pub async fn ledger(&self, train_id: &str) -> Result<Vec<AuditEntry>, ClientError> {
        let r: LedgerResponse = self.call("GET", &format!("/trains/{train_id}/ledger"), Vec::new(), true).await?;
        Ok(r.entries)
    }

    pub async fn center_public_key(&self) -> Result<PublicKey, ClientError> {
        Ok(self.center_info().await?.public_key)
    }
}
