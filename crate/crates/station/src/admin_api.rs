//! Local admin HTTP API, meant for a loopback or otherwise private address.
//!
//! - `GET /pending` lists trains waiting for a decision.
//! - `POST /pending/{train_id}/decision` approves or rejects one of them.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::approval::{ApprovalDecision, ApprovalDesk, DecisionRequest, PendingApproval};
use crate::error::StationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingList {
    pub pending: Vec<PendingApproval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminError {
    pub error: String,
    pub message: String,
}

impl IntoResponse for StationError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            StationError::UnauthorizedApprover => (StatusCode::FORBIDDEN, "UnauthorizedApprover"),
            StationError::NoSuchPending(_) => (StatusCode::NOT_FOUND, "NoSuchPending"),
            StationError::ChannelClosed => (StatusCode::CONFLICT, "ChannelClosed"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        let body = AdminError {
            error: code.into(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

async fn list(State(desk): State<ApprovalDesk>) -> Json<PendingList> {
    Json(PendingList { pending: desk.pending() })
}

async fn decide(
    State(desk): State<ApprovalDesk>,
    Path(train_id): Path<String>,
    Json(request): Json<DecisionRequest>,
) -> Result<Json<ApprovalDecision>, StationError> {
    desk.decide(&train_id, request).map(Json)
}

pub fn admin_router(desk: ApprovalDesk) -> Router {
    Router::new()
        .route("/pending", get(list))
        .route("/pending/{train_id}/decision", post(decide))
        .with_state(desk)
}
