//! `/api/v1` HTTP service.
//!
//! Bodies are parsed into `serde_json::Value` by hand so that every schema
//! problem, including malformed JSON, is a 400 with a JSON error body.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use wahls_core::featurize::FEATURE_LAYOUT_VERSION;
use wahls_core::synth::COST_MODEL_VERSION;

use crate::request::{EstimateResponse, Registry, RequestError};

#[derive(Clone, Default)]
pub struct AppState {
    registry: Arc<RwLock<Arc<Registry>>>,
}

impl AppState {
    pub fn new(registry: Registry) -> Self {
        Self { registry: Arc::new(RwLock::new(Arc::new(registry))) }
    }

    pub fn snapshot(&self) -> Arc<Registry> {
        self.registry.read().expect("registry lock").clone()
    }

    /// Swaps in a new registry; in-flight requests keep the old one.
    pub fn replace(&self, registry: Registry) {
        *self.registry.write().expect("registry lock") = Arc::new(registry);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/models", get(models))
        .route("/api/v1/estimate", post(estimate))
        .route("/api/v1/compare", post(compare))
        .with_state(state)
}

impl IntoResponse for RequestError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self }))).into_response()
    }
}

fn parse_body(body: &Bytes) -> Result<Value, RequestError> {
    serde_json::from_slice(body).map_err(|e| RequestError::schema(format!("invalid JSON body: {e}")))
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "models": state.snapshot().len(),
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "cost_model_version": COST_MODEL_VERSION,
    }))
}

async fn models(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "models": state.snapshot().catalog() }))
}

async fn run_blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, RequestError> + Send + 'static,
) -> Result<T, RequestError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| RequestError {
        status: 500,
        kind: "internal",
        message: e.to_string(),
    })?
}

async fn estimate(State(state): State<AppState>, body: Bytes) -> Result<Json<EstimateResponse>, RequestError> {
    let v = parse_body(&body)?;
    let registry = state.snapshot();
    run_blocking(move || registry.estimate_value(&v)).await.map(Json)
}

/// Accepts `[req, ...]` or `{"requests": [req, ...]}`; answers each entry
/// independently, in order.
async fn compare(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, RequestError> {
    let v = parse_body(&body)?;
    let items = match v {
        Value::Array(items) => items,
        Value::Object(mut m) if m.len() == 1 && m.contains_key("requests") => match m.remove("requests") {
            Some(Value::Array(items)) => items,
            _ => return Err(RequestError::schema("`requests` must be an array")),
        },
        _ => return Err(RequestError::schema("expected an array of estimate requests")),
    };
    if items.is_empty() {
        return Err(RequestError::schema("no requests to compare"));
    }
    let registry = state.snapshot();
    let results = run_blocking(move || {
        Ok(items
            .iter()
            .map(|item| match registry.estimate_value(item) {
                Ok(r) => json!({ "ok": r }),
                Err(e) => json!({ "error": e }),
            })
            .collect::<Vec<_>>())
    })
    .await?;
    Ok(Json(json!({ "results": results })))
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, models = state.snapshot().len(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}
