use std::convert::Infallible;
use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use super::{parse_query, retrieve_and_assemble, strip_marker, Retrieval, ServiceConfig};
use crate::ais::RecordStore;
use crate::error::{Error, Result};
use crate::qa::{ChatClient, ChatRequest};
use crate::sampler::Geography;

/// Shared read-only state behind every request.
pub struct AppState {
    pub store: RecordStore,
    pub geo: Geography,
    pub cfg: ServiceConfig,
    pub client: Arc<dyn ChatClient>,
}

/// One NDJSON line of a streamed answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    #[serde(rename = "type")]
    pub kind: String,
    pub payload: Value,
}

impl Chunk {
    fn new(kind: &str, payload: Value) -> Self {
        Self {
            kind: kind.into(),
            payload,
        }
    }

    fn line(&self) -> Bytes {
        let mut s = serde_json::to_string(self).expect("chunk serializes");
        s.push('\n');
        Bytes::from(s)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    question: String,
}

fn json_error(status: StatusCode, body: Value) -> Response {
    (status, Json(body)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/query", post(query))
        .with_state(state)
}

async fn query(State(state): State<Arc<AppState>>, body: std::result::Result<Json<QueryBody>, JsonRejection>) -> Response {
    let started = Instant::now();
    let Ok(Json(body)) = body else {
        return json_error(StatusCode::BAD_REQUEST, json!({"error": "body must be JSON {\"question\": string}"}));
    };
    let anchor = state.store.time_span().map(|(_, end)| end).unwrap_or_else(chrono::Utc::now);
    let constraints = match parse_query(&body.question, &state.geo, anchor) {
        Ok(c) => c,
        Err(Error::UnresolvableQuery { missing }) => {
            return json_error(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({
                    "error": "query needs a time or place",
                    "missing": missing,
                    "hint": "add a date (2024-03-01), a span (last 6 hours), a region, \"near <port>\" or \"lat A to B lon C to D\""
                }),
            )
        }
        Err(e) => return json_error(StatusCode::BAD_REQUEST, json!({"error": e.to_string()})),
    };

    let (tx, rx) = mpsc::channel::<Bytes>(64);
    tokio::spawn(async move {
        if let Err(e) = stream_answer(state, constraints, started, &tx).await {
            let _ = tx.send(Chunk::new("error", json!(e.to_string())).line()).await;
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(stream))
        .expect("static response parts")
}

async fn stream_answer(
    state: Arc<AppState>,
    constraints: super::QueryConstraints,
    started: Instant,
    tx: &mpsc::Sender<Bytes>,
) -> Result<()> {
    let st = state.clone();
    let c = constraints.clone();
    let retrieval = tokio::task::spawn_blocking(move || retrieve_and_assemble(&c, &st.store, &st.geo, &st.cfg))
        .await
        .map_err(|e| Error::invalid(e.to_string()))??;
    let send = |chunk: Chunk| async move { tx.send(chunk.line()).await.is_ok() };

    let a = match retrieval {
        Retrieval::NoData => {
            send(Chunk::new("meta", json!({"constraints": constraints, "vessels": 0, "no_data": true}))).await;
            send(Chunk::new(
                "done",
                json!({"answer": "no data", "no_data": true, "vessel_count": 0, "elapsed_ms": started.elapsed().as_millis() as u64}),
            ))
            .await;
            return Ok(());
        }
        Retrieval::Ready(a) => a,
    };
    let meta = json!({
        "constraints": constraints,
        "vessels": a.context.vessel_count(),
        "records": a.context.record_count(),
        "matched_vessels": a.matched_vessels,
        "truncated": a.truncated,
    });
    if !send(Chunk::new("meta", meta)).await {
        return Ok(());
    }

    let request = ChatRequest {
        model: state.cfg.model.clone(),
        temperature: state.cfg.temperature,
        prompt: a.prompt,
    };
    let client = state.client.clone();
    let inference = tokio::task::spawn_blocking(move || client.complete(&request));
    // A closed receiver means the client went away; the blocking call is abandoned.
    let reply = tokio::select! {
        r = inference => r.map_err(|e| Error::invalid(e.to_string()))??,
        _ = tx.closed() => return Ok(()),
    };
    let answer = strip_marker(&reply);
    for token in answer.split_inclusive(char::is_whitespace) {
        if !send(Chunk::new("token", json!(token))).await {
            return Ok(());
        }
    }
    send(Chunk::new(
        "done",
        json!({
            "answer": answer,
            "vessel_count": a.context.vessel_count(),
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    ))
    .await;
    Ok(())
}

/// Bind and serve until the process is stopped.
pub async fn serve(state: Arc<AppState>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.cfg.bind)
        .await
        .map_err(|e| Error::io(&state.cfg.bind, e))?;
    log::info!("listening on {}", state.cfg.bind);
    axum::serve(listener, router(state)).await.map_err(|e| Error::io("serve", e))
}
