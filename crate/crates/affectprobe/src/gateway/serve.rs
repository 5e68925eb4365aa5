//! Local HTTP server exposing a scripted mock over the chat-completions
//! wire protocol, so integration tests exercise the full network path.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;

use super::mock::MockScript;
use super::wire;

/// Bind the mock server; returns the bound address and the serve future.
/// Passing port 0 picks an ephemeral port.
pub async fn bind(
    script: MockScript,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let state = Arc::new(script);
    let app = Router::new()
        .route("/chat/completions", post(handle))
        .route("/v1/chat/completions", post(handle))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let serve = async move { axum::serve(listener, app).await };
    Ok((bound, serve))
}

async fn handle(
    State(script): State<Arc<MockScript>>,
    Json(request): Json<wire::WireChatRequest>,
) -> Response {
    let parts = match wire::parts_from_wire(&request) {
        Ok(parts) => parts,
        Err(msg) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": { "message": msg } })),
            )
                .into_response();
        }
    };
    match script.respond(&parts) {
        Some(text) => Json(wire::wire_response_for(text)).into_response(),
        None => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": { "message": "no mock rule matched the request" } })),
        )
            .into_response(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockMatch, MockRule};
    use crate::gateway::{BackendConfig, ChatRequest, DecodeParams, Gateway, Part};

    #[tokio::test]
    async fn round_trip_over_localhost() {
        let script = MockScript::new(vec![
            MockRule {
                condition: Some(MockMatch {
                    text_contains: Some("emotion".into()),
                    ..Default::default()
                }),
                respond: "happiness".into(),
            },
            MockRule {
                condition: None,
                respond: "neutral".into(),
            },
        ]);
        let (addr, serve) = bind(script, "127.0.0.1:0".parse().unwrap()).await.unwrap();
        tokio::spawn(serve);

        let cache_dir = tempfile::tempdir().unwrap();
        let cfg = BackendConfig::http(format!("http://{addr}"), "mock-model");
        let gateway = Gateway::new(&cfg, cache_dir.path()).unwrap();

        let request = ChatRequest {
            model_id: "mock-model".into(),
            parts: vec![Part::text("what is the emotion?")],
            decode: DecodeParams::default(),
        };
        let first = gateway.send(&request).await.unwrap();
        assert_eq!(first.text, "happiness");
        assert!(!first.cached);

        let second = gateway.send(&request).await.unwrap();
        assert!(second.cached);
        assert_eq!(second.text, "happiness");
        assert_eq!(gateway.dispatched(), 1);
        assert_eq!(gateway.cache_hits(), 1);
    }

    #[tokio::test]
    async fn rule_miss_is_a_client_error() {
        let script = MockScript::new(vec![MockRule {
            condition: Some(MockMatch {
                text_contains: Some("never-matches".into()),
                ..Default::default()
            }),
            respond: "x".into(),
        }]);
        let (addr, serve) = bind(script, "127.0.0.1:0".parse().unwrap()).await.unwrap();
        tokio::spawn(serve);

        let cache_dir = tempfile::tempdir().unwrap();
        let cfg = BackendConfig::http(format!("http://{addr}"), "m");
        let gateway = Gateway::new(&cfg, cache_dir.path()).unwrap();
        let request = ChatRequest {
            model_id: "m".into(),
            parts: vec![Part::text("hello")],
            decode: DecodeParams::default(),
        };
        let err = gateway.send(&request).await.unwrap_err();
        assert!(matches!(
            err,
            crate::gateway::GatewayError::Rejected { status: 422, .. }
        ));
    }
}
