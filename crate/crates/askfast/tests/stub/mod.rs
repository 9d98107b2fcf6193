//! Minimal OpenAI-compatible stub server for collector tests: canned
//! completions, declared usage, optional probe log-probabilities, optional
//! injected failures, and in-flight request counting.

// Shared between test targets; not every target uses every helper.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use askfast::collector::{EndpointConfig, PricingConfig};

#[derive(Clone)]
pub struct StubBehavior {
    pub answer_content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Some(p): the probe response carries top_logprobs with P(True) = p.
    /// None: no logprobs anywhere, forcing the sampling fallback.
    pub logprob_true: Option<f64>,
    /// Content returned for probe calls when logprobs are disabled.
    pub probe_text: String,
    /// Respond 500 to this many requests before recovering.
    pub fail_first: usize,
    /// Omit the usage block entirely (collector must hard-error).
    pub omit_usage: bool,
    pub delay_ms: u64,
}

impl Default for StubBehavior {
    fn default() -> Self {
        StubBehavior {
            answer_content: "\\boxed{42}".into(),
            prompt_tokens: 10,
            completion_tokens: 5,
            logprob_true: Some(0.5),
            probe_text: "True".into(),
            fail_first: 0,
            omit_usage: false,
            delay_ms: 0,
        }
    }
}

struct StubState {
    behavior: StubBehavior,
    current: AtomicUsize,
    max_seen: AtomicUsize,
    total: AtomicUsize,
    failures_left: AtomicUsize,
}

pub struct StubServer {
    pub addr: SocketAddr,
    state: Arc<StubState>,
}

impl StubServer {
    pub async fn start(behavior: StubBehavior) -> StubServer {
        let failures = behavior.fail_first;
        let state = Arc::new(StubState {
            behavior,
            current: AtomicUsize::new(0),
            max_seen: AtomicUsize::new(0),
            total: AtomicUsize::new(0),
            failures_left: AtomicUsize::new(failures),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(handle))
            .with_state(Arc::clone(&state));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        StubServer { addr, state }
    }

    /// Endpoint config pointed at this stub, authenticated through the
    /// STUB_API_KEY environment variable.
    pub fn endpoint_config(&self, in_price: f64, out_price: f64) -> EndpointConfig {
        EndpointConfig {
            base_url: format!("http://{}/v1", self.addr),
            model_id: "stub-model".into(),
            api_key_env: "STUB_API_KEY".into(),
            timeout_seconds: 10.0,
            max_in_flight: 4,
            max_retries: 3,
            backoff_base_seconds: 0.01,
            backoff_jitter_seconds: 0.01,
            pricing: PricingConfig {
                usd_per_1m_input_tokens: in_price,
                usd_per_1m_output_tokens: out_price,
            },
        }
    }

    pub fn max_in_flight_seen(&self) -> usize {
        self.state.max_seen.load(Ordering::SeqCst)
    }

    pub fn total_requests(&self) -> usize {
        self.state.total.load(Ordering::SeqCst)
    }

    pub fn host_is_loopback(&self) -> bool {
        self.addr.ip().is_loopback()
    }
}

async fn handle(
    State(state): State<Arc<StubState>>,
    Json(body): Json<Value>,
) -> impl IntoResponse {
    let current = state.current.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_seen.fetch_max(current, Ordering::SeqCst);
    state.total.fetch_add(1, Ordering::SeqCst);

    if state.behavior.delay_ms > 0 {
        tokio::time::sleep(std::time::Duration::from_millis(state.behavior.delay_ms)).await;
    }

    let response = respond(&state, &body);
    state.current.fetch_sub(1, Ordering::SeqCst);
    response
}

fn respond(state: &StubState, body: &Value) -> (StatusCode, Json<Value>) {
    let inject_failure = state
        .failures_left
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |left| {
            (left > 0).then(|| left - 1)
        })
        .is_ok();
    if inject_failure {
        return (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"error": "injected failure"})),
        );
    }

    let behavior = &state.behavior;
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    let is_probe = prompt.contains("Proposed answer:");
    let wants_logprobs = body["logprobs"].as_bool().unwrap_or(false);

    let mut choice = if is_probe {
        json!({"message": {"content": behavior.probe_text}})
    } else {
        json!({"message": {"content": behavior.answer_content}})
    };
    if is_probe && wants_logprobs {
        if let Some(p) = behavior.logprob_true {
            choice["logprobs"] = json!({
                "content": [{
                    "token": "True",
                    "logprob": p.ln(),
                    "top_logprobs": [
                        {"token": "True", "logprob": p.ln()},
                        {"token": "False", "logprob": (1.0 - p).ln()},
                    ],
                }],
            });
        }
    }

    let mut response = json!({"choices": [choice]});
    if !behavior.omit_usage {
        response["usage"] = json!({
            "prompt_tokens": behavior.prompt_tokens,
            "completion_tokens": behavior.completion_tokens,
        });
    }
    (StatusCode::OK, Json(response))
}
