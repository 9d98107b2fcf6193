//! Trace collection against OpenAI-compatible chat-completion endpoints:
//! one answer call per dataset item, an optional confidence probe, wall-clock
//! timing, cost from a pricing config, and exact-match numeric grading.
//!
//! Runs are resumable: items whose query_id already appears in the output
//! file are skipped, and items that keep failing after retries land in a
//! failures sidecar instead of aborting the run. At most `max_in_flight`
//! requests are outstanding at any instant; output lines are appended under
//! a lock, one whole line at a time, in completion order.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, Semaphore};

use crate::error::{Error, Result};
use crate::trace::{ModelRole, TraceRecord};

/// Default confidence-probe prompt, version 1. Override with any template
/// containing `{question}` and `{proposed_answer}` placeholders.
pub const PROBE_TEMPLATE_V1: &str = include_str!("../templates/p_true_v1.txt");

/// Number of temperature-1 samples used to estimate the confidence when the
/// endpoint does not return log-probabilities.
pub const PROBE_SAMPLE_FALLBACK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub usd_per_1m_input_tokens: f64,
    pub usd_per_1m_output_tokens: f64,
}

/// Endpoint settings, normally loaded from a TOML file. The API key itself
/// never lives in the file; `api_key_env` names the environment variable
/// holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to but not including `/chat/completions`,
    /// e.g. `https://api.example.com/v1`.
    pub base_url: String,
    pub model_id: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Exponential backoff: attempt k sleeps base * 2^k plus uniform jitter.
    #[serde(default = "default_backoff_base")]
    pub backoff_base_seconds: f64,
    #[serde(default = "default_backoff_jitter")]
    pub backoff_jitter_seconds: f64,
    pub pricing: PricingConfig,
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> f64 {
    120.0
}
fn default_max_in_flight() -> usize {
    4
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_base() -> f64 {
    0.5
}
fn default_backoff_jitter() -> f64 {
    0.25
}

impl EndpointConfig {
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: EndpointConfig =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timeout_seconds.is_finite() || self.timeout_seconds <= 0.0 {
            return Err(Error::Config(format!(
                "timeout_seconds = {} must be positive",
                self.timeout_seconds
            )));
        }
        if self.max_in_flight < 1 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if self.pricing.usd_per_1m_input_tokens < 0.0
            || self.pricing.usd_per_1m_output_tokens < 0.0
        {
            return Err(Error::Config("pricing values must be nonnegative".into()));
        }
        Ok(())
    }

    fn api_key(&self) -> Result<String> {
        std::env::var(&self.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))
        })
    }

    fn cost(&self, usage: &Usage) -> f64 {
        usage.prompt_tokens as f64 * self.pricing.usd_per_1m_input_tokens * 1e-6
            + usage.completion_tokens as f64 * self.pricing.usd_per_1m_output_tokens * 1e-6
    }
}

/// One benchmark question with its numeric gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub query_id: String,
    pub question: String,
    pub gold_answer: String,
}

/// Load dataset items from JSONL, checking that every gold answer parses as
/// a number.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetItem>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: DatasetItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if parse_numeric(&item.gold_answer).is_none() {
            return Err(Error::OutOfRange {
                line: line_no,
                field: "gold_answer",
                message: format!("'{}' does not parse as a number", item.gold_answer),
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Collection settings beyond the endpoint itself.
#[derive(Debug, Clone)]
pub struct CollectOptions {
    pub role: ModelRole,
    /// Run the confidence probe after each answer. Only valid for the
    /// non-reasoning role.
    pub probe: bool,
    pub probe_template: String,
    pub out_path: PathBuf,
    pub failures_path: PathBuf,
}

impl CollectOptions {
    pub fn new(role: ModelRole, probe: bool, out_path: PathBuf) -> Self {
        let failures_path = out_path.with_extension("failures.jsonl");
        CollectOptions {
            role,
            probe,
            probe_template: PROBE_TEMPLATE_V1.to_string(),
            out_path,
            failures_path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub collected: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Trace record plus the auxiliary component fields the collector knows.
/// Downstream ingestion reads the flattened record and ignores the rest.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CollectedRecord {
    #[serde(flatten)]
    record: TraceRecord,
    answer_latency_seconds: f64,
    probe_latency_seconds: f64,
    answer_cost_usd: f64,
    probe_cost_usd: f64,
    extracted_answer: Option<String>,
    answer_parse_failed: bool,
}

// --- OpenAI-compatible wire shapes -----------------------------------------

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u32>,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogProbs>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogProbs {
    content: Option<Vec<TokenLogProbs>>,
}

#[derive(Debug, Deserialize)]
struct TokenLogProbs {
    #[allow(dead_code)]
    token: String,
    #[serde(default)]
    top_logprobs: Vec<TopLogProb>,
}

#[derive(Debug, Deserialize)]
struct TopLogProb {
    token: String,
    logprob: f64,
}

// --- Answer extraction and grading ------------------------------------------

/// Extract the model's final numeric answer: the last numeric expression
/// inside the last `\boxed{...}`, or failing that the last standalone
/// number anywhere in the completion. Comma group separators are stripped.
pub fn extract_answer(completion_text: &str) -> Option<String> {
    if let Some(content) = last_boxed_content(completion_text) {
        if let Some(numeric) = last_numeric(&content) {
            return Some(numeric);
        }
    }
    last_numeric(completion_text)
}

fn last_boxed_content(text: &str) -> Option<String> {
    let start = text.rfind("\\boxed{")?;
    let inner_start = start + "\\boxed{".len();
    let mut depth = 1usize;
    for (offset, ch) in text[inner_start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[inner_start..inner_start + offset].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

fn last_numeric(text: &str) -> Option<String> {
    // Lazily-built shared regex; the pattern accepts comma group separators
    // and scientific notation.
    use std::sync::OnceLock;
    static NUMERIC: OnceLock<regex::Regex> = OnceLock::new();
    let re = NUMERIC.get_or_init(|| {
        regex::Regex::new(r"[-+]?(?:\d+(?:,\d{3})*(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?")
            .expect("numeric regex compiles")
    });
    re.find_iter(text)
        .last()
        .map(|m| m.as_str().replace(',', ""))
}

fn parse_numeric(text: &str) -> Option<f64> {
    text.trim().replace(',', "").parse::<f64>().ok()
}

/// Exact numeric match with 1e-9 relative tolerance.
pub fn numeric_answers_equal(a: &str, b: &str) -> bool {
    match (parse_numeric(a), parse_numeric(b)) {
        (Some(x), Some(y)) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => false,
    }
}

// --- Collection --------------------------------------------------------------

fn read_existing_ids(path: &Path) -> Result<HashSet<String>> {
    let mut ids = HashSet::new();
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
        Err(source) => {
            return Err(Error::Io {
                path: path.display().to_string(),
                source,
            })
        }
    };
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Config(format!(
                "existing output {} is not valid JSONL: {e}",
                path.display()
            )))?;
        if let Some(id) = value.get("query_id").and_then(|v| v.as_str()) {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

struct LineWriter {
    file: std::fs::File,
    path: String,
}

impl LineWriter {
    fn append(path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(LineWriter {
            file,
            path: path.display().to_string(),
        })
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}").map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}

async fn sleep_backoff(config: &EndpointConfig, attempt: u32) {
    let jitter = config.backoff_jitter_seconds * rand::random::<f64>();
    let delay = config.backoff_base_seconds * 2f64.powi(attempt as i32) + jitter;
    tokio::time::sleep(std::time::Duration::from_secs_f64(delay)).await;
}

async fn post_chat(
    client: &reqwest::Client,
    config: &EndpointConfig,
    api_key: &str,
    request: &ChatRequest<'_>,
) -> Result<ChatResponse> {
    let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
    let mut attempt = 0u32;
    loop {
        let result = client
            .post(&url)
            .bearer_auth(api_key)
            .json(request)
            .send()
            .await;
        match result {
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    return response
                        .json::<ChatResponse>()
                        .await
                        .map_err(|e| Error::ApiShape(e.to_string()));
                }
                let retryable = status.as_u16() == 429 || status.is_server_error();
                if !retryable || attempt >= config.max_retries {
                    return Err(Error::Http(format!("{url} returned {status}")));
                }
            }
            Err(e) => {
                if attempt >= config.max_retries {
                    return Err(Error::Http(e.to_string()));
                }
            }
        }
        sleep_backoff(config, attempt).await;
        attempt += 1;
    }
}

struct CallResult {
    content: String,
    usage: Usage,
    latency_seconds: f64,
    logprob_true: Option<f64>,
}

async fn timed_chat_call(
    client: &reqwest::Client,
    config: &EndpointConfig,
    api_key: &str,
    request: &ChatRequest<'_>,
    query_id: &str,
) -> Result<CallResult> {
    let start = Instant::now();
    let response = post_chat(client, config, api_key, request).await?;
    let latency_seconds = start.elapsed().as_secs_f64();
    let usage = response.usage.ok_or_else(|| Error::MissingUsage {
        query_id: query_id.to_string(),
    })?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::ApiShape("response has no choices".into()))?;
    let logprob_true = choice.logprobs.as_ref().and_then(true_probability);
    Ok(CallResult {
        content: choice.message.content.unwrap_or_default(),
        usage,
        latency_seconds,
        logprob_true,
    })
}

/// Probability of the "True" token from the first generated position, when
/// the endpoint reports log-probabilities. Falls back to the complement of
/// "False" when only that token appears.
fn true_probability(logprobs: &ChoiceLogProbs) -> Option<f64> {
    let first = logprobs.content.as_ref()?.first()?;
    let mut p_true = None;
    let mut p_false = None;
    for candidate in &first.top_logprobs {
        let token = candidate.token.trim();
        if token.eq_ignore_ascii_case("true") && p_true.is_none() {
            p_true = Some(candidate.logprob.exp());
        } else if token.eq_ignore_ascii_case("false") && p_false.is_none() {
            p_false = Some(candidate.logprob.exp());
        }
    }
    p_true
        .or_else(|| p_false.map(|p| 1.0 - p))
        .map(|p| p.clamp(0.0, 1.0))
}

/// Collect one trace record per dataset item, appending JSONL as items
/// complete. Returns the newly collected records (completion order).
pub async fn collect(
    items: &[DatasetItem],
    config: &EndpointConfig,
    options: &CollectOptions,
) -> Result<(Vec<TraceRecord>, CollectSummary)> {
    config.validate()?;
    if options.probe && options.role != ModelRole::NonReasoning {
        return Err(Error::Config(
            "the confidence probe is only valid for the non_reasoning role".into(),
        ));
    }
    let api_key = config.api_key()?;
    let existing = read_existing_ids(&options.out_path)?;
    let pending: Vec<DatasetItem> = items
        .iter()
        .filter(|item| !existing.contains(&item.query_id))
        .cloned()
        .collect();
    let skipped = items.len() - pending.len();

    let client = reqwest::Client::builder()
        .timeout(std::time::Duration::from_secs_f64(config.timeout_seconds))
        .build()
        .map_err(|e| Error::Http(e.to_string()))?;

    let out = Arc::new(Mutex::new(LineWriter::append(&options.out_path)?));
    let failures = Arc::new(Mutex::new(LineWriter::append(&options.failures_path)?));
    let semaphore = Arc::new(Semaphore::new(config.max_in_flight));

    let mut join_set = tokio::task::JoinSet::new();
    for item in pending {
        let client = client.clone();
        let config = config.clone();
        let options_role = options.role;
        let probe = options.probe;
        let template = options.probe_template.clone();
        let api_key = api_key.clone();
        let out = Arc::clone(&out);
        let failures = Arc::clone(&failures);
        let semaphore = Arc::clone(&semaphore);
        join_set.spawn(async move {
            let _permit = semaphore.acquire_owned().await.expect("semaphore open");
            let collected = collect_one(
                &client,
                &config,
                &api_key,
                &item,
                options_role,
                probe,
                &template,
            )
            .await;
            match collected {
                Ok(record) => {
                    let line =
                        serde_json::to_string(&record).expect("collected record serializes");
                    out.lock().await.write_line(&line)?;
                    Ok(Some(record.record))
                }
                Err(Error::MissingUsage { query_id }) => Err(Error::MissingUsage { query_id }),
                Err(e) => {
                    let line = serde_json::json!({
                        "query_id": item.query_id,
                        "error": e.to_string(),
                    });
                    failures.lock().await.write_line(&line.to_string())?;
                    Ok(None)
                }
            }
        });
    }

    let mut records = Vec::new();
    let mut failed = 0usize;
    while let Some(joined) = join_set.join_next().await {
        let task_result = joined.map_err(|e| Error::Config(format!("task panicked: {e}")))?;
        match task_result? {
            Some(record) => records.push(record),
            None => failed += 1,
        }
    }

    let summary = CollectSummary {
        collected: records.len(),
        skipped,
        failed,
    };
    Ok((records, summary))
}

async fn collect_one(
    client: &reqwest::Client,
    config: &EndpointConfig,
    api_key: &str,
    item: &DatasetItem,
    role: ModelRole,
    probe: bool,
    template: &str,
) -> Result<CollectedRecord> {
    let answer_request = ChatRequest {
        model: &config.model_id,
        messages: vec![ChatMessage {
            role: "user",
            content: &item.question,
        }],
        temperature: None,
        max_tokens: None,
        logprobs: None,
        top_logprobs: None,
    };
    let answer = timed_chat_call(client, config, api_key, &answer_request, &item.query_id).await?;
    let answer_cost = config.cost(&answer.usage);
    let extracted = extract_answer(&answer.content);
    let correct = extracted
        .as_deref()
        .map(|e| numeric_answers_equal(e, &item.gold_answer))
        .unwrap_or(false);

    let mut probe_latency = 0.0;
    let mut probe_cost = 0.0;
    let mut p_true = None;
    if probe {
        let proposed = extracted.clone().unwrap_or_else(|| answer.content.clone());
        let prompt = template
            .replace("{question}", &item.question)
            .replace("{proposed_answer}", &proposed);
        let probe_request = ChatRequest {
            model: &config.model_id,
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt,
            }],
            temperature: Some(0.0),
            max_tokens: Some(8),
            logprobs: Some(true),
            top_logprobs: Some(20),
        };
        let first = timed_chat_call(client, config, api_key, &probe_request, &item.query_id).await?;
        probe_latency += first.latency_seconds;
        probe_cost += config.cost(&first.usage);
        p_true = Some(match first.logprob_true {
            Some(p) => p,
            None => {
                // No log-probabilities: estimate as the fraction of "True"
                // answers over fresh temperature-1 samples. The discovery
                // call above still counts toward latency and cost.
                let mut trues = 0usize;
                let sample_request = ChatRequest {
                    temperature: Some(1.0),
                    logprobs: None,
                    top_logprobs: None,
                    ..probe_request
                };
                for _ in 0..PROBE_SAMPLE_FALLBACK {
                    let sample = timed_chat_call(
                        client,
                        config,
                        api_key,
                        &sample_request,
                        &item.query_id,
                    )
                    .await?;
                    probe_latency += sample.latency_seconds;
                    probe_cost += config.cost(&sample.usage);
                    if sample.content.trim().to_ascii_lowercase().starts_with("true") {
                        trues += 1;
                    }
                }
                trues as f64 / PROBE_SAMPLE_FALLBACK as f64
            }
        });
    }

    let record = TraceRecord {
        query_id: item.query_id.clone(),
        model_id: config.model_id.clone(),
        role,
        correct,
        latency_seconds: answer.latency_seconds + probe_latency,
        cost_usd: answer_cost + probe_cost,
        output_tokens: answer.usage.completion_tokens,
        p_true,
    };
    record.validate(0)?;
    Ok(CollectedRecord {
        answer_latency_seconds: answer.latency_seconds,
        probe_latency_seconds: probe_latency,
        answer_cost_usd: answer_cost,
        probe_cost_usd: probe_cost,
        answer_parse_failed: extracted.is_none(),
        extracted_answer: extracted,
        record,
    })
}
