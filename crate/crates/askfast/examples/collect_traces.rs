//! Collect real trace records from an OpenAI-compatible endpoint. Requires
//! environment configuration; prints instructions and exits when unset.
//!
//! ```bash
//! export ASKFAST_BASE_URL=https://api.example.com/v1
//! export ASKFAST_MODEL=some-model-id
//! export OPENAI_API_KEY=...
//! cargo run --example collect_traces -- dataset.jsonl out.jsonl
//! ```
//!
//! The dataset is JSONL with query_id, question, and a numeric gold_answer
//! per line. Pass `--probe` as a trailing argument to attach the
//! confidence probe (for the non-reasoning model).

use askfast::collector::{collect, CollectOptions, EndpointConfig, PricingConfig};
use askfast::trace::ModelRole;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (Ok(base_url), Ok(model_id)) = (
        std::env::var("ASKFAST_BASE_URL"),
        std::env::var("ASKFAST_MODEL"),
    ) else {
        eprintln!("set ASKFAST_BASE_URL, ASKFAST_MODEL, and OPENAI_API_KEY first;");
        eprintln!("see the module docs at the top of this example for a walkthrough");
        return Ok(());
    };

    let args: Vec<String> = std::env::args().skip(1).collect();
    let dataset_path = args.first().map(String::as_str).unwrap_or("dataset.jsonl");
    let out_path = args.get(1).map(String::as_str).unwrap_or("collected.jsonl");
    let probe = args.iter().any(|a| a == "--probe");

    let config = EndpointConfig {
        base_url,
        model_id,
        api_key_env: "OPENAI_API_KEY".into(),
        timeout_seconds: 300.0,
        max_in_flight: 4,
        max_retries: 3,
        backoff_base_seconds: 0.5,
        backoff_jitter_seconds: 0.25,
        pricing: PricingConfig {
            usd_per_1m_input_tokens: std::env::var("ASKFAST_PRICE_IN")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(1.0),
            usd_per_1m_output_tokens: std::env::var("ASKFAST_PRICE_OUT")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(3.0),
        },
    };

    let items = askfast::collector::load_dataset(std::path::Path::new(dataset_path))?;
    let role = if probe {
        ModelRole::NonReasoning
    } else {
        ModelRole::Reasoning
    };
    let options = CollectOptions::new(role, probe, out_path.into());

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let (records, summary) = runtime.block_on(collect(&items, &config, &options))?;

    println!(
        "collected {} records ({} skipped as already present, {} failed)",
        summary.collected, summary.skipped, summary.failed
    );
    if let Some(first) = records.first() {
        println!("example record: {}", serde_json::to_string(first)?);
    }
    println!("output appended to {out_path}; failures (if any) beside it");
    Ok(())
}
