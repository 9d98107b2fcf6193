//! Trace data model: per-model run records, JSONL ingestion, and the
//! query-aligned join that downstream calibration and simulation consume.
//!
//! Wire format is JSONL, one record per line, snake_case field names.
//! Unknown fields are ignored so collectors can attach auxiliary data.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two cascade positions a model plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Reasoning,
    NonReasoning,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRole::Reasoning => f.write_str("reasoning"),
            ModelRole::NonReasoning => f.write_str("non_reasoning"),
        }
    }
}

/// One model run on one query.
///
/// `latency_seconds` for a non-reasoning model includes any confidence-probe
/// latency; the collector records the components separately and sums them
/// here. `output_tokens` stores whatever completion-token count the provider
/// reports, which may or may not include hidden reasoning tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub query_id: String,
    pub model_id: String,
    pub role: ModelRole,
    pub correct: bool,
    pub latency_seconds: f64,
    pub cost_usd: f64,
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_true: Option<f64>,
}

impl TraceRecord {
    /// Check the record's value-range invariants. `line` feeds error reports.
    pub fn validate(&self, line: usize) -> Result<()> {
        if self.query_id.is_empty() {
            return Err(Error::OutOfRange {
                line,
                field: "query_id",
                message: "must be nonempty".into(),
            });
        }
        if !self.latency_seconds.is_finite() || self.latency_seconds < 0.0 {
            return Err(Error::OutOfRange {
                line,
                field: "latency_seconds",
                message: format!("{} is not finite and nonnegative", self.latency_seconds),
            });
        }
        if !self.cost_usd.is_finite() || self.cost_usd < 0.0 {
            return Err(Error::OutOfRange {
                line,
                field: "cost_usd",
                message: format!("{} is not finite and nonnegative", self.cost_usd),
            });
        }
        if let Some(p) = self.p_true {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::OutOfRange {
                    line,
                    field: "p_true",
                    message: format!("{p} is not in [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// Non-reasoning side of a joined record. Confidence is mandatory here:
/// the fronting policy cannot act without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonReasoningRun {
    pub correct: bool,
    pub latency_seconds: f64,
    pub cost_usd: f64,
    pub output_tokens: u64,
    pub p_true: f64,
}

/// Reasoning side of a joined record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningRun {
    pub correct: bool,
    pub latency_seconds: f64,
    pub cost_usd: f64,
    pub output_tokens: u64,
}

/// Both model runs for a single query, aligned on `query_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRecord {
    pub query_id: String,
    pub nr: NonReasoningRun,
    pub r: ReasoningRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub nr_model_id: String,
    pub r_model_id: String,
    pub source: String,
}

/// An ordered collection of joined records with unique query ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<JoinedRecord>,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Error if the trace is empty; calibration and simulation require data.
    pub fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyTrace)
        } else {
            Ok(())
        }
    }
}

/// Counts reported alongside a join: how many ids matched and how many were
/// dropped from each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub matched: usize,
    pub unmatched_nr: usize,
    pub unmatched_r: usize,
}

/// Read and validate one JSONL file of per-model runs.
///
/// Every line must parse into a [`TraceRecord`] with `role` equal to the
/// expected one; line numbers are preserved in all error reports. Blank
/// lines are skipped. An empty file yields an empty list.
pub fn ingest(path: &Path, role: ModelRole) -> Result<Vec<TraceRecord>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(BufReader::new(file), role)
}

/// Same as [`ingest`] but over any buffered reader.
pub fn ingest_reader<R: BufRead>(reader: R, role: ModelRole) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: format!("<line {line_no}>"),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate(line_no)?;
        if record.role != role {
            return Err(Error::RoleMismatch {
                line: line_no,
                expected: role.to_string(),
                found: record.role.to_string(),
            });
        }
        let key = (record.query_id.clone(), record.model_id.clone());
        if !seen.insert(key) {
            return Err(Error::DuplicateRecord {
                line: line_no,
                query_id: record.query_id,
                model_id: record.model_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Append records to a JSONL file, one line each.
pub fn write_jsonl(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    for record in records {
        let line = serde_json::to_string(record).expect("trace record serializes");
        writeln!(file, "{line}").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Inner-join non-reasoning and reasoning runs on `query_id`.
///
/// Output order follows `nr_records`. Duplicate ids within either side are
/// hard errors: silent dedup would corrupt empirical rates. An empty join
/// result is also an error.
pub fn join(
    nr_records: &[TraceRecord],
    r_records: &[TraceRecord],
) -> Result<(Trace, JoinReport)> {
    let mut nr_ids = HashSet::new();
    for rec in nr_records {
        if !nr_ids.insert(rec.query_id.as_str()) {
            return Err(Error::DuplicateQueryId {
                query_id: rec.query_id.clone(),
                side: "non-reasoning",
            });
        }
    }
    let mut r_by_id = std::collections::HashMap::new();
    for rec in r_records {
        if r_by_id.insert(rec.query_id.as_str(), rec).is_some() {
            return Err(Error::DuplicateQueryId {
                query_id: rec.query_id.clone(),
                side: "reasoning",
            });
        }
    }

    let mut records = Vec::new();
    for nr in nr_records {
        let Some(r) = r_by_id.get(nr.query_id.as_str()) else {
            continue;
        };
        let p_true = nr.p_true.ok_or_else(|| Error::MissingPTrue {
            query_id: nr.query_id.clone(),
        })?;
        records.push(JoinedRecord {
            query_id: nr.query_id.clone(),
            nr: NonReasoningRun {
                correct: nr.correct,
                latency_seconds: nr.latency_seconds,
                cost_usd: nr.cost_usd,
                output_tokens: nr.output_tokens,
                p_true,
            },
            r: ReasoningRun {
                correct: r.correct,
                latency_seconds: r.latency_seconds,
                cost_usd: r.cost_usd,
                output_tokens: r.output_tokens,
            },
        });
    }

    if records.is_empty() {
        return Err(Error::EmptyJoin);
    }

    let report = JoinReport {
        matched: records.len(),
        unmatched_nr: nr_records.len() - records.len(),
        unmatched_r: r_records.len() - records.len(),
    };
    let metadata = TraceMetadata {
        nr_model_id: nr_records[0].model_id.clone(),
        r_model_id: r_records[0].model_id.clone(),
        source: "join".into(),
    };
    Ok((Trace { records, metadata }, report))
}

/// File names used by the CLI for a trace directory.
pub const NR_TRACE_FILE: &str = "trace_nr.jsonl";
pub const R_TRACE_FILE: &str = "trace_r.jsonl";

/// Load `trace_nr.jsonl` and `trace_r.jsonl` from a directory and join them.
pub fn load_trace_dir(dir: &Path) -> Result<(Trace, JoinReport)> {
    let nr = ingest(&dir.join(NR_TRACE_FILE), ModelRole::NonReasoning)?;
    let r = ingest(&dir.join(R_TRACE_FILE), ModelRole::Reasoning)?;
    let (mut trace, report) = join(&nr, &r)?;
    trace.metadata.source = dir.display().to_string();
    Ok((trace, report))
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn record_line() -> &'static str {
        r#"{"query_id":"q1","model_id":"m","role":"reasoning","correct":true,"latency_seconds":1.5,"cost_usd":0.001,"output_tokens":100}"#
    }

    #[test]
    fn ingest_parses_a_valid_line() {
        let records =
            ingest_reader(Cursor::new(record_line()), ModelRole::Reasoning).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.query_id, "q1");
        assert_eq!(r.model_id, "m");
        assert_eq!(r.role, ModelRole::Reasoning);
        assert!(r.correct);
        assert_eq!(r.latency_seconds, 1.5);
        assert_eq!(r.cost_usd, 0.001);
        assert_eq!(r.output_tokens, 100);
        assert_eq!(r.p_true, None);
    }

    #[test]
    fn ingest_rejects_out_of_range_p_true_with_line_number() {
        let input = format!(
            "{}\n{}",
            record_line().replace("\"q1\"", "\"q0\""),
            r#"{"query_id":"q1","model_id":"m","role":"reasoning","correct":true,"latency_seconds":1.5,"cost_usd":0.001,"output_tokens":100,"p_true":1.2}"#
        );
        let err = ingest_reader(Cursor::new(input), ModelRole::Reasoning).unwrap_err();
        match err {
            Error::OutOfRange { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "p_true");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_empty_file_yields_empty_list() {
        let records = ingest_reader(Cursor::new(""), ModelRole::Reasoning).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn ingest_reports_malformed_json_line() {
        let input = format!("{}\nnot json", record_line());
        let err = ingest_reader(Cursor::new(input), ModelRole::Reasoning).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_missing_field() {
        let input = r#"{"query_id":"q1","model_id":"m","role":"reasoning","correct":true}"#;
        let err = ingest_reader(Cursor::new(input), ModelRole::Reasoning).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("missing field"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_duplicate_query_model_pair() {
        let input = format!("{}\n{}", record_line(), record_line());
        let err = ingest_reader(Cursor::new(input), ModelRole::Reasoning).unwrap_err();
        assert!(matches!(err, Error::DuplicateRecord { line: 2, .. }));
    }

    #[test]
    fn ingest_rejects_role_mismatch() {
        let err =
            ingest_reader(Cursor::new(record_line()), ModelRole::NonReasoning).unwrap_err();
        assert!(matches!(err, Error::RoleMismatch { line: 1, .. }));
    }

    #[test]
    fn ingest_ignores_unknown_fields() {
        let input = record_line().replace(
            "\"output_tokens\":100}",
            "\"output_tokens\":100,\"extra_field\":\"kept upstream\"}",
        );
        let records = ingest_reader(Cursor::new(input), ModelRole::Reasoning).unwrap();
        assert_eq!(records.len(), 1);
    }

    fn nr(id: &str, p_true: f64) -> TraceRecord {
        TraceRecord {
            query_id: id.into(),
            model_id: "nrm".into(),
            role: ModelRole::NonReasoning,
            correct: true,
            latency_seconds: 1.0,
            cost_usd: 0.001,
            output_tokens: 10,
            p_true: Some(p_true),
        }
    }

    fn rr(id: &str) -> TraceRecord {
        TraceRecord {
            query_id: id.into(),
            model_id: "rm".into(),
            role: ModelRole::Reasoning,
            correct: true,
            latency_seconds: 10.0,
            cost_usd: 0.01,
            output_tokens: 1000,
            p_true: None,
        }
    }

    #[test]
    fn join_intersects_and_counts_unmatched() {
        let nrs = vec![nr("a", 0.5), nr("b", 0.6), nr("c", 0.7)];
        let rs = vec![rr("b"), rr("c"), rr("d")];
        let (trace, report) = join(&nrs, &rs).unwrap();
        let ids: Vec<_> = trace.records.iter().map(|j| j.query_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c"]);
        assert_eq!(
            report,
            JoinReport {
                matched: 2,
                unmatched_nr: 1,
                unmatched_r: 1
            }
        );
    }

    #[test]
    fn join_rejects_duplicate_ids() {
        let nrs = vec![nr("a", 0.5), nr("a", 0.6)];
        let rs = vec![rr("a")];
        let err = join(&nrs, &rs).unwrap_err();
        assert!(matches!(err, Error::DuplicateQueryId { side: "non-reasoning", .. }));
    }

    #[test]
    fn join_identical_id_sets_is_identity_sized() {
        let nrs: Vec<_> = (0..5).map(|i| nr(&format!("q{i}"), 0.5)).collect();
        let rs: Vec<_> = (0..5).map(|i| rr(&format!("q{i}"))).collect();
        let (trace, report) = join(&nrs, &rs).unwrap();
        assert_eq!(trace.len(), 5);
        assert_eq!(report.unmatched_nr, 0);
        assert_eq!(report.unmatched_r, 0);
    }

    #[test]
    fn join_requires_p_true_on_nr_side() {
        let mut bad = nr("a", 0.5);
        bad.p_true = None;
        let err = join(&[bad], &[rr("a")]).unwrap_err();
        assert!(matches!(err, Error::MissingPTrue { .. }));
    }

    #[test]
    fn join_empty_result_is_an_error() {
        let err = join(&[nr("a", 0.5)], &[rr("b")]).unwrap_err();
        assert!(matches!(err, Error::EmptyJoin));
    }
}
