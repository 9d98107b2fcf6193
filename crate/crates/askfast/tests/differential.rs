//! Property-based differential tests: the optimized simulator against the
//! naive per-record reference, plus the structural invariants of the trace
//! model. If they disagree, the reference is right.

use std::collections::HashSet;

use proptest::prelude::*;

use askfast::calibrate::{calibrate_ask, calibrate_ffoa, empirical_quantile};
use askfast::cascade::{nr_action, simulate_ask, simulate_ffoa, Action, Route};
use askfast::synth::{oracle_simulate_ask, oracle_simulate_ffoa};
use askfast::trace::{
    join, JoinedRecord, ModelRole, NonReasoningRun, ReasoningRun, Trace, TraceMetadata,
    TraceRecord,
};

fn arb_joined_record(idx: usize) -> impl Strategy<Value = JoinedRecord> {
    (
        0u32..=20,
        1u64..3000,
        any::<bool>(),
        any::<bool>(),
        0.0f64..50.0,
        0.0f64..400.0,
        0.0f64..0.02,
        0.0f64..0.2,
    )
        .prop_map(
            move |(p_step, r_tokens, nr_correct, r_correct, nr_lat, r_lat, nr_cost, r_cost)| {
                JoinedRecord {
                    query_id: format!("q{idx:04}"),
                    nr: NonReasoningRun {
                        correct: nr_correct,
                        latency_seconds: nr_lat,
                        cost_usd: nr_cost,
                        output_tokens: 50,
                        // Coarse grid keeps tie handling under test.
                        p_true: p_step as f64 / 20.0,
                    },
                    r: ReasoningRun {
                        correct: r_correct,
                        latency_seconds: r_lat,
                        cost_usd: r_cost,
                        output_tokens: r_tokens,
                    },
                }
            },
        )
}

fn arb_trace() -> impl Strategy<Value = Trace> {
    (1usize..48)
        .prop_flat_map(|n| {
            (0..n)
                .map(arb_joined_record)
                .collect::<Vec<_>>()
        })
        .prop_map(|records| Trace {
            records,
            metadata: TraceMetadata {
                nr_model_id: "nr".into(),
                r_model_id: "r".into(),
                source: "proptest".into(),
            },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn ask_simulator_matches_reference(trace in arb_trace(), r in 0.0f64..0.8) {
        let policy = calibrate_ask(&trace, r).unwrap();
        let fast = simulate_ask(&trace, &policy).unwrap();
        let reference = oracle_simulate_ask(&trace, &policy).unwrap();
        prop_assert_eq!(fast, reference);
    }

    #[test]
    fn ffoa_simulator_matches_reference(
        trace in arb_trace(),
        u in 0.0f64..=1.0,
        r in 0.0f64..0.8,
    ) {
        let Ok(config) = calibrate_ffoa(&trace, u, r) else {
            // Infeasible draws (e.g. empty pass set below u = 1) are skipped.
            return Ok(());
        };
        let fast = simulate_ffoa(&trace, &config).unwrap();
        let reference = oracle_simulate_ffoa(&trace, &config).unwrap();
        prop_assert_eq!(&fast, &reference);

        // Partition: exactly one outcome per query, in input order.
        prop_assert_eq!(fast.len(), trace.records.len());
        for (outcome, rec) in fast.iter().zip(&trace.records) {
            prop_assert_eq!(&outcome.query_id, &rec.query_id);
            prop_assert_eq!(outcome.counted_correct.is_some(), outcome.route.is_answered());
            // Latency/cost additivity along the taken path, exact.
            let (want_latency, want_cost) = match outcome.route {
                Route::NrAnswer | Route::HumanViaFailFast => {
                    (rec.nr.latency_seconds, rec.nr.cost_usd)
                }
                Route::RAnswer | Route::HumanViaReasoning => (
                    rec.nr.latency_seconds + rec.r.latency_seconds,
                    rec.nr.cost_usd + rec.r.cost_usd,
                ),
            };
            prop_assert_eq!(outcome.latency_seconds, want_latency);
            prop_assert_eq!(outcome.cost_usd, want_cost);
        }
    }

    #[test]
    fn routing_is_monotone_in_confidence(
        trace in arb_trace(),
        u in 0.0f64..=1.0,
        r in 0.0f64..0.5,
        p_lo in 0.0f64..=1.0,
        p_hi in 0.0f64..=1.0,
    ) {
        let Ok(config) = calibrate_ffoa(&trace, u, r) else { return Ok(()) };
        let (lo, hi) = if p_lo <= p_hi { (p_lo, p_hi) } else { (p_hi, p_lo) };
        let (a_lo, a_hi) = (nr_action(lo, &config), nr_action(hi, &config));
        prop_assert!(a_lo <= a_hi, "{a_lo:?} then {a_hi:?} for {lo} <= {hi}");
        let _ = Action::FailFast; // ordering: FailFast < Pass < Respond
    }

    #[test]
    fn trace_record_serde_round_trip(
        query_id in "[a-z0-9_-]{1,12}",
        model_id in "[a-z0-9./-]{1,16}",
        reasoning in any::<bool>(),
        correct in any::<bool>(),
        latency in 0.0f64..1e5,
        cost in 0.0f64..100.0,
        tokens in 0u64..10_000_000,
        p_true in proptest::option::of(0.0f64..=1.0),
    ) {
        let record = TraceRecord {
            query_id,
            model_id,
            role: if reasoning { ModelRole::Reasoning } else { ModelRole::NonReasoning },
            correct,
            latency_seconds: latency,
            cost_usd: cost,
            output_tokens: tokens,
            p_true,
        };
        let line = serde_json::to_string(&record).unwrap();
        let back: TraceRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(record, back);
    }

    #[test]
    fn join_size_is_the_id_intersection(
        nr_ids in proptest::collection::hash_set(0u16..60, 1..40),
        r_ids in proptest::collection::hash_set(0u16..60, 1..40),
    ) {
        let make = |id: u16, role: ModelRole| TraceRecord {
            query_id: format!("q{id}"),
            model_id: "m".into(),
            role,
            correct: true,
            latency_seconds: 1.0,
            cost_usd: 0.0,
            output_tokens: 1,
            p_true: matches!(role, ModelRole::NonReasoning).then_some(0.5),
        };
        let nr: Vec<_> = nr_ids.iter().map(|&i| make(i, ModelRole::NonReasoning)).collect();
        let r: Vec<_> = r_ids.iter().map(|&i| make(i, ModelRole::Reasoning)).collect();
        let expected: HashSet<u16> = nr_ids.intersection(&r_ids).copied().collect();
        match join(&nr, &r) {
            Ok((trace, report)) => {
                prop_assert_eq!(trace.len(), expected.len());
                prop_assert_eq!(report.matched, expected.len());
                prop_assert_eq!(report.unmatched_nr, nr.len() - expected.len());
                prop_assert_eq!(report.unmatched_r, r.len() - expected.len());
            }
            Err(_) => prop_assert!(expected.is_empty(), "join may only fail when disjoint"),
        }
    }

    #[test]
    fn quantile_is_monotone_in_level(
        values in proptest::collection::vec(-1e6f64..1e6, 1..50),
        q1 in 0.0f64..=1.0,
        q2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let v_lo = empirical_quantile(&values, lo).unwrap();
        let v_hi = empirical_quantile(&values, hi).unwrap();
        prop_assert!(v_lo <= v_hi);
        prop_assert!(values.contains(&v_lo) && values.contains(&v_hi));
    }

    #[test]
    fn calibrated_ask_rejection_never_exceeds_target(
        trace in arb_trace(),
        r in 0.0f64..0.9,
    ) {
        let policy = calibrate_ask(&trace, r).unwrap();
        let rejected = trace
            .records
            .iter()
            .filter(|j| j.r.output_tokens > policy.token_threshold)
            .count();
        prop_assert!(rejected as f64 <= r * trace.len() as f64 + 1e-9);
    }
}
