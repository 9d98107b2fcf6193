//! Per-query routing of joined records through the two systems, with
//! latency and cost accounting along the path each query actually took.
//!
//! Human routes carry no counted correctness: the expert is treated as a
//! perfect, instant oracle, so deferral is accounted like rejection in
//! selective prediction, not as an answer. Queries deferred by the
//! token-length test still pay the reasoning model's latency and cost: the
//! signal is the model's own output length, observable only after it ran.

use serde::{Deserialize, Serialize};

use crate::calibrate::{AskPolicy, PolicyConfig};
use crate::error::{Error, Result};
use crate::trace::Trace;

/// Non-reasoning model's action on a query. Ordered by escalating
/// confidence: fail_fast < pass < respond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    FailFast,
    Pass,
    Respond,
}

/// Terminal destination of a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    NrAnswer,
    RAnswer,
    HumanViaFailFast,
    HumanViaReasoning,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::NrAnswer => "nr_answer",
            Route::RAnswer => "r_answer",
            Route::HumanViaFailFast => "human_via_fail_fast",
            Route::HumanViaReasoning => "human_via_reasoning",
        }
    }

    /// Machine answered (correctness counts toward conditional accuracy).
    pub fn is_answered(&self) -> bool {
        matches!(self, Route::NrAnswer | Route::RAnswer)
    }

    /// Query reached the human expert by either route.
    pub fn is_rejected(&self) -> bool {
        !self.is_answered()
    }
}

/// Routed result for one query. `counted_correct` is present exactly on
/// machine-answered routes. Latency and cost sum the model runs actually
/// incurred on the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub query_id: String,
    pub route: Route,
    pub counted_correct: Option<bool>,
    pub latency_seconds: f64,
    pub cost_usd: f64,
}

/// Threshold comparisons shared by action selection and calibration.
/// Directions: fail fast iff p <= c_fail_fast; pass iff p <= c_pass
/// (and not fail fast); respond otherwise.
pub(crate) fn action_for(p_true: f64, c_fail_fast: Option<f64>, c_pass: f64) -> Action {
    if let Some(c_ff) = c_fail_fast {
        if p_true <= c_ff {
            return Action::FailFast;
        }
    }
    if p_true <= c_pass {
        Action::Pass
    } else {
        Action::Respond
    }
}

/// Non-reasoning model's action under a calibrated config.
pub fn nr_action(p_true: f64, config: &PolicyConfig) -> Action {
    action_for(p_true, config.c_fail_fast, config.c_pass)
}

/// Route every query through the reasoning-model-plus-human system.
///
/// The reasoning model answers when its output stayed at or under the token
/// threshold, otherwise the query is deferred. Both routes pay the
/// reasoning model's latency and cost.
pub fn simulate_ask(trace: &Trace, policy: &AskPolicy) -> Result<Vec<Outcome>> {
    trace.require_nonempty()?;
    Ok(trace
        .records
        .iter()
        .map(|rec| {
            let answered = rec.r.output_tokens <= policy.token_threshold;
            Outcome {
                query_id: rec.query_id.clone(),
                route: if answered {
                    Route::RAnswer
                } else {
                    Route::HumanViaReasoning
                },
                counted_correct: answered.then_some(rec.r.correct),
                latency_seconds: rec.r.latency_seconds,
                cost_usd: rec.r.cost_usd,
            }
        })
        .collect())
}

/// Route every query through the fronted system.
///
/// respond: non-reasoning model answers, paying only its own run.
/// fail fast: straight to the human, paying only the non-reasoning run.
/// pass: the reasoning model runs too (both latencies and costs accrue),
/// then the token test decides between answering and deferring.
pub fn simulate_ffoa(trace: &Trace, config: &PolicyConfig) -> Result<Vec<Outcome>> {
    trace.require_nonempty()?;
    Ok(trace
        .records
        .iter()
        .map(|rec| match nr_action(rec.nr.p_true, config) {
            Action::Respond => Outcome {
                query_id: rec.query_id.clone(),
                route: Route::NrAnswer,
                counted_correct: Some(rec.nr.correct),
                latency_seconds: rec.nr.latency_seconds,
                cost_usd: rec.nr.cost_usd,
            },
            Action::FailFast => Outcome {
                query_id: rec.query_id.clone(),
                route: Route::HumanViaFailFast,
                counted_correct: None,
                latency_seconds: rec.nr.latency_seconds,
                cost_usd: rec.nr.cost_usd,
            },
            Action::Pass => {
                let answered = rec.r.output_tokens <= config.r_token_threshold;
                Outcome {
                    query_id: rec.query_id.clone(),
                    route: if answered {
                        Route::RAnswer
                    } else {
                        Route::HumanViaReasoning
                    },
                    counted_correct: answered.then_some(rec.r.correct),
                    latency_seconds: rec.nr.latency_seconds + rec.r.latency_seconds,
                    cost_usd: rec.nr.cost_usd + rec.r.cost_usd,
                }
            }
        })
        .collect())
}

/// Realized routing fractions over a set of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRates {
    /// Fraction resolved without the reasoning model (1 - pass_rate).
    pub utilization: f64,
    pub fail_fast_rate: f64,
    /// Fraction that reached the reasoning model by either outcome.
    pub pass_rate: f64,
    /// Fraction that reached the human by either route.
    pub rejection_rate: f64,
}

/// Count realized rates from outcomes. Rejection counts both human routes;
/// pass counts routes that involved the reasoning model.
pub fn realized_rates(outcomes: &[Outcome]) -> Result<SystemRates> {
    if outcomes.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = outcomes.len() as f64;
    let mut fail_fast = 0usize;
    let mut passed = 0usize;
    let mut rejected = 0usize;
    for o in outcomes {
        match o.route {
            Route::NrAnswer => {}
            Route::RAnswer => passed += 1,
            Route::HumanViaFailFast => {
                fail_fast += 1;
                rejected += 1;
            }
            Route::HumanViaReasoning => {
                passed += 1;
                rejected += 1;
            }
        }
    }
    let pass_rate = passed as f64 / n;
    Ok(SystemRates {
        utilization: 1.0 - pass_rate,
        fail_fast_rate: fail_fast as f64 / n,
        pass_rate,
        rejection_rate: rejected as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{calibrate_ask, calibrate_ffoa, RealizedRates};
    use crate::trace::test_fixtures::{trace_from, with_p_true_and_tokens};
    use crate::trace::{JoinedRecord, NonReasoningRun, ReasoningRun};

    fn config(c_ff: Option<f64>, c_pass: f64) -> PolicyConfig {
        PolicyConfig {
            utilization: 0.5,
            target_rejection: 0.1,
            c_fail_fast: c_ff,
            c_pass,
            r_token_threshold: 1000,
            realized: RealizedRates {
                fail_fast_rate: 0.0,
                pass_rate: 0.0,
                respond_rate: 1.0,
            },
        }
    }

    #[test]
    fn action_thresholding_cases() {
        let cfg = config(Some(0.20), 0.70);
        assert_eq!(nr_action(0.10, &cfg), Action::FailFast);
        assert_eq!(nr_action(0.50, &cfg), Action::Pass);
        assert_eq!(nr_action(0.90, &cfg), Action::Respond);
        // Boundary: comparisons are inclusive on the left thresholds.
        assert_eq!(nr_action(0.20, &cfg), Action::FailFast);
        assert_eq!(nr_action(0.70, &cfg), Action::Pass);
        // Absent c_fail_fast never fails fast.
        let cfg = config(None, 0.70);
        assert_eq!(nr_action(0.0, &cfg), Action::Pass);
    }

    #[test]
    fn action_is_monotone_in_p_true() {
        let cfg = config(Some(0.3), 0.6);
        let mut prev = Action::FailFast;
        for i in 0..=100 {
            let action = nr_action(i as f64 / 100.0, &cfg);
            assert!(action >= prev, "raising p_true never de-escalates");
            prev = action;
        }
    }

    fn record(
        id: &str,
        p_true: f64,
        r_tokens: u64,
        nr_correct: bool,
        r_correct: bool,
    ) -> JoinedRecord {
        JoinedRecord {
            query_id: id.into(),
            nr: NonReasoningRun {
                correct: nr_correct,
                latency_seconds: 2.0,
                cost_usd: 0.002,
                output_tokens: 40,
                p_true,
            },
            r: ReasoningRun {
                correct: r_correct,
                latency_seconds: 30.0,
                cost_usd: 0.03,
                output_tokens: r_tokens,
            },
        }
    }

    #[test]
    fn ask_routes_on_token_threshold() {
        let trace = trace_from(vec![
            record("a", 0.5, 900, true, true),
            record("b", 0.5, 1200, true, true),
        ]);
        let policy = AskPolicy {
            token_threshold: 1000,
            target_rejection: 0.2,
        };
        let outcomes = simulate_ask(&trace, &policy).unwrap();
        assert_eq!(outcomes[0].route, Route::RAnswer);
        assert_eq!(outcomes[0].counted_correct, Some(true));
        assert_eq!(outcomes[0].latency_seconds, 30.0);
        assert_eq!(outcomes[0].cost_usd, 0.03);
        assert_eq!(outcomes[1].route, Route::HumanViaReasoning);
        assert_eq!(outcomes[1].counted_correct, None);
        // Deferred queries still pay the reasoning run.
        assert_eq!(outcomes[1].latency_seconds, 30.0);
        assert_eq!(outcomes[1].cost_usd, 0.03);
    }

    #[test]
    fn ask_calibrated_at_point_eight_defers_the_max_token_record() {
        let trace = with_p_true_and_tokens(&[
            (0.1, 100),
            (0.3, 200),
            (0.5, 300),
            (0.7, 400),
            (0.9, 500),
        ]);
        let policy = calibrate_ask(&trace, 0.2).unwrap();
        let outcomes = simulate_ask(&trace, &policy).unwrap();
        let deferred: Vec<_> = outcomes
            .iter()
            .filter(|o| o.route == Route::HumanViaReasoning)
            .map(|o| o.query_id.as_str())
            .collect();
        assert_eq!(deferred, vec!["q0004"], "exactly the max-token record");
    }

    #[test]
    fn ffoa_latency_and_cost_follow_the_path() {
        let trace = trace_from(vec![
            record("respond", 0.9, 100, true, true),
            record("pass", 0.5, 100, true, true),
            record("failfast", 0.1, 100, true, true),
            record("pass-defer", 0.5, 5000, true, true),
        ]);
        let cfg = config(Some(0.2), 0.7);
        let outcomes = simulate_ffoa(&trace, &cfg).unwrap();

        assert_eq!(outcomes[0].route, Route::NrAnswer);
        assert_eq!(outcomes[0].latency_seconds, 2.0);
        assert_eq!(outcomes[0].cost_usd, 0.002);

        assert_eq!(outcomes[1].route, Route::RAnswer);
        assert_eq!(outcomes[1].latency_seconds, 32.0);
        assert_eq!(outcomes[1].cost_usd, 0.032);

        assert_eq!(outcomes[2].route, Route::HumanViaFailFast);
        assert_eq!(outcomes[2].counted_correct, None);
        assert_eq!(outcomes[2].latency_seconds, 2.0);

        assert_eq!(outcomes[3].route, Route::HumanViaReasoning);
        assert_eq!(outcomes[3].counted_correct, None);
        assert_eq!(outcomes[3].latency_seconds, 32.0);
    }

    #[test]
    fn ffoa_at_u_zero_matches_ask_routing() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..50);
            let rows: Vec<(f64, u64)> = (0..n)
                .map(|_| (rng.gen::<f64>(), rng.gen_range(10..3000)))
                .collect();
            let trace = with_p_true_and_tokens(&rows);
            let r = rng.gen_range(0.0..0.5);
            let cfg = calibrate_ffoa(&trace, 0.0, r).unwrap();
            let ask = calibrate_ask(&trace, r).unwrap();
            let ffoa_outcomes = simulate_ffoa(&trace, &cfg).unwrap();
            let ask_outcomes = simulate_ask(&trace, &ask).unwrap();
            for (f, a) in ffoa_outcomes.iter().zip(&ask_outcomes) {
                assert_eq!(f.route, a.route);
                assert_eq!(f.counted_correct, a.counted_correct);
                // Fronting adds the nr run to every query.
                assert_eq!(f.latency_seconds, a.latency_seconds + 1.0);
                assert_eq!(f.cost_usd, a.cost_usd + 0.001);
            }
        }
    }

    #[test]
    fn realized_rates_counting() {
        let mut outcomes = Vec::new();
        let make = |route: Route| Outcome {
            query_id: "q".into(),
            route,
            counted_correct: route.is_answered().then_some(true),
            latency_seconds: 1.0,
            cost_usd: 0.1,
        };
        outcomes.extend(std::iter::repeat_with(|| make(Route::NrAnswer)).take(45));
        outcomes.extend(std::iter::repeat_with(|| make(Route::HumanViaFailFast)).take(5));
        outcomes.extend(std::iter::repeat_with(|| make(Route::RAnswer)).take(45));
        outcomes.extend(std::iter::repeat_with(|| make(Route::HumanViaReasoning)).take(5));
        let rates = realized_rates(&outcomes).unwrap();
        assert_eq!(rates.utilization, 0.50);
        assert_eq!(rates.fail_fast_rate, 0.05);
        assert_eq!(rates.pass_rate, 0.50);
        assert_eq!(rates.rejection_rate, 0.10);

        let all_nr: Vec<_> = (0..10).map(|_| make(Route::NrAnswer)).collect();
        let rates = realized_rates(&all_nr).unwrap();
        assert_eq!(rates.utilization, 1.0);
        assert_eq!(rates.rejection_rate, 0.0);

        let all_ff: Vec<_> = (0..10).map(|_| make(Route::HumanViaFailFast)).collect();
        let rates = realized_rates(&all_ff).unwrap();
        assert_eq!(rates.rejection_rate, 1.0);
    }

    #[test]
    fn rejection_decomposition_agrees_exactly_on_counts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = rng.gen_range(4..60);
            let rows: Vec<(f64, u64)> = (0..n)
                .map(|_| (rng.gen::<f64>(), rng.gen_range(10..3000)))
                .collect();
            let trace = with_p_true_and_tokens(&rows);
            let u = rng.gen_range(0.0..1.0);
            let r = rng.gen_range(0.0..0.4);
            let Ok(cfg) = calibrate_ffoa(&trace, u, r) else {
                continue;
            };
            let outcomes = simulate_ffoa(&trace, &cfg).unwrap();
            let ff = outcomes
                .iter()
                .filter(|o| o.route == Route::HumanViaFailFast)
                .count();
            let deferred_among_passed = outcomes
                .iter()
                .filter(|o| o.route == Route::HumanViaReasoning)
                .count();
            let rejected = outcomes.iter().filter(|o| o.route.is_rejected()).count();
            assert_eq!(rejected, ff + deferred_among_passed);
        }
    }

    #[test]
    fn outcome_latency_totals_are_path_weighted_sums() {
        let trace = with_p_true_and_tokens(&[
            (0.05, 100),
            (0.2, 100),
            (0.5, 100),
            (0.8, 100),
            (0.95, 100),
        ]);
        let cfg = calibrate_ffoa(&trace, 0.4, 0.25).unwrap();
        let outcomes = simulate_ffoa(&trace, &cfg).unwrap();
        for (o, rec) in outcomes.iter().zip(&trace.records) {
            let expected = match o.route {
                Route::NrAnswer | Route::HumanViaFailFast => rec.nr.latency_seconds,
                Route::RAnswer | Route::HumanViaReasoning => {
                    rec.nr.latency_seconds + rec.r.latency_seconds
                }
            };
            assert_eq!(o.latency_seconds, expected);
        }
    }
}
