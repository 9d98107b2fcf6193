//! Threshold calibration: empirical quantiles over observed traces, and the
//! translation of (utilization u, target rejection r) into concrete
//! confidence and token-count thresholds for both systems.
//!
//! Quantiles use the lower order statistic with no interpolation, so every
//! threshold is a value that was actually observed. Index arithmetic applies
//! a 1e-9 absolute slack before ceiling/flooring so that real-valued ties
//! like 0.8 * 5 = 4 survive IEEE rounding.

use serde::{Deserialize, Serialize};

use crate::cascade::{action_for, Action};
use crate::error::{Error, Result};
use crate::trace::Trace;

/// Absolute slack applied to index arithmetic before rounding, so that
/// decimal inputs behave like their real-number values.
const TIE_EPS: f64 = 1e-9;

/// Sentinel meaning "answer everything": no observed token count exceeds it.
pub const ANSWER_ALL_TOKENS: u64 = u64::MAX;

/// Sentinel pass threshold strictly below any probability, used when the
/// pass set is calibrated to be empty (utilization 1).
pub const BELOW_ALL_CONFIDENCE: f64 = -1.0;

/// Token-threshold deferral policy for the reasoning-model-plus-human system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskPolicy {
    /// Defer to the human exactly when output_tokens > token_threshold.
    pub token_threshold: u64,
    pub target_rejection: f64,
}

/// Realized action fractions on the calibration trace. `respond_rate` is
/// derived as 1 - (fail_fast_rate + pass_rate) so the three always sum to
/// exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedRates {
    pub fail_fast_rate: f64,
    pub pass_rate: f64,
    pub respond_rate: f64,
}

/// Calibrated thresholds and targets for the fronted system.
///
/// Comparison directions: fail fast iff p <= c_fail_fast; pass iff
/// c_fail_fast < p <= c_pass; respond iff p > c_pass. An absent
/// `c_fail_fast` means the system never fails fast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub utilization: f64,
    pub target_rejection: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_fail_fast: Option<f64>,
    pub c_pass: f64,
    /// Token threshold for queries the non-reasoning model passes on,
    /// calibrated on the passed subset. [`ANSWER_ALL_TOKENS`] when the pass
    /// set is empty by construction (utilization 1).
    pub r_token_threshold: u64,
    pub realized: RealizedRates,
}

/// 1-based order-statistic index for quantile level `q` over `n` values:
/// the smallest k with k/n >= q, and 1 when q = 0.
pub fn quantile_index(q: f64, n: usize) -> usize {
    let target = q * n as f64;
    let k = (target - TIE_EPS).ceil() as i64;
    k.clamp(1, n as i64) as usize
}

/// Round half up, with tie slack: counts like 4.5 round to 5 even when
/// floating point puts them at 4.4999999999999996.
fn round_half_up(x: f64) -> usize {
    (x + 0.5 + TIE_EPS).floor().max(0.0) as usize
}

/// Empirical quantile as the lower order statistic: the smallest observed
/// value v with fraction(values <= v) >= q.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyQuantileInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "empirical_quantile input",
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParam {
            name: "q",
            value: q,
            constraint: "must lie in [0, 1]",
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    Ok(sorted[quantile_index(q, sorted.len()) - 1])
}

fn check_rejection(r: f64) -> Result<()> {
    if !r.is_finite() || !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidParam {
            name: "r",
            value: r,
            constraint: "target rejection must lie in [0, 1)",
        });
    }
    Ok(())
}

fn check_utilization(u: f64) -> Result<()> {
    if !u.is_finite() || !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParam {
            name: "u",
            value: u,
            constraint: "utilization must lie in [0, 1]",
        });
    }
    Ok(())
}

/// Calibrate the token-threshold policy: the smallest observed count T such
/// that the fraction of queries with output_tokens > T is at most r.
/// Realized rejection never exceeds the target (ties can only lower it).
pub fn calibrate_ask(trace: &Trace, r: f64) -> Result<AskPolicy> {
    check_rejection(r)?;
    trace.require_nonempty()?;
    let mut tokens: Vec<u64> = trace.records.iter().map(|j| j.r.output_tokens).collect();
    tokens.sort_unstable();
    let k = quantile_index(1.0 - r, tokens.len());
    Ok(AskPolicy {
        token_threshold: tokens[k - 1],
        target_rejection: r,
    })
}

/// Fail-fast rate implied by an overall rejection target r, a utilization u,
/// and the reasoning model's conditional rejection rate r_cond:
/// r - (1-u) * r_cond. Negative results mean the configuration is
/// infeasible and are hard errors, never clamped.
pub fn fail_fast_rate(u: f64, r: f64, r_cond: f64) -> Result<f64> {
    check_utilization(u)?;
    check_rejection(r)?;
    if !r_cond.is_finite() || !(0.0..=1.0).contains(&r_cond) {
        return Err(Error::InvalidParam {
            name: "r_cond",
            value: r_cond,
            constraint: "conditional rejection must lie in [0, 1]",
        });
    }
    let rate = r - (1.0 - u) * r_cond;
    if rate < 0.0 {
        return Err(Error::InfeasibleConfig {
            u,
            r,
            r_cond,
            rate,
        });
    }
    Ok(rate)
}

/// Calibrate the fronted system on a trace.
///
/// Counts are round-half-up: k_ff = round(fail_fast_rate(u,r,r) * n) lowest
/// confidences fail fast, the next k_pass = round((1-u) * n) pass, the rest
/// respond. The token threshold for passed queries is calibrated on the
/// passed subset at the same target r, matching the reasoning model's
/// conditional rejection rate to the system's overall one. Realized rates
/// are always reported alongside the targets.
pub fn calibrate_ffoa(trace: &Trace, u: f64, r: f64) -> Result<PolicyConfig> {
    check_utilization(u)?;
    check_rejection(r)?;
    trace.require_nonempty()?;

    let n = trace.len();
    let ff_mass = fail_fast_rate(u, r, r)?;
    let k_ff = round_half_up(ff_mass * n as f64).min(n);
    let k_pass = round_half_up((1.0 - u) * n as f64).min(n - k_ff);

    let mut sorted_p: Vec<f64> = trace.records.iter().map(|j| j.nr.p_true).collect();
    sorted_p.sort_by(|a, b| a.partial_cmp(b).expect("p_true is finite"));

    let c_fail_fast = (k_ff > 0).then(|| sorted_p[k_ff - 1]);
    let c_pass = if k_ff + k_pass == 0 {
        BELOW_ALL_CONFIDENCE
    } else {
        sorted_p[k_ff + k_pass - 1]
    };

    let mut counts = [0usize; 3];
    let mut passed_tokens: Vec<u64> = Vec::new();
    for rec in &trace.records {
        match action_for(rec.nr.p_true, c_fail_fast, c_pass) {
            Action::FailFast => counts[0] += 1,
            Action::Pass => {
                counts[1] += 1;
                passed_tokens.push(rec.r.output_tokens);
            }
            Action::Respond => counts[2] += 1,
        }
    }

    let r_token_threshold = if passed_tokens.is_empty() {
        if u < 1.0 {
            return Err(Error::EmptyPassedSubset { u });
        }
        ANSWER_ALL_TOKENS
    } else {
        passed_tokens.sort_unstable();
        let k = quantile_index(1.0 - r, passed_tokens.len());
        passed_tokens[k - 1]
    };

    let fail_fast_realized = counts[0] as f64 / n as f64;
    let pass_realized = counts[1] as f64 / n as f64;
    Ok(PolicyConfig {
        utilization: u,
        target_rejection: r,
        c_fail_fast,
        c_pass,
        r_token_threshold,
        realized: RealizedRates {
            fail_fast_rate: fail_fast_realized,
            pass_rate: pass_realized,
            respond_rate: 1.0 - (fail_fast_realized + pass_realized),
        },
    })
}

/// Deterministic trace split for out-of-sample calibration: shuffles with a
/// seeded generator and takes the first round(fraction * n) records for
/// calibration, the rest for evaluation.
pub fn calibration_split(trace: &Trace, fraction: f64, seed: u64) -> Result<(Trace, Trace)> {
    if !fraction.is_finite() || !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParam {
            name: "fraction",
            value: fraction,
            constraint: "calibration fraction must lie in [0, 1]",
        });
    }
    trace.require_nonempty()?;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut records = trace.records.clone();
    records.shuffle(&mut rng);
    let cut = round_half_up(fraction * records.len() as f64).min(records.len());
    let eval = records.split_off(cut);
    Ok((
        Trace {
            records,
            metadata: trace.metadata.clone(),
        },
        Trace {
            records: eval,
            metadata: trace.metadata.clone(),
        },
    ))
}
