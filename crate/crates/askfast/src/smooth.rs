//! Local linear regression of correctness against output-token count, with
//! a +/-1 sigma band. This is the diagnostic that motivates token-threshold
//! deferral: the fitted curve is flat while traces are short and falls when
//! they run long.
//!
//! Neighborhoods are k-nearest with k = ceil(span * n) (k at least 2) and
//! tricube weights on distance normalized by the k-th nearest distance.
//! Neighborhood sums are accumulated in a canonical (x, y) order, so the
//! fit is exactly invariant under permutation of the input points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPAN: f64 = 0.75;
pub const DEFAULT_EVAL_POINTS: usize = 100;

/// Fitted local-linear curve with its residual band.
///
/// `fallback[i]` is true where the neighborhood had fewer than two distinct
/// x values and the fit fell back to a weighted mean. Fitted values are not
/// clamped to [0, 1]; clamping is a presentation choice left to callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoessFit {
    pub eval_points: Vec<f64>,
    pub fitted_mean: Vec<f64>,
    /// Weighted residual standard deviation at each eval point.
    pub sigma_band: Vec<f64>,
    pub fallback: Vec<bool>,
    pub span: f64,
}

/// Evenly spaced eval points between min(x) and max(x).
pub fn default_eval_points(x: &[f64]) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if x.is_empty() || lo == hi {
        return vec![lo];
    }
    (0..DEFAULT_EVAL_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (DEFAULT_EVAL_POINTS - 1) as f64)
        .collect()
}

/// Fit a local linear regression of y on x at each eval point.
pub fn loess_fit(x: &[f64], y: &[f64], span: f64, eval_points: &[f64]) -> Result<LoessFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidParam {
            name: "x",
            value: x.len() as f64,
            constraint: "x and y must be equal-length with at least 3 points",
        });
    }
    if !span.is_finite() || !(span > 0.0 && span <= 1.0) {
        return Err(Error::InvalidParam {
            name: "span",
            value: span,
            constraint: "span must lie in (0, 1]",
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "loess input" });
    }
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidParam {
            name: "x",
            value: distinct.len() as f64,
            constraint: "needs at least 2 distinct x values",
        });
    }

    let n = x.len();
    let k = ((span * n as f64 - 1e-9).ceil() as usize).clamp(2, n);

    // Canonical point order makes neighborhood sums independent of input
    // permutation.
    let mut points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut fitted_mean = Vec::with_capacity(eval_points.len());
    let mut sigma_band = Vec::with_capacity(eval_points.len());
    let mut fallback = Vec::with_capacity(eval_points.len());
    let mut distances = vec![0.0f64; n];

    for &e in eval_points {
        for (d, p) in distances.iter_mut().zip(&points) {
            *d = (p.0 - e).abs();
        }
        let mut sorted_d = distances.clone();
        sorted_d.sort_by(f64::total_cmp);
        let radius = sorted_d[k - 1];

        // Tricube weights, uniform when the whole neighborhood collapses
        // onto the eval point or onto the bandwidth boundary.
        let member = |d: f64| d <= radius;
        let mut weights: Vec<f64> = distances
            .iter()
            .map(|&d| {
                if !member(d) {
                    0.0
                } else if radius == 0.0 {
                    1.0
                } else {
                    let t = d / radius;
                    let c = 1.0 - t * t * t;
                    c * c * c
                }
            })
            .collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            for (w, &d) in weights.iter_mut().zip(&distances) {
                *w = if member(d) { 1.0 } else { 0.0 };
            }
        }

        let (value, sigma, fell_back) = weighted_linear_at(e, &points, &weights);
        fitted_mean.push(value);
        sigma_band.push(sigma);
        fallback.push(fell_back);
    }

    Ok(LoessFit {
        eval_points: eval_points.to_vec(),
        fitted_mean,
        sigma_band,
        fallback,
        span,
    })
}

/// Weighted least-squares line through the weighted points, evaluated at e,
/// with the weighted residual standard deviation. Falls back to the
/// weighted mean when the neighborhood has no x spread.
fn weighted_linear_at(e: f64, points: &[(f64, f64)], weights: &[f64]) -> (f64, f64, bool) {
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    let mut first_x = f64::NAN;
    let mut two_distinct = false;
    for (&(px, py), &w) in points.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let dx = px - e;
        sw += w;
        swx += w * dx;
        swy += w * py;
        swxx += w * dx * dx;
        swxy += w * dx * py;
        if first_x.is_nan() {
            first_x = px;
        } else if px != first_x {
            two_distinct = true;
        }
    }

    let denom = sw * swxx - swx * swx;
    let degenerate = !two_distinct || denom <= 1e-12 * sw * swxx.max(f64::MIN_POSITIVE);
    let (intercept, slope) = if degenerate {
        (swy / sw, 0.0)
    } else {
        let slope = (sw * swxy - swx * swy) / denom;
        ((swy - slope * swx) / sw, slope)
    };

    let mut ss = 0.0;
    for (&(px, py), &w) in points.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let res = py - (intercept + slope * (px - e));
        ss += w * res * res;
    }
    ((intercept), (ss / sw).sqrt(), degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn constant_y_recovers_exactly() {
        let x = grid(25, 0.0, 100.0);
        let y = vec![1.0; 25];
        let fit = loess_fit(&x, &y, 0.5, &grid(11, 0.0, 100.0)).unwrap();
        assert!(fit.fitted_mean.iter().all(|&v| v == 1.0));
        assert!(fit.sigma_band.iter().all(|&s| s == 0.0));
        assert!(fit.fallback.iter().all(|&f| !f));
    }

    #[test]
    fn linear_y_recovered_at_interior_points() {
        let x = grid(40, 0.0, 10.0);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let evals = grid(21, 1.0, 9.0);
        let fit = loess_fit(&x, &y, 0.6, &evals).unwrap();
        for (e, got) in evals.iter().zip(&fit.fitted_mean) {
            let want = 3.0 * e - 2.0;
            assert!(
                (got - want).abs() < 1e-9,
                "at {e}: got {got}, want {want}"
            );
        }
        assert!(fit.sigma_band.iter().all(|&s| s < 1e-9));
    }

    #[test]
    fn step_data_fits_monotone_nonincreasing() {
        let x = grid(40, 0.0, 2000.0);
        let y: Vec<f64> = x.iter().map(|&v| if v < 1000.0 { 1.0 } else { 0.0 }).collect();
        let evals = grid(40, 0.0, 2000.0);
        let fit = loess_fit(&x, &y, 0.5, &evals).unwrap();
        for pair in fit.fitted_mean.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "step fit must be nonincreasing: {} then {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn fit_is_exactly_invariant_under_permutation() {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..500.0)).collect();
        let y: Vec<f64> = (0..60).map(|_| f64::from(rng.gen::<bool>())).collect();
        let evals = grid(17, 10.0, 490.0);
        let base = loess_fit(&x, &y, 0.4, &evals).unwrap();

        let mut idx: Vec<usize> = (0..x.len()).collect();
        for _ in 0..10 {
            idx.shuffle(&mut rng);
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let permuted = loess_fit(&xs, &ys, 0.4, &evals).unwrap();
            assert_eq!(base.fitted_mean, permuted.fitted_mean);
            assert_eq!(base.sigma_band, permuted.sigma_band);
        }
    }

    #[test]
    fn affine_x_transform_leaves_fit_unchanged() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(29);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..100.0)).collect();
        let y: Vec<f64> = (0..50).map(|_| f64::from(rng.gen::<bool>())).collect();
        let evals = grid(13, 5.0, 95.0);
        let base = loess_fit(&x, &y, 0.5, &evals).unwrap();

        let (scale, shift) = (3.5, -120.0);
        let xt: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let et: Vec<f64> = evals.iter().map(|v| scale * v + shift).collect();
        let transformed = loess_fit(&xt, &y, 0.5, &et).unwrap();
        for (a, b) in base.fitted_mean.iter().zip(&transformed.fitted_mean) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn sigma_zero_where_neighborhood_agrees() {
        // Left cluster all 1, right cluster all 0; near the edges each
        // neighborhood is unanimous.
        let mut x = grid(20, 0.0, 10.0);
        x.extend(grid(20, 90.0, 100.0));
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let fit = loess_fit(&x, &y, 0.25, &[2.0, 98.0]).unwrap();
        assert_eq!(fit.sigma_band, vec![0.0, 0.0]);
    }

    #[test]
    fn degenerate_neighborhood_falls_back_to_weighted_mean() {
        let x = [0.0, 0.0, 0.0, 10.0];
        let y = [1.0, 0.0, 1.0, 0.0];
        let fit = loess_fit(&x, &y, 0.5, &[0.0]).unwrap();
        assert!(fit.fallback[0]);
        assert!((fit.fitted_mean[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        assert!(loess_fit(&[1.0, 2.0], &[0.0, 1.0], 0.5, &[1.0]).is_err());
        assert!(loess_fit(&[1.0, 2.0, 3.0], &[0.0, 1.0, 1.0], 0.0, &[1.0]).is_err());
        assert!(loess_fit(&[1.0, 2.0, 3.0], &[0.0, 1.0, 1.0], 1.1, &[1.0]).is_err());
        assert!(loess_fit(&[5.0, 5.0, 5.0], &[0.0, 1.0, 1.0], 0.5, &[5.0]).is_err());
    }

    #[test]
    fn default_eval_points_span_the_data() {
        let x = [3.0, 1.0, 9.0];
        let evals = default_eval_points(&x);
        assert_eq!(evals.len(), DEFAULT_EVAL_POINTS);
        assert_eq!(evals[0], 1.0);
        assert_eq!(*evals.last().unwrap(), 9.0);
    }
}
