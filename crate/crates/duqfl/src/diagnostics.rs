//! Convergence diagnostics: power-law decay fits of gradient-norm and loss
//! trajectories.
//!
//! A series `y_t ~ C / t^alpha` appears as a line of slope `-alpha` in
//! log-log coordinates; [`fit_decay_exponent`] recovers `alpha_hat` by least
//! squares over the points with t >= 2 and reports the fit quality. Decay is
//! observed, not enforced: the exponent is a diagnostic output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unfold::UnfoldTrace;

/// Least-squares power-law fit of a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay exponent estimate (negated log-log slope).
    pub alpha_hat: f64,
    /// Log-log intercept.
    pub intercept: f64,
    /// Coefficient of determination of the log-log regression, in [0, 1].
    pub r_squared: f64,
}

impl DecayFit {
    /// Negative log-log slope means the series is decaying.
    pub fn is_decaying(&self) -> bool {
        self.alpha_hat > 0.0
    }
}

/// Fit `log y` against `log t` for `t = 2..=len` (the t = 1 point carries no
/// spread in log t and is dropped). Needs at least 4 points; nonpositive
/// values are lifted to machine epsilon so the logarithm stays defined.
pub fn fit_decay_exponent(series: &[f64]) -> Result<DecayFit> {
    if series.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: series.len(),
        });
    }
    if series.iter().any(|&y| y <= 0.0) {
        log::warn!("decay fit: nonpositive series values lifted to machine epsilon");
    }
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(1)
        .map(|(idx, &y)| {
            let t = (idx + 1) as f64;
            (t.ln(), y.max(f64::EPSILON).ln())
        })
        .collect();

    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    // a flat series is fit perfectly by its constant
    let r_squared = if syy < 1e-300 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        alpha_hat: -slope,
        intercept,
        r_squared,
    })
}

/// Trailing moving average with the given window, length-preserving.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    series
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let start = i.saturating_sub(window - 1);
            let slice = &series[start..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Smoothing window used for trace diagnostics.
pub const SMOOTHING_WINDOW: usize = 3;

/// Decay fit of a trace's squared gradient norms, smoothed over a window of
/// [`SMOOTHING_WINDOW`] steps.
pub fn fit_grad_norm_decay(trace: &UnfoldTrace) -> Result<DecayFit> {
    let squared: Vec<f64> = trace.grad_norms.iter().map(|g| g * g).collect();
    fit_decay_exponent(&moving_average(&squared, SMOOTHING_WINDOW))
}

/// Aggregate decay diagnostics over many client-round traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub fits: Vec<DecayFit>,
    /// Fraction of traces with a negative log-log slope and r² >= `r2_floor`.
    pub decaying_fraction: f64,
    pub r2_floor: f64,
    pub mean_alpha: f64,
    pub median_alpha: f64,
    /// Traces too short (fewer than 4 steps, e.g. after an early stop) to
    /// support a fit; excluded from the statistics above.
    pub skipped_short: usize,
}

impl DecaySummary {
    pub fn from_traces<'a, I>(traces: I, r2_floor: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a UnfoldTrace>,
    {
        let mut fits = Vec::new();
        let mut skipped_short = 0usize;
        for trace in traces {
            if trace.grad_norms.len() < 4 {
                skipped_short += 1;
            } else {
                fits.push(fit_grad_norm_decay(trace)?);
            }
        }
        if fits.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        let decaying = fits
            .iter()
            .filter(|f| f.is_decaying() && f.r_squared >= r2_floor)
            .count();
        let mut alphas: Vec<f64> = fits.iter().map(|f| f.alpha_hat).collect();
        alphas.sort_by(|a, b| a.partial_cmp(b).expect("finite alpha"));
        let mean_alpha = alphas.iter().sum::<f64>() / alphas.len() as f64;
        let median_alpha = alphas[alphas.len() / 2];
        Ok(DecaySummary {
            decaying_fraction: decaying as f64 / fits.len() as f64,
            fits,
            r2_floor,
            mean_alpha,
            median_alpha,
            skipped_short,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn recovers_exact_power_laws() {
        let inverse_t: Vec<f64> = (1..=30).map(|t| 1.0 / t as f64).collect();
        let fit = fit_decay_exponent(&inverse_t).unwrap();
        assert_close(fit.alpha_hat, 1.0, 1e-6);
        assert_close(fit.r_squared, 1.0, 1e-9);

        let gentle: Vec<f64> = (1..=30).map(|t| (t as f64).powf(-0.7)).collect();
        let fit = fit_decay_exponent(&gentle).unwrap();
        assert_close(fit.alpha_hat, 0.7, 1e-6);
    }

    #[test]
    fn recovers_intercept_of_scaled_power_law() {
        let series: Vec<f64> = (1..=40).map(|t| 5.0 * (t as f64).powf(-0.5)).collect();
        let fit = fit_decay_exponent(&series).unwrap();
        assert_close(fit.alpha_hat, 0.5, 1e-6);
        assert_close(fit.intercept, 5.0f64.ln(), 1e-6);
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(matches!(
            fit_decay_exponent(&[1.0, 0.5, 0.33]),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn nonpositive_values_are_lifted_not_fatal() {
        let series = [1.0, 0.5, 0.0, 0.25, 0.2, -0.1, 0.14];
        let fit = fit_decay_exponent(&series).unwrap();
        assert!(fit.alpha_hat.is_finite());
        assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn flat_series_has_zero_alpha() {
        let series = [2.0; 10];
        let fit = fit_decay_exponent(&series).unwrap();
        assert_close(fit.alpha_hat, 0.0, 1e-12);
        assert_close(fit.r_squared, 1.0, 1e-12);
    }

    #[test]
    fn growing_series_has_negative_alpha() {
        let series: Vec<f64> = (1..=20).map(|t| t as f64).collect();
        let fit = fit_decay_exponent(&series).unwrap();
        assert_close(fit.alpha_hat, -1.0, 1e-9);
        assert!(!fit.is_decaying());
    }

    #[test]
    fn noiseless_alpha_recovery_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let alpha = rng.gen_range(0.3..1.2);
            let series: Vec<f64> = (1..=60).map(|t| (t as f64).powf(-alpha)).collect();
            let fit = fit_decay_exponent(&series).unwrap();
            assert_close(fit.alpha_hat, alpha, 1e-3);
        }
    }

    #[test]
    fn noisy_alpha_recovery_within_tenth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..100 {
            let alpha = rng.gen_range(0.3..1.2);
            let series: Vec<f64> = (1..=60)
                .map(|t| (t as f64).powf(-alpha) * (1.0 + 0.05 * noise.sample(&mut rng)))
                .collect();
            let fit = fit_decay_exponent(&series).unwrap();
            assert_close(fit.alpha_hat, alpha, 0.1);
        }
    }

    #[test]
    fn moving_average_trailing_window() {
        let out = moving_average(&[4.0, 2.0, 6.0, 8.0], 3);
        assert_eq!(out.len(), 4);
        assert_close(out[0], 4.0, 1e-15);
        assert_close(out[1], 3.0, 1e-15);
        assert_close(out[2], 4.0, 1e-15);
        assert_close(out[3], 16.0 / 3.0, 1e-15);
    }
}
