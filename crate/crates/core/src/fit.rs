//! Power-law fitting by weighted least squares on log-log pairs.

use crate::error::{Error, Result};
use serde::Serialize;

/// Result of fitting y = exp(intercept) * x^exponent.
#[derive(Clone, Debug, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    pub exponent_stderr: f64,
    pub r_squared: f64,
    /// Residuals in log space, one per input pair.
    pub residuals: Vec<f64>,
}

/// Weighted least-squares fit of `ln y` against `ln x`.
///
/// `weights` are optional relative weights (defaults to equal); all `x` and
/// `y` must be strictly positive and at least three pairs are required.
pub fn fit_exponent(pairs: &[(f64, f64)], weights: Option<&[f64]>) -> Result<PowerLawFit> {
    if pairs.len() < 3 {
        return Err(Error::invalid("pairs", "need at least 3 points"));
    }
    if let Some(w) = weights {
        if w.len() != pairs.len() {
            return Err(Error::invalid("weights", "length mismatch with pairs"));
        }
        if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
            return Err(Error::invalid("weights", "weights must be positive".to_string()));
        }
    }
    for &(x, y) in pairs {
        if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid(
                "pairs",
                format!("({x}, {y}) not strictly positive finite"),
            ));
        }
    }
    let n = pairs.len();
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let lx: Vec<f64> = pairs.iter().map(|&(x, _)| x.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|&(_, y)| y.ln()).collect();
    let sw: f64 = w.iter().sum();
    let mx: f64 = w.iter().zip(&lx).map(|(wi, xi)| wi * xi).sum::<f64>() / sw;
    let my: f64 = w.iter().zip(&ly).map(|(wi, yi)| wi * yi).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += w[i] * (lx[i] - mx) * (lx[i] - mx);
        sxy += w[i] * (lx[i] - mx) * (ly[i] - my);
    }
    if sxx <= 0.0 {
        return Err(Error::invalid("pairs", "all x coincide; slope undefined"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = (0..n)
        .map(|i| ly[i] - (intercept + slope * lx[i]))
        .collect();
    let ss_res: f64 = (0..n).map(|i| w[i] * residuals[i] * residuals[i]).sum();
    let ss_tot: f64 = (0..n).map(|i| w[i] * (ly[i] - my) * (ly[i] - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let exponent_stderr = if n > 2 {
        let dof = n as f64 - 2.0;
        // Effective sample scaling for relative weights.
        let s2 = ss_res / dof * n as f64 / sw;
        (s2 / sxx * sw / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        intercept,
        exponent_stderr,
        r_squared,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_pure_power_law_exactly() {
        let pairs: Vec<(f64, f64)> = (1..=8)
            .map(|k| {
                let x = 2.0f64.powi(-k);
                (x, 3.7 * x.powf(1.6))
            })
            .collect();
        let fit = fit_exponent(&pairs, None).unwrap();
        assert!((fit.exponent - 1.6).abs() < 1e-12);
        assert!((fit.intercept.exp() - 3.7).abs() < 1e-12 * 3.7);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.exponent_stderr < 1e-12);
    }

    #[test]
    fn weighted_fit_downweights_outlier() {
        let mut pairs: Vec<(f64, f64)> = (1..=6)
            .map(|k| {
                let x = 0.5f64.powi(k);
                (x, x.powf(2.0))
            })
            .collect();
        pairs.push((0.9, 10.0)); // gross outlier
        let mut w = vec![1.0; 7];
        w[6] = 1e-9;
        let fit = fit_exponent(&pairs, Some(&w)).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_exponent(&[(1.0, 1.0)], None).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (1.0, 2.0)], None).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, -1.0)], None).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 2.0)], Some(&[1.0])).is_err());
    }

    #[test]
    fn constant_values_fit_slope_zero() {
        let pairs: Vec<(f64, f64)> = (1..=6).map(|k| (k as f64, 3.0)).collect();
        let fit = fit_exponent(&pairs, None).unwrap();
        assert_eq!(fit.exponent, 0.0);
        assert!((fit.intercept.exp() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn stderr_calibration_covers_truth() {
        // Known generator: y = 0.8 x^1.7 with lognormal noise. The fitted
        // slope should land within 2 stderr of the truth in >= 95% of
        // trials; the residual-based stderr makes the pivot Student t with
        // n - 2 degrees of freedom, so n is kept large.
        use crate::rng::{CounterRng, SeedSpec};
        let n_trials = 1000;
        let n_points = 200;
        let mut covered = 0;
        for t in 0..n_trials {
            let mut rng = CounterRng::new(SeedSpec::new(0xF17, t));
            let pairs: Vec<(f64, f64)> = (0..n_points)
                .map(|k| {
                    let x = 1.0 + k as f64;
                    (x, 0.8 * x.powf(1.7) * (0.2 * rng.normal()).exp())
                })
                .collect();
            let fit = fit_exponent(&pairs, None).unwrap();
            if (fit.exponent - 1.7).abs() <= 2.0 * fit.exponent_stderr {
                covered += 1;
            }
        }
        assert!(covered >= 950, "covered {covered} of {n_trials}");
    }

    #[test]
    fn stderr_tracks_noise_scale() {
        // Deterministic multiplicative perturbation of a slope-1.5 law.
        let eps = [0.03, -0.02, 0.015, -0.025, 0.01, -0.01, 0.02, -0.03];
        let pairs: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let x = 2.0f64.powi(-(k as i32 + 1));
                (x, x.powf(1.5) * (1.0 + eps[k]))
            })
            .collect();
        let fit = fit_exponent(&pairs, None).unwrap();
        assert!((fit.exponent - 1.5).abs() < 0.05);
        assert!(fit.exponent_stderr > 1e-4 && fit.exponent_stderr < 0.05);
    }
}
