//! χ²-gated Kalman filter: an observation whose normalized innovation
//! exceeds the χ² quantile is discarded and the prior is carried forward.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::kalman::{factor_innovation, gain, predict, predict_observation, update};
use crate::model::{GaussianBelief, LinearGaussianModel, StepDiagnostics};

/// Bisection stops once the bracket is narrower than this.
pub const QUANTILE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chi2Config {
    /// Gate confidence level in (0, 1).
    pub confidence: f64,
}

impl Default for Chi2Config {
    fn default() -> Self {
        Self { confidence: 0.95 }
    }
}

impl Chi2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence {} must lie strictly between 0 and 1",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Normalized innovation squared `Δyᵀ S⁻¹ Δy`.
pub fn chi2_statistic(innovation: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let n = innovation.len();
    if s.shape() != (n, n) {
        return Err(Error::dims(
            "innovation covariance",
            format!("{n}x{n}"),
            format!("{}x{}", s.nrows(), s.ncols()),
        ));
    }
    let chol = factor_innovation(s)?;
    Ok(innovation.dot(&chol.solve(innovation)).max(0.0))
}

/// Quantile of the χ² distribution with `dof` degrees of freedom, found by
/// bisecting the regularized lower incomplete gamma function
/// `P(dof/2, x/2)`.
pub fn chi2_quantile(confidence: f64, dof: usize) -> Result<f64> {
    Chi2Config { confidence }.validate()?;
    if dof == 0 {
        return Err(Error::InvalidConfig(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    let a = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let mut lo = 0.0;
    let mut hi = dof as f64 + 1.0;
    while cdf(hi) < confidence {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > QUANTILE_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Kalman step that skips the update when the innovation fails the χ²
/// test at `config.confidence` with `n` degrees of freedom.
pub fn chi2_gated_step(
    model: &LinearGaussianModel,
    posterior: &GaussianBelief,
    y: &DVector<f64>,
    config: &Chi2Config,
) -> Result<(GaussianBelief, StepDiagnostics)> {
    let threshold = chi2_quantile(config.confidence, model.obs_dim())?;
    chi2_gated_step_with_threshold(model, posterior, y, threshold)
}

/// As [`chi2_gated_step`] with a precomputed gate threshold.
pub fn chi2_gated_step_with_threshold(
    model: &LinearGaussianModel,
    posterior: &GaussianBelief,
    y: &DVector<f64>,
    threshold: f64,
) -> Result<(GaussianBelief, StepDiagnostics)> {
    let start = Instant::now();
    let n = model.obs_dim();
    if y.len() != n {
        return Err(Error::dims("observation", n, y.len()));
    }
    let prior = predict(model, posterior)?;
    let obs_pred = predict_observation(model, &prior, model.r())?;
    let innovation = y - &obs_pred.mean;
    let gated = chi2_statistic(&innovation, &obs_pred.cov)? > threshold;
    let post = if gated {
        prior
    } else {
        let k = gain(&prior, model, &obs_pred)?;
        update(&prior, &obs_pred, &k, y)?
    };
    let diag = StepDiagnostics {
        innovation,
        gamma_sq_final: DVector::zeros(n),
        iterations_used: 1,
        outlier_detected: vec![gated; n],
        elapsed: start.elapsed(),
    };
    Ok((post, diag))
}
