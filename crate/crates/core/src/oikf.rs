//! Outlier-insensitive Kalman filtering.
//!
//! Each observation error is modelled as nominal noise `z ~ N(0, r²)` plus
//! an outlier `u ~ N(0, γ²)` whose variance is unknown (NUV). At every time
//! step the update is refined iteratively: estimate `γ̂²` per observation
//! dimension, inflate the observation noise to `Γ = diag(r² + γ̂²)`, and
//! redo the gain and update from the same predicted prior. Two estimators
//! are provided: EM, which uses first and second posterior moments, and AM,
//! which uses the posterior mean only.
//!
//! Whenever every `γ̂²` is zero the step reduces to the plain Kalman update.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::{gain, predict, predict_observation, update_cov, update_mean};
use crate::model::{GaussianBelief, LinearGaussianModel, StepDiagnostics};

/// Tolerance below zero tolerated for an EM second moment before it is
/// reported as a fault.
pub const SECOND_MOMENT_FLOOR: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NuvMethod {
    /// Expectation-maximization on first and second posterior moments.
    Em,
    /// Alternating maximization on the posterior residual.
    Am,
}

/// How `γ̂²` is seeded for the first update pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GammaInit {
    /// Start from `γ̂² = 0`, i.e. the first pass is a plain Kalman update.
    Zero,
    /// Estimate `γ̂²` from the predicted prior before the first pass.
    PriorResidual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OikfConfig {
    /// Upper bound on update passes per time step.
    pub max_iters: usize,
    /// Stop once the relative L∞ change of `γ̂²` is at or below this.
    pub conv_tol: f64,
    pub method: NuvMethod,
    pub gamma_init: GammaInit,
}

impl Default for OikfConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            conv_tol: 1e-6,
            method: NuvMethod::Am,
            gamma_init: GammaInit::PriorResidual,
        }
    }
}

impl OikfConfig {
    pub fn with_method(self, method: NuvMethod) -> Self {
        Self { method, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.conv_tol.is_nan() || self.conv_tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "conv_tol {} must be nonnegative",
                self.conv_tol
            )));
        }
        Ok(())
    }
}

/// Outlier variances `γ̂²`, total variances `ν² = r² + γ̂²` and the inflated
/// observation covariance `Γ = diag(ν²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NuvState {
    gamma_sq: DVector<f64>,
    nu_sq: DVector<f64>,
    inflated_cov: DMatrix<f64>,
}

impl NuvState {
    pub fn new(gamma_sq: DVector<f64>, r_sq: &DVector<f64>) -> Result<Self> {
        if gamma_sq.len() != r_sq.len() {
            return Err(Error::dims("gamma_sq", r_sq.len(), gamma_sq.len()));
        }
        if gamma_sq.iter().any(|g| g.is_nan() || *g < 0.0) {
            return Err(Error::InvalidConfig("outlier variances must be nonnegative".into()));
        }
        let nu_sq = r_sq + &gamma_sq;
        let inflated_cov = DMatrix::from_diagonal(&nu_sq);
        Ok(Self {
            gamma_sq,
            nu_sq,
            inflated_cov,
        })
    }

    pub fn gamma_sq(&self) -> &DVector<f64> {
        &self.gamma_sq
    }

    pub fn nu_sq(&self) -> &DVector<f64> {
        &self.nu_sq
    }

    pub fn inflated_cov(&self) -> &DMatrix<f64> {
        &self.inflated_cov
    }
}

/// AM variance step: `γ̂²_k = max{v̂_k² − r²_k, 0}`.
pub fn nuv_am_update(residual: &DVector<f64>, r_sq: &DVector<f64>) -> DVector<f64> {
    residual.zip_map(r_sq, |v, r2| {
        let excess = v * v - r2;
        if excess > 0.0 {
            excess
        } else {
            0.0
        }
    })
}

/// Diagonal of the EM estimate of the error covariance,
/// `ν̂²_k = E[(y − H x)²_k]` for `x ~ N(x̂, Σ)`.
///
/// With `X̂ = Σ + x̂ x̂ᵀ` this is the diagonal of
/// `y yᵀ − H x̂ yᵀ − y x̂ᵀ Hᵀ + H X̂ Hᵀ`; it is evaluated as
/// `(y − H x̂)²_k + (H Σ Hᵀ)_kk`, which is the same quantity without the
/// cancellation between `y yᵀ` and `H x̂ x̂ᵀ Hᵀ` for large observations.
pub fn em_second_moment(
    y: &DVector<f64>,
    model: &LinearGaussianModel,
    posterior_mean: &DVector<f64>,
    posterior_cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let (m, n) = (model.state_dim(), model.obs_dim());
    if y.len() != n {
        return Err(Error::dims("observation", n, y.len()));
    }
    if posterior_mean.len() != m || posterior_cov.shape() != (m, m) {
        return Err(Error::dims(
            "posterior",
            format!("mean {m}, cov {m}x{m}"),
            format!(
                "mean {}, cov {}x{}",
                posterior_mean.len(),
                posterior_cov.nrows(),
                posterior_cov.ncols()
            ),
        ));
    }
    let h = model.h();
    let residual = y - h * posterior_mean;
    let spread = (h * posterior_cov).component_mul(h).column_sum();
    let nu_sq = residual.component_mul(&residual) + spread;
    if let Some((index, &value)) = nu_sq
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v < SECOND_MOMENT_FLOOR)
    {
        return Err(Error::NegativeSecondMoment { index, value });
    }
    Ok(nu_sq)
}

/// EM variance step: `γ̂²_k = max{ν̂²_k − r²_k, 0}` with `ν̂²` from
/// [`em_second_moment`].
pub fn nuv_em_update(
    y: &DVector<f64>,
    model: &LinearGaussianModel,
    posterior_mean: &DVector<f64>,
    posterior_cov: &DMatrix<f64>,
    r_sq: &DVector<f64>,
) -> Result<DVector<f64>> {
    let nu_sq = em_second_moment(y, model, posterior_mean, posterior_cov)?;
    if r_sq.len() != nu_sq.len() {
        return Err(Error::dims("r_sq", nu_sq.len(), r_sq.len()));
    }
    Ok(nu_sq.zip_map(r_sq, |nu2, r2| {
        let excess = nu2 - r2;
        if excess > 0.0 {
            excess
        } else {
            0.0
        }
    }))
}

/// MAP estimate of the outlier itself, `û_k = v_k γ̂²_k / (γ̂²_k + r²_k)`.
pub fn estimate_outlier(residual: &DVector<f64>, gamma_sq: &DVector<f64>, r_sq: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        residual.len(),
        residual
            .iter()
            .zip(gamma_sq.iter())
            .zip(r_sq.iter())
            .map(|((&v, &g), &r2)| if g > 0.0 { v * g / (g + r2) } else { 0.0 }),
    )
}

/// Relative L∞ change between two variance vectors; zero when both vanish.
fn relative_change(prev: &DVector<f64>, next: &DVector<f64>) -> f64 {
    let scale = prev.amax().max(next.amax());
    if scale == 0.0 {
        0.0
    } else {
        (next - prev).amax() / scale
    }
}

/// One time step of the outlier-insensitive filter.
///
/// The prior is predicted once; every pass then re-estimates `γ̂²`, rebuilds
/// `S` and `K` with `R = Γ` and updates from that same prior. AM only needs
/// the posterior mean inside the loop, so its covariance is formed once
/// after the last pass.
pub fn oikf_step(
    model: &LinearGaussianModel,
    posterior: &GaussianBelief,
    y: &DVector<f64>,
    config: &OikfConfig,
) -> Result<(GaussianBelief, StepDiagnostics)> {
    let start = Instant::now();
    config.validate()?;
    if y.len() != model.obs_dim() {
        return Err(Error::dims("observation", model.obs_dim(), y.len()));
    }
    let prior = predict(model, posterior)?;
    let r_sq = model.r_sq();
    let h = model.h();

    let estimate = |mean: &DVector<f64>, cov: &DMatrix<f64>| -> Result<DVector<f64>> {
        match config.method {
            NuvMethod::Am => Ok(nuv_am_update(&(y - h * mean), r_sq)),
            NuvMethod::Em => nuv_em_update(y, model, mean, cov, r_sq),
        }
    };

    let mut gamma_sq = match config.gamma_init {
        GammaInit::Zero => DVector::zeros(r_sq.len()),
        GammaInit::PriorResidual => estimate(&prior.mean, &prior.cov)?,
    };
    let mut mean = prior.mean.clone();
    let mut cov = prior.cov.clone();
    let mut last = None;
    let mut iterations = 0;
    for i in 0..config.max_iters {
        if i > 0 {
            let next = estimate(&mean, &cov)?;
            if relative_change(&gamma_sq, &next) <= config.conv_tol {
                // Γ is (numerically) unchanged, so another pass would
                // reproduce the current posterior.
                break;
            }
            gamma_sq = next;
        }
        let nuv = NuvState::new(gamma_sq.clone(), r_sq)?;
        let obs_pred = predict_observation(model, &prior, nuv.inflated_cov())?;
        let k = gain(&prior, model, &obs_pred)?;
        mean = update_mean(&prior, &obs_pred, &k, y);
        if config.method == NuvMethod::Em {
            cov = update_cov(&prior, &obs_pred, &k);
        }
        last = Some((obs_pred, k));
        iterations += 1;
    }
    let (obs_pred, k) = last.expect("max_iters >= 1 guarantees one pass");
    if config.method == NuvMethod::Am {
        cov = update_cov(&prior, &obs_pred, &k);
    }

    let outlier_detected = gamma_sq.iter().map(|&g| g > 0.0).collect();
    let diag = StepDiagnostics {
        innovation: y - h * &prior.mean,
        gamma_sq_final: gamma_sq,
        iterations_used: iterations,
        outlier_detected,
        elapsed: start.elapsed(),
    };
    Ok((GaussianBelief { mean, cov }, diag))
}
