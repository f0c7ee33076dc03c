//! The classical Kalman recursion: predict, observation prediction, gain
//! and update.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{symmetrize, GaussianBelief, LinearGaussianModel, ObservationPrediction, StepDiagnostics};

/// Innovation covariances with a condition number at or above this are
/// treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Kalman gain `K_t` (m×n).
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanGain(pub DMatrix<f64>);

impl KalmanGain {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_belief(model: &LinearGaussianModel, belief: &GaussianBelief, what: &'static str) -> Result<()> {
    let m = model.state_dim();
    if belief.mean.len() != m || belief.cov.shape() != (m, m) {
        return Err(Error::dims(
            what,
            format!("mean {m}, cov {m}x{m}"),
            format!(
                "mean {}, cov {}x{}",
                belief.mean.len(),
                belief.cov.nrows(),
                belief.cov.ncols()
            ),
        ));
    }
    Ok(())
}

/// Prior `x̂_{t|t-1} = F x̂_{t-1}`, `Σ_{t|t-1} = F Σ_{t-1} Fᵀ + Q`.
pub fn predict(model: &LinearGaussianModel, posterior: &GaussianBelief) -> Result<GaussianBelief> {
    check_belief(model, posterior, "posterior")?;
    let f = model.f();
    let mean = f * &posterior.mean;
    let cov = symmetrize(&(f * &posterior.cov * f.transpose() + model.q()));
    Ok(GaussianBelief { mean, cov })
}

/// `ŷ = H x̂_{t|t-1}`, `S = H Σ_{t|t-1} Hᵀ + noise_cov`.
///
/// `noise_cov` is `R` for the plain filter and the inflated `Γ` inside the
/// outlier-insensitive loop.
pub fn predict_observation(
    model: &LinearGaussianModel,
    prior: &GaussianBelief,
    noise_cov: &DMatrix<f64>,
) -> Result<ObservationPrediction> {
    check_belief(model, prior, "prior")?;
    let n = model.obs_dim();
    if noise_cov.shape() != (n, n) {
        return Err(Error::dims(
            "observation noise",
            format!("{n}x{n}"),
            format!("{}x{}", noise_cov.nrows(), noise_cov.ncols()),
        ));
    }
    let h = model.h();
    let mean = h * &prior.mean;
    let cov = h * &prior.cov * h.transpose() + noise_cov;
    Ok(ObservationPrediction { mean, cov })
}

/// Cholesky factor of `S`, rejecting matrices that are not SPD or whose
/// condition number (estimated from the factor's diagonal) reaches
/// [`MAX_CONDITION`].
pub(crate) fn factor_innovation(s: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation(f64::INFINITY))?;
    let l = chol.l_dirty();
    let (lo, hi) = l.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !cond.is_finite() || cond >= MAX_CONDITION {
        return Err(Error::SingularInnovation(cond));
    }
    Ok(chol)
}

/// `K = Σ_{t|t-1} Hᵀ S⁻¹`.
pub fn gain(
    prior: &GaussianBelief,
    model: &LinearGaussianModel,
    obs_pred: &ObservationPrediction,
) -> Result<KalmanGain> {
    check_belief(model, prior, "prior")?;
    let n = model.obs_dim();
    if obs_pred.cov.shape() != (n, n) {
        return Err(Error::dims(
            "innovation covariance",
            format!("{n}x{n}"),
            format!("{}x{}", obs_pred.cov.nrows(), obs_pred.cov.ncols()),
        ));
    }
    let chol = factor_innovation(&obs_pred.cov)?;
    // S and Σ are symmetric, so Kᵀ = S⁻¹ H Σ.
    let k_t = chol.solve(&(model.h() * &prior.cov));
    Ok(KalmanGain(k_t.transpose()))
}

pub(crate) fn update_mean(
    prior: &GaussianBelief,
    obs_pred: &ObservationPrediction,
    gain: &KalmanGain,
    y: &DVector<f64>,
) -> DVector<f64> {
    &prior.mean + &gain.0 * (y - &obs_pred.mean)
}

pub(crate) fn update_cov(prior: &GaussianBelief, obs_pred: &ObservationPrediction, gain: &KalmanGain) -> DMatrix<f64> {
    let k = &gain.0;
    symmetrize(&(&prior.cov - k * &obs_pred.cov * k.transpose()))
}

/// Posterior `x̂_t = x̂_{t|t-1} + K Δy`, `Σ_t = Σ_{t|t-1} - K S Kᵀ`
/// (symmetrized).
pub fn update(
    prior: &GaussianBelief,
    obs_pred: &ObservationPrediction,
    gain: &KalmanGain,
    y: &DVector<f64>,
) -> Result<GaussianBelief> {
    let m = prior.dim();
    let n = obs_pred.mean.len();
    if y.len() != n {
        return Err(Error::dims("observation", n, y.len()));
    }
    if gain.0.shape() != (m, n) || obs_pred.cov.shape() != (n, n) || prior.cov.shape() != (m, m) {
        return Err(Error::dims(
            "update operands",
            format!("K {m}x{n}, S {n}x{n}"),
            format!(
                "K {}x{}, S {}x{}",
                gain.0.nrows(),
                gain.0.ncols(),
                obs_pred.cov.nrows(),
                obs_pred.cov.ncols()
            ),
        ));
    }
    Ok(GaussianBelief {
        mean: update_mean(prior, obs_pred, gain, y),
        cov: update_cov(prior, obs_pred, gain),
    })
}

/// One predict + update cycle of the plain Kalman filter.
pub fn kf_step(
    model: &LinearGaussianModel,
    posterior: &GaussianBelief,
    y: &DVector<f64>,
) -> Result<(GaussianBelief, StepDiagnostics)> {
    let start = Instant::now();
    if y.len() != model.obs_dim() {
        return Err(Error::dims("observation", model.obs_dim(), y.len()));
    }
    let prior = predict(model, posterior)?;
    let obs_pred = predict_observation(model, &prior, model.r())?;
    let k = gain(&prior, model, &obs_pred)?;
    let post = update(&prior, &obs_pred, &k, y)?;
    let n = model.obs_dim();
    let diag = StepDiagnostics {
        innovation: y - &obs_pred.mean,
        gamma_sq_final: DVector::zeros(n),
        iterations_used: 1,
        outlier_detected: vec![false; n],
        elapsed: start.elapsed(),
    };
    Ok((post, diag))
}

/// Default initial covariance scale: the largest diagonal entry of `Q`
/// and `R`.
pub fn default_initial_scale(model: &LinearGaussianModel) -> f64 {
    model
        .q()
        .diagonal()
        .iter()
        .chain(model.r_sq().iter())
        .fold(0.0f64, |a, &b| a.max(b))
}

/// `H⁺ y`, the least-squares state consistent with one observation.
pub fn back_project(model: &LinearGaussianModel, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != model.obs_dim() {
        return Err(Error::dims("observation", model.obs_dim(), y.len()));
    }
    let pinv = model
        .h()
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidConfig(format!("pseudo-inverse of H failed: {e}")))?;
    Ok(pinv * y)
}

/// Initial belief `(x̂₀, scale · I)`; `scale` defaults to
/// [`default_initial_scale`].
pub fn initial_belief(model: &LinearGaussianModel, mean: DVector<f64>, scale: Option<f64>) -> Result<GaussianBelief> {
    let m = model.state_dim();
    if mean.len() != m {
        return Err(Error::dims("initial mean", m, mean.len()));
    }
    let scale = scale.unwrap_or_else(|| default_initial_scale(model));
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidConfig(format!("initial covariance scale {scale}")));
    }
    Ok(GaussianBelief {
        mean,
        cov: DMatrix::identity(m, m) * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_model(f: f64, q: f64, r: f64) -> LinearGaussianModel {
        LinearGaussianModel::with_diagonal_r(
            DMatrix::from_element(1, 1, f),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, q),
            DVector::from_element(1, r),
        )
        .unwrap()
    }

    fn belief(mean: &[f64], cov: &[f64]) -> GaussianBelief {
        let m = mean.len();
        GaussianBelief::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(m, m, cov)).unwrap()
    }

    #[test]
    fn predict_identity_dynamics() {
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let b = belief(&[1.0, -2.0], &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(predict(&model, &b).unwrap(), b);
    }

    #[test]
    fn predict_scalar_substitution() {
        let model = scalar_model(2.0, 1.0, 1.0);
        let p = predict(&model, &belief(&[1.0], &[1.0])).unwrap();
        assert_eq!(p.mean[0], 2.0);
        assert_eq!(p.cov[(0, 0)], 5.0);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let model = scalar_model(1.0, 1.0, 1.0);
        let err = predict(&model, &belief(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn observation_prediction_examples() {
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(2, 2),
            DVector::from_element(1, 9.0),
        )
        .unwrap();
        let op = predict_observation(&model, &belief(&[3.0, 1.0], &[1.0, 0.0, 0.0, 1.0]), model.r()).unwrap();
        assert_eq!(op.mean[0], 3.0);
        assert_eq!(op.cov[(0, 0)], 10.0);

        let eye = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DVector::from_column_slice(&[2.0, 3.0]),
        )
        .unwrap();
        let det = belief(&[4.0, 5.0], &[0.0; 4]);
        let op = predict_observation(&eye, &det, eye.r()).unwrap();
        assert_eq!(op.mean, det.mean);
        assert_eq!(&op.cov, eye.r());
    }

    #[test]
    fn zero_prior_cov_gives_zero_gain() {
        let model = scalar_model(1.0, 0.0, 4.0);
        let prior = belief(&[0.0], &[0.0]);
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let k = gain(&prior, &model, &op).unwrap();
        assert_eq!(k.0[(0, 0)], 0.0);
        let post = update(&prior, &op, &k, &DVector::from_element(1, 7.0)).unwrap();
        assert_eq!(post, prior);
    }

    #[test]
    fn scalar_wiener_weight() {
        let (s2, r2) = (3.0, 1.5);
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DVector::from_element(2, r2),
        )
        .unwrap();
        let prior = belief(&[0.0, 0.0], &[s2, 0.0, 0.0, s2]);
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let k = gain(&prior, &model, &op).unwrap();
        let w = s2 / (s2 + r2);
        assert_abs_diff_eq!(k.0[(0, 0)], w, epsilon = 1e-15);
        assert_abs_diff_eq!(k.0[(1, 1)], w, epsilon = 1e-15);
        assert_abs_diff_eq!(k.0[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let prior = belief(&[0.0], &[1.0]);
        let model = scalar_model(1.0, 0.0, 1.0);
        let op = ObservationPrediction {
            mean: DVector::zeros(1),
            cov: DMatrix::zeros(1, 1),
        };
        assert!(matches!(gain(&prior, &model, &op), Err(Error::SingularInnovation(_))));
        let model2 = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let prior2 = belief(&[0.0, 0.0], &[0.0; 4]);
        let op2 = ObservationPrediction {
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]),
        };
        assert!(matches!(
            gain(&prior2, &model2, &op2),
            Err(Error::SingularInnovation(_))
        ));
    }

    #[test]
    fn equal_weight_fusion() {
        let model = scalar_model(1.0, 0.0, 1.0);
        let prior = belief(&[0.0], &[1.0]);
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let k = gain(&prior, &model, &op).unwrap();
        let post = update(&prior, &op, &k, &DVector::from_element(1, 2.0)).unwrap();
        assert_abs_diff_eq!(post.mean[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_cov() {
        let model = scalar_model(1.0, 0.0, 2.0);
        let prior = belief(&[3.0], &[2.0]);
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let k = gain(&prior, &model, &op).unwrap();
        let post = update(&prior, &op, &k, &op.mean.clone()).unwrap();
        assert_eq!(post.mean[0], 3.0);
        assert_abs_diff_eq!(post.cov[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn update_rejects_wrong_observation_length() {
        let model = scalar_model(1.0, 0.0, 1.0);
        let prior = belief(&[0.0], &[1.0]);
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let k = gain(&prior, &model, &op).unwrap();
        assert!(update(&prior, &op, &k, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn noiseless_observations_are_tracked() {
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.5,
            DVector::from_element(2, 1e-14),
        )
        .unwrap();
        let mut post = belief(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        for t in 0..50 {
            let y = DVector::from_column_slice(&[(t as f64).sin() * 10.0, t as f64]);
            post = kf_step(&model, &post, &y).unwrap().0;
            assert!((&post.mean - &y).amax() < 1e-9);
        }
    }

    #[test]
    fn kf_step_is_deterministic() {
        let model = scalar_model(1.0, 0.3, 2.0);
        let ys: Vec<f64> = (0..200).map(|t| ((t * 37 % 11) as f64) - 5.0).collect();
        let run = || {
            let mut post = belief(&[0.0], &[1.0]);
            let mut out = Vec::new();
            for &y in &ys {
                post = kf_step(&model, &post, &DVector::from_element(1, y)).unwrap().0;
                out.push((post.mean[0].to_bits(), post.cov[(0, 0)].to_bits()));
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn initial_belief_defaults() {
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::identity(2, 2) * 0.1,
            DVector::from_element(1, 9.0),
        )
        .unwrap();
        assert_eq!(default_initial_scale(&model), 9.0);
        let x0 = back_project(&model, &DVector::from_element(1, 4.0)).unwrap();
        assert_abs_diff_eq!(x0[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x0[1], 0.0, epsilon = 1e-12);
        let b = initial_belief(&model, x0, None).unwrap();
        assert_eq!(b.cov, DMatrix::identity(2, 2) * 9.0);
    }
}
