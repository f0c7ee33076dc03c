//! Synthetic trajectories: white-noise-acceleration dynamics with Gaussian
//! noise and Bernoulli/Rayleigh outliers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::LinearGaussianModel;

/// `10 log10(value)`.
pub fn to_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// `10^(db / 10)`.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// White-noise-acceleration (constant velocity) model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WnaSpec {
    /// Sampling interval.
    pub tau: f64,
    /// Process noise intensity `q²`.
    pub q_sq: f64,
    /// Observation noise variance `r²`.
    pub r_sq: f64,
    /// Number of time steps.
    pub horizon: usize,
}

impl Default for WnaSpec {
    fn default() -> Self {
        Self {
            tau: 1.0,
            q_sq: from_db(-10.0),
            r_sq: 1.0,
            horizon: 2000,
        }
    }
}

impl WnaSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau > 0.0 && self.q_sq > 0.0 && self.r_sq > 0.0 && self.horizon >= 1;
        let finite = self.tau.is_finite() && self.q_sq.is_finite() && self.r_sq.is_finite();
        if !(ok && finite) {
            return Err(Error::InvalidConfig(format!("invalid WNA parameters {self:?}")));
        }
        Ok(())
    }

    fn dynamics(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.tau;
        let f = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[t.powi(3) / 3.0, t * t / 2.0, t * t / 2.0, t]) * self.q_sq;
        (f, q)
    }
}

/// Fully observed WNA model: `F = [[1, τ], [0, 1]]`,
/// `Q = q² [[τ³/3, τ²/2], [τ²/2, τ]]`, `H = I₂`, `R = r² I₂`.
pub fn wna_model(spec: &WnaSpec) -> Result<LinearGaussianModel> {
    spec.validate()?;
    let (f, q) = spec.dynamics();
    LinearGaussianModel::with_diagonal_r(f, DMatrix::identity(2, 2), q, DVector::from_element(2, spec.r_sq))
}

/// WNA model observing position only: `H = (1 0)`, `R = r²`.
pub fn wna_position_model(spec: &WnaSpec) -> Result<LinearGaussianModel> {
    spec.validate()?;
    let (f, q) = spec.dynamics();
    LinearGaussianModel::with_diagonal_r(
        f,
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        q,
        DVector::from_element(1, spec.r_sq),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignMode {
    /// ±1 with equal probability.
    RandomSign,
    Positive,
}

/// Outlier injection law: each observation entry is hit independently with
/// probability `prob` by an outlier of Rayleigh(`rayleigh_scale`) magnitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutlierSpec {
    pub prob: f64,
    pub rayleigh_scale: f64,
    pub sign_mode: SignMode,
}

impl OutlierSpec {
    pub fn none() -> Self {
        Self {
            prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prob) || !(self.rayleigh_scale > 0.0 && self.rayleigh_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid outlier parameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for OutlierSpec {
    fn default() -> Self {
        Self {
            prob: 0.2,
            rayleigh_scale: 30.0,
            sign_mode: SignMode::RandomSign,
        }
    }
}

/// Ground truth, observations and the injected outliers, one row per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// T×m true states.
    pub states: DMatrix<f64>,
    /// T×n observations, outliers included.
    pub observations: DMatrix<f64>,
    pub outlier_mask: DMatrix<bool>,
    /// T×n injected outliers, zero where the mask is false.
    pub outlier_values: DMatrix<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observation(&self, t: usize) -> DVector<f64> {
        self.observations.row(t).transpose()
    }

    pub fn state(&self, t: usize) -> DVector<f64> {
        self.states.row(t).transpose()
    }
}

/// Square-root factor `L` with `L Lᵀ = Q` for a PSD `Q`.
fn noise_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = q.clone().cholesky() {
        return chol.l();
    }
    let eig = q.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

/// Rayleigh sample by inversion: `β √(−2 ln(1 − U))`.
fn rayleigh(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.random();
    scale * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Simulates `horizon` steps of `model` from `x = 0` and injects outliers.
/// The same seed always yields the same trajectory.
pub fn generate(model: &LinearGaussianModel, wna: &WnaSpec, outliers: &OutlierSpec, seed: u64) -> Result<Trajectory> {
    wna.validate()?;
    outliers.validate()?;
    let (m, n, horizon) = (model.state_dim(), model.obs_dim(), wna.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = noise_factor(model.q());
    let r_std = model.r_sq().map(f64::sqrt);

    let mut states = DMatrix::zeros(horizon, m);
    let mut observations = DMatrix::zeros(horizon, n);
    let mut outlier_mask = DMatrix::from_element(horizon, n, false);
    let mut outlier_values = DMatrix::zeros(horizon, n);
    let mut x = DVector::<f64>::zeros(m);
    for t in 0..horizon {
        let e = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        x = model.f() * &x + &l * e;
        let mut y = model.h() * &x;
        for k in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            y[k] += r_std[k] * z;
            if rng.random_bool(outliers.prob) {
                let magnitude = rayleigh(&mut rng, outliers.rayleigh_scale);
                let sign = match outliers.sign_mode {
                    SignMode::RandomSign if rng.random_bool(0.5) => -1.0,
                    _ => 1.0,
                };
                outlier_mask[(t, k)] = true;
                outlier_values[(t, k)] = sign * magnitude;
                y[k] += sign * magnitude;
            }
        }
        states.set_row(t, &x.transpose());
        observations.set_row(t, &y.transpose());
    }
    Ok(Trajectory {
        states,
        observations,
        outlier_mask,
        outlier_values,
    })
}
