//! Linear-Gaussian state-space model and the Gaussian belief types shared by
//! every filter in the crate.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative Frobenius tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalue floor, relative to the trace, below which a matrix is not PSD.
pub const PSD_TOL: f64 = 1e-9;

/// `x_t = F x_{t-1} + e_t`, `y_t = H x_t + z_t (+ u_t)` with
/// `e_t ~ N(0, Q)` and `z_t ~ N(0, diag(r²))`.
///
/// The observation noise is stored as its diagonal only; a full `R` is
/// rejected at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianModel {
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r_sq: DVector<f64>,
    r: DMatrix<f64>,
}

impl LinearGaussianModel {
    /// Builds a model from full matrices, rejecting a non-diagonal `R`.
    pub fn new(f: DMatrix<f64>, h: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::dims(
                "R",
                "square matrix",
                format!("{}x{}", r.nrows(), r.ncols()),
            ));
        }
        for i in 0..r.nrows() {
            for j in 0..r.ncols() {
                if i != j && r[(i, j)] != 0.0 {
                    return Err(Error::NonDiagonalR(format!("R[{i},{j}] = {}", r[(i, j)])));
                }
            }
        }
        Self::with_diagonal_r(f, h, q, r.diagonal())
    }

    /// Builds a model whose observation noise is `diag(r_sq)`.
    pub fn with_diagonal_r(f: DMatrix<f64>, h: DMatrix<f64>, q: DMatrix<f64>, r_sq: DVector<f64>) -> Result<Self> {
        let r = DMatrix::from_diagonal(&r_sq);
        validate_model(Self { f, h, q, r_sq, r })
    }

    /// State dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    /// Observation dimension `n`.
    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Observation noise covariance as a (diagonal) matrix.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Diagonal of `R`, i.e. the nominal per-dimension noise variances `r²`.
    pub fn r_sq(&self) -> &DVector<f64> {
        &self.r_sq
    }

    /// Copy of this model with a different observation noise diagonal.
    pub fn with_r_sq(&self, r_sq: DVector<f64>) -> Result<Self> {
        Self::with_diagonal_r(self.f.clone(), self.h.clone(), self.q.clone(), r_sq)
    }

    /// Checks every invariant again; a validated model always passes.
    pub fn validate(self) -> Result<Self> {
        validate_model(self)
    }
}

/// Returns the model iff dimensions agree, `R` is diagonal and strictly
/// positive, and `Q` is symmetric PSD.
pub fn validate_model(model: LinearGaussianModel) -> Result<LinearGaussianModel> {
    let m = model.f.nrows();
    if model.f.ncols() != m || m == 0 {
        return Err(Error::dims(
            "F",
            "non-empty square matrix",
            format!("{}x{}", model.f.nrows(), model.f.ncols()),
        ));
    }
    let n = model.h.nrows();
    if model.h.ncols() != m || n == 0 {
        return Err(Error::dims(
            "H",
            format!("n x {m}"),
            format!("{}x{}", model.h.nrows(), model.h.ncols()),
        ));
    }
    if model.q.shape() != (m, m) {
        return Err(Error::dims(
            "Q",
            format!("{m}x{m}"),
            format!("{}x{}", model.q.nrows(), model.q.ncols()),
        ));
    }
    if model.r_sq.len() != n || model.r.shape() != (n, n) {
        return Err(Error::dims(
            "R",
            format!("{n}x{n}"),
            format!("{}x{}", model.r.nrows(), model.r.ncols()),
        ));
    }
    if let Some((k, v)) = model
        .r_sq
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::NonDiagonalR(format!(
            "diagonal entry {k} = {v} is not strictly positive"
        )));
    }
    let all_finite = model
        .f
        .iter()
        .chain(model.h.iter())
        .chain(model.q.iter())
        .all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::InvalidConfig("model matrices contain non-finite entries".into()));
    }
    if !is_symmetric_psd(&model.q) {
        return Err(Error::NonPsdCovariance("Q"));
    }
    Ok(model)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    (cov + cov.transpose()) * 0.5
}

/// Symmetric within [`SYMMETRY_TOL`] (relative Frobenius) and with every
/// eigenvalue at least `-PSD_TOL * trace`.
pub fn is_symmetric_psd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let norm = m.norm();
    if norm == 0.0 {
        return true;
    }
    if (m - m.transpose()).norm() > SYMMETRY_TOL * norm {
        return false;
    }
    let floor = -PSD_TOL * m.trace().abs();
    symmetrize(m).symmetric_eigenvalues().iter().all(|&ev| ev >= floor)
}

/// Mean and covariance of a Gaussian state estimate, either a prior
/// `(x̂_{t|t-1}, Σ_{t|t-1})` or a posterior `(x̂_t, Σ_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    /// Validating constructor.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::dims(
                "belief covariance",
                format!("{0}x{0}", mean.len()),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        if !is_symmetric_psd(&cov) {
            return Err(Error::NonPsdCovariance("belief covariance"));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_valid(&self) -> bool {
        self.cov.shape() == (self.dim(), self.dim()) && is_symmetric_psd(&self.cov)
    }
}

/// Predicted observation `ŷ_{t|t-1}` and innovation covariance `S_{t|t-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPrediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Per-step record emitted by every filter.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// `y_t - ŷ_{t|t-1}` against the nominal prediction.
    pub innovation: DVector<f64>,
    /// Final estimated outlier variances (zero for filters without NUV).
    pub gamma_sq_final: DVector<f64>,
    /// Number of update passes that ran.
    pub iterations_used: usize,
    /// Per observation dimension: was an outlier detected or gated.
    pub outlier_detected: Vec<bool>,
    pub elapsed: Duration,
}
