//! Outlier-insensitive Kalman filtering.
//!
//! A linear-Gaussian Kalman filter whose update step estimates, per
//! observation dimension, the variance of a possible outlier (a normal with
//! unknown variance) and inflates the observation noise accordingly. The
//! variance is found either by expectation-maximization or by alternating
//! maximization. Plain and χ²-gated Kalman filters are included as
//! baselines, together with synthetic scenario generation, CSV ingestion
//! and a Monte Carlo experiment runner.

pub mod baselines;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod kalman;
pub mod model;
pub mod oikf;
pub mod scenario;

pub use baselines::{chi2_gated_step, chi2_quantile, chi2_statistic, Chi2Config};
pub use config::ModelConfig;
pub use error::{Error, Result};
pub use experiment::{
    export, grid_search, measure_runtime, run_experiment, run_filter, ExperimentSpec, ExportFormat, FilterKind,
    FilterSettings, InitConfig, MetricReport, Observe, ScenarioSpec, Sweep, SweepParam,
};
pub use ingest::{
    align_ground_truth, export_trajectory, load_csv, load_truth_csv, trajectory_schema, write_trajectory_csv,
    DatasetSchema, TrajectoryDataset,
};
pub use kalman::{gain, kf_step, predict, predict_observation, update, KalmanGain};
pub use model::{
    symmetrize, validate_model, GaussianBelief, LinearGaussianModel, ObservationPrediction, StepDiagnostics,
};
pub use oikf::{estimate_outlier, nuv_am_update, nuv_em_update, oikf_step, GammaInit, NuvMethod, NuvState, OikfConfig};
pub use scenario::{
    from_db, generate, to_db, wna_model, wna_position_model, OutlierSpec, SignMode, Trajectory, WnaSpec,
};
