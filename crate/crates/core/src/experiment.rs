//! Monte Carlo experiment runner: paired filter comparisons over a sweep of
//! noise levels, grid search, runtime measurement and report export.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baselines::{chi2_gated_step_with_threshold, chi2_quantile, Chi2Config};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::ingest::TrajectoryDataset;
use crate::kalman::{back_project, initial_belief, kf_step};
use crate::model::{GaussianBelief, LinearGaussianModel, StepDiagnostics};
use crate::oikf::{oikf_step, NuvMethod, OikfConfig};
use crate::scenario::{from_db, generate, to_db, wna_model, wna_position_model, OutlierSpec, Trajectory, WnaSpec};

/// z-score of a two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    Kf,
    Chi2,
    OikfEm,
    OikfAm,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Kf, FilterKind::Chi2, FilterKind::OikfEm, FilterKind::OikfAm];

    pub fn label(self) -> &'static str {
        match self {
            FilterKind::Kf => "KF",
            FilterKind::Chi2 => "CHI2",
            FilterKind::OikfEm => "OIKF-EM",
            FilterKind::OikfAm => "OIKF-AM",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kf" => Ok(FilterKind::Kf),
            "chi2" => Ok(FilterKind::Chi2),
            "oikf-em" | "em" => Ok(FilterKind::OikfEm),
            "oikf-am" | "am" => Ok(FilterKind::OikfAm),
            other => Err(Error::InvalidConfig(format!("unknown filter {other:?}"))),
        }
    }
}

/// Settings shared by all filters in an experiment. The NUV method inside
/// `oikf` is overridden per filter kind.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FilterSettings {
    pub oikf: OikfConfig,
    pub chi2: Chi2Config,
}

/// Output of running one filter over an observation sequence.
#[derive(Clone, Debug)]
pub struct FilterRun {
    /// T×m posterior means.
    pub estimates: DMatrix<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub elapsed: Duration,
}

/// Runs `kind` over every row of `observations`, starting from `initial`.
pub fn run_filter(
    kind: FilterKind,
    settings: &FilterSettings,
    model: &LinearGaussianModel,
    initial: &GaussianBelief,
    observations: &DMatrix<f64>,
) -> Result<FilterRun> {
    let steps = observations.nrows();
    let threshold = match kind {
        FilterKind::Chi2 => chi2_quantile(settings.chi2.confidence, model.obs_dim())?,
        _ => 0.0,
    };
    let oikf = match kind {
        FilterKind::OikfEm => settings.oikf.with_method(NuvMethod::Em),
        _ => settings.oikf.with_method(NuvMethod::Am),
    };
    let mut estimates = DMatrix::zeros(steps, model.state_dim());
    let mut diagnostics = Vec::with_capacity(steps);
    let mut belief = initial.clone();
    let start = Instant::now();
    for t in 0..steps {
        let y: DVector<f64> = observations.row(t).transpose();
        let (post, diag) = match kind {
            FilterKind::Kf => kf_step(model, &belief, &y)?,
            FilterKind::Chi2 => chi2_gated_step_with_threshold(model, &belief, &y, threshold)?,
            FilterKind::OikfEm | FilterKind::OikfAm => oikf_step(model, &belief, &y, &oikf)?,
        };
        estimates.set_row(t, &post.mean.transpose());
        diagnostics.push(diag);
        belief = post;
    }
    Ok(FilterRun {
        estimates,
        diagnostics,
        elapsed: start.elapsed(),
    })
}

/// Which model component the sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParam {
    RSq,
    QSq,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::RSq => "r2_db",
            SweepParam::QSq => "q2_db",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values_db: Vec<f64>,
}

/// What the synthetic observation vector contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observe {
    /// Position and velocity (`H = I₂`).
    Full,
    /// Position only (`H = (1 0)`).
    Position,
}

/// How the filters are initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitConfig {
    /// Take the initial mean from ground truth when available, otherwise
    /// back-project the first observation.
    pub from_truth: bool,
    /// Initial covariance scale; default is the largest of diag Q, diag R.
    pub cov_scale: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            from_truth: true,
            cov_scale: None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScenarioSpec {
    /// Simulated WNA trajectories; the sweep changes both the data and the
    /// filter model.
    Synthetic {
        wna: WnaSpec,
        outliers: OutlierSpec,
        observe: Observe,
    },
    /// A recorded dataset; the sweep changes only the filter model. Without
    /// a model file each observation column is filtered as its own axis with
    /// a position-only WNA model; truth columns pair with observation
    /// columns. With a model file the observation vector is filtered jointly
    /// and truth columns pair with the model's position indices.
    Dataset {
        dataset: Box<TrajectoryDataset>,
        tau: f64,
        q_sq: f64,
        r_sq: f64,
        model: Option<ModelConfig>,
    },
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub filters: Vec<FilterKind>,
    pub scenario: ScenarioSpec,
    pub sweep: Sweep,
    pub trials: usize,
    pub seed_base: u64,
    pub settings: FilterSettings,
    pub init: InitConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() {
            return Err(Error::InvalidConfig("filter set is empty".into()));
        }
        let mut seen = self.filters.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.filters.len() {
            return Err(Error::InvalidConfig("filter set lists a filter twice".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.sweep.values_db.is_empty() || self.sweep.values_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep must list at least one finite value".into()));
        }
        self.settings.oikf.validate()?;
        self.settings.chi2.validate()?;
        match &self.scenario {
            ScenarioSpec::Synthetic { wna, outliers, .. } => {
                wna.validate()?;
                outliers.validate()?;
                if wna.horizon < 2 {
                    return Err(Error::InvalidConfig("synthetic horizon must be at least 2".into()));
                }
            }
            ScenarioSpec::Dataset { dataset, model, .. } => {
                if dataset.len() < 2 {
                    return Err(Error::InvalidConfig("dataset needs at least 2 samples".into()));
                }
                let Some(truth) = &dataset.truth else {
                    return Err(Error::InvalidConfig(
                        "dataset has no ground truth to score against".into(),
                    ));
                };
                let expected = match model {
                    Some(cfg) => cfg.position.len(),
                    None => dataset.observations.ncols(),
                };
                if truth.ncols() != expected {
                    return Err(Error::dims("truth columns", expected, truth.ncols()));
                }
                if let Some(cfg) = model {
                    if cfg.model.obs_dim() != dataset.observations.ncols() {
                        return Err(Error::dims(
                            "observation columns",
                            cfg.model.obs_dim(),
                            dataset.observations.ncols(),
                        ));
                    }
                    if self.sweep.param == SweepParam::QSq {
                        return Err(Error::InvalidConfig("q2 sweeps need the built-in WNA model".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Aggregated metrics for one filter at one sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMetrics {
    pub filter: FilterKind,
    pub sweep_db: f64,
    pub trials: usize,
    /// Mean squared position error (state units²).
    pub mse: f64,
    pub mse_db: f64,
    pub rmse: f64,
    /// 95% half-width of the MSE over trials.
    pub ci_half_width: f64,
    /// Fraction of observation entries flagged as outliers.
    pub detection_rate: f64,
    pub mean_step_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub param: SweepParam,
    pub points: Vec<PointMetrics>,
}

impl MetricReport {
    pub fn get(&self, filter: FilterKind, sweep_db: f64) -> Option<&PointMetrics> {
        self.points
            .iter()
            .find(|p| p.filter == filter && p.sweep_db == sweep_db)
    }

    pub fn for_filter(&self, filter: FilterKind) -> impl Iterator<Item = &PointMetrics> {
        self.points.iter().filter(move |p| p.filter == filter)
    }
}

/// Error raised part-way through an experiment; `partial` holds every sweep
/// point completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("experiment aborted after {} completed rows: {error}", partial.points.len())]
pub struct ExperimentFailure {
    pub partial: MetricReport,
    #[source]
    pub error: Error,
}

/// Per-trial outcome for one filter.
struct TrialScore {
    sq_err_sum: f64,
    steps: usize,
    detections: usize,
    entries: usize,
    elapsed: Duration,
}

#[derive(Clone, Copy, Debug)]
struct Params {
    q_sq: f64,
    r_sq: f64,
}

impl Params {
    fn with(self, param: SweepParam, value: f64) -> Self {
        match param {
            SweepParam::RSq => Params { r_sq: value, ..self },
            SweepParam::QSq => Params { q_sq: value, ..self },
        }
    }
}

fn score(run: &FilterRun, positions: &[usize], truth: &DMatrix<f64>, truth_cols: &[usize]) -> TrialScore {
    let mut sq_err_sum = 0.0;
    for t in 0..run.estimates.nrows() {
        for (&p, &c) in positions.iter().zip(truth_cols) {
            let e = run.estimates[(t, p)] - truth[(t, c)];
            sq_err_sum += e * e;
        }
    }
    let detections = run
        .diagnostics
        .iter()
        .map(|d| d.outlier_detected.iter().filter(|f| **f).count())
        .sum();
    let entries = run.diagnostics.iter().map(|d| d.outlier_detected.len()).sum();
    TrialScore {
        sq_err_sum,
        steps: run.estimates.nrows(),
        detections,
        entries,
        elapsed: run.elapsed,
    }
}

fn add(acc: &mut TrialScore, s: TrialScore) {
    acc.sq_err_sum += s.sq_err_sum;
    acc.steps += s.steps;
    acc.detections += s.detections;
    acc.entries += s.entries;
    acc.elapsed += s.elapsed;
}

fn initial_for(
    model: &LinearGaussianModel,
    init: &InitConfig,
    truth0: Option<DVector<f64>>,
    y0: &DVector<f64>,
) -> Result<GaussianBelief> {
    let mean = match truth0 {
        Some(x) if init.from_truth => x,
        _ => back_project(model, y0)?,
    };
    initial_belief(model, mean, init.cov_scale)
}

/// Runs all filters on one synthetic trial.
fn synthetic_trial(
    spec: &ExperimentSpec,
    wna: &WnaSpec,
    outliers: &OutlierSpec,
    observe: Observe,
    data: Params,
    filter: Params,
    seed: u64,
) -> Result<Vec<TrialScore>> {
    let build = |p: Params| {
        let w = WnaSpec {
            q_sq: p.q_sq,
            r_sq: p.r_sq,
            ..*wna
        };
        match observe {
            Observe::Full => wna_model(&w),
            Observe::Position => wna_position_model(&w),
        }
    };
    let data_model = build(data)?;
    let filter_model = build(filter)?;
    let traj = generate(&data_model, wna, outliers, seed)?;
    let truth0 = traj.state(0);
    let y0 = traj.observation(0);
    let init = initial_for(&filter_model, &spec.init, Some(truth0), &y0)?;
    let obs = traj.observations.rows(1, traj.len() - 1).into_owned();
    let truth = traj.states.rows(1, traj.len() - 1).into_owned();
    spec.filters
        .iter()
        .map(|&kind| {
            let run = run_filter(kind, &spec.settings, &filter_model, &init, &obs)?;
            Ok(score(&run, &[0], &truth, &[0]))
        })
        .collect()
}

fn dataset_scores(
    spec: &ExperimentSpec,
    dataset: &TrajectoryDataset,
    tau: f64,
    model_cfg: Option<&ModelConfig>,
    filter: Params,
) -> Result<Vec<TrialScore>> {
    let truth = dataset.truth.as_ref().expect("validated");
    let t_len = dataset.len();
    let obs_rest = dataset.observations.rows(1, t_len - 1).into_owned();
    let truth_rest = truth.rows(1, t_len - 1).into_owned();
    let mut out = Vec::with_capacity(spec.filters.len());
    for &kind in &spec.filters {
        let s = match model_cfg {
            Some(cfg) => {
                let model = cfg
                    .model
                    .with_r_sq(DVector::from_element(cfg.model.obs_dim(), filter.r_sq))?;
                let mut x0 = back_project(&model, &dataset.observations.row(0).transpose())?;
                if spec.init.from_truth {
                    for (i, &p) in cfg.position.iter().enumerate() {
                        x0[p] = truth[(0, i)];
                    }
                }
                let init = initial_belief(&model, x0, spec.init.cov_scale)?;
                let run = run_filter(kind, &spec.settings, &model, &init, &obs_rest)?;
                let cols: Vec<usize> = (0..cfg.position.len()).collect();
                score(&run, &cfg.position, &truth_rest, &cols)
            }
            None => {
                let wna = WnaSpec {
                    tau,
                    q_sq: filter.q_sq,
                    r_sq: filter.r_sq,
                    horizon: t_len,
                };
                let model = wna_position_model(&wna)?;
                let mut acc: Option<TrialScore> = None;
                for axis in 0..dataset.observations.ncols() {
                    let y0 = DVector::from_element(1, dataset.observations[(0, axis)]);
                    let truth0 = DVector::from_column_slice(&[truth[(0, axis)], 0.0]);
                    let init = initial_for(&model, &spec.init, Some(truth0), &y0)?;
                    let axis_obs = obs_rest.columns(axis, 1).into_owned();
                    let run = run_filter(kind, &spec.settings, &model, &init, &axis_obs)?;
                    let s = score(&run, &[0], &truth_rest, &[axis]);
                    match acc.as_mut() {
                        None => acc = Some(s),
                        Some(a) => {
                            // Axes share time steps: combine errors, not step counts.
                            let steps = a.steps;
                            add(a, s);
                            a.steps = steps;
                        }
                    }
                }
                acc.expect("at least one observation column")
            }
        };
        out.push(s);
    }
    Ok(out)
}

fn aggregate(filter: FilterKind, sweep_db: f64, trials: &[TrialScore]) -> PointMetrics {
    let n = trials.len();
    let per_trial: Vec<f64> = trials.iter().map(|s| s.sq_err_sum / s.steps as f64).collect();
    // Fixed index order keeps the sums independent of scheduling.
    let mse = per_trial.iter().sum::<f64>() / n as f64;
    let ci_half_width = if n > 1 {
        let var = per_trial.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (n - 1) as f64;
        Z95 * (var / n as f64).sqrt()
    } else {
        0.0
    };
    let steps: usize = trials.iter().map(|s| s.steps).sum();
    let entries: usize = trials.iter().map(|s| s.entries).sum();
    let detections: usize = trials.iter().map(|s| s.detections).sum();
    let elapsed: Duration = trials.iter().map(|s| s.elapsed).sum();
    PointMetrics {
        filter,
        sweep_db,
        trials: n,
        mse,
        mse_db: to_db(mse),
        rmse: mse.sqrt(),
        ci_half_width,
        detection_rate: if entries > 0 {
            detections as f64 / entries as f64
        } else {
            0.0
        },
        mean_step_time: if steps > 0 {
            elapsed / steps as u32
        } else {
            Duration::ZERO
        },
    }
}

/// Evaluates every filter at one sweep point. `mismatch` keeps the data at
/// the scenario's base parameters and moves only the filter model.
fn evaluate_point(spec: &ExperimentSpec, value_db: f64, mismatch: bool) -> Result<Vec<PointMetrics>> {
    let param = spec.sweep.param;
    let value = from_db(value_db);
    let per_trial: Vec<Vec<TrialScore>> = match &spec.scenario {
        ScenarioSpec::Synthetic { wna, outliers, observe } => {
            let base = Params {
                q_sq: wna.q_sq,
                r_sq: wna.r_sq,
            };
            let filter = base.with(param, value);
            let data = if mismatch { base } else { filter };
            (0..spec.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = spec.seed_base.wrapping_add(trial as u64);
                    synthetic_trial(spec, wna, outliers, *observe, data, filter, seed)
                })
                .collect::<Result<Vec<_>>>()?
        }
        ScenarioSpec::Dataset {
            dataset,
            tau,
            q_sq,
            r_sq,
            model,
        } => {
            // Recorded data is fixed, so repeated trials would be identical.
            let filter = Params {
                q_sq: *q_sq,
                r_sq: *r_sq,
            }
            .with(param, value);
            vec![dataset_scores(spec, dataset, *tau, model.as_ref(), filter)?]
        }
    };
    let mut by_filter: Vec<Vec<TrialScore>> = spec
        .filters
        .iter()
        .map(|_| Vec::with_capacity(per_trial.len()))
        .collect();
    for trial in per_trial {
        for (slot, s) in by_filter.iter_mut().zip(trial) {
            slot.push(s);
        }
    }
    Ok(spec
        .filters
        .iter()
        .zip(by_filter)
        .map(|(&f, scores)| aggregate(f, value_db, &scores))
        .collect())
}

fn run_sweep(spec: &ExperimentSpec, mismatch: bool) -> std::result::Result<MetricReport, Box<ExperimentFailure>> {
    let mut report = MetricReport {
        param: spec.sweep.param,
        points: Vec::new(),
    };
    if let Err(error) = spec.validate() {
        return Err(Box::new(ExperimentFailure { partial: report, error }));
    }
    for &value_db in &spec.sweep.values_db {
        match evaluate_point(spec, value_db, mismatch) {
            Ok(points) => report.points.extend(points),
            Err(error) => return Err(Box::new(ExperimentFailure { partial: report, error })),
        }
    }
    Ok(report)
}

/// Runs every filter on identical data at every sweep point and aggregates
/// squared position errors over trials. Trial `i` uses seed
/// `seed_base + i`.
pub fn run_experiment(spec: &ExperimentSpec) -> std::result::Result<MetricReport, Box<ExperimentFailure>> {
    run_sweep(spec, false)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    /// Best grid value (dB) per filter, in the spec's filter order.
    pub best: Vec<(FilterKind, f64)>,
    pub report: MetricReport,
}

impl GridSearchResult {
    pub fn best_for(&self, filter: FilterKind) -> Option<f64> {
        self.best.iter().find(|(f, _)| *f == filter).map(|(_, v)| *v)
    }
}

/// Picks, per filter, the grid point with the lowest MSE; ties go to the
/// smaller parameter.
pub fn select_best(report: &MetricReport, filters: &[FilterKind]) -> Vec<(FilterKind, f64)> {
    filters
        .iter()
        .map(|&f| {
            let best = report
                .for_filter(f)
                .fold(None::<&PointMetrics>, |best, p| match best {
                    Some(b) if b.mse < p.mse || (b.mse == p.mse && b.sweep_db <= p.sweep_db) => Some(b),
                    _ => Some(p),
                })
                .expect("grid is non-empty");
            (f, best.sweep_db)
        })
        .collect()
}

/// Tunes `param` of the filter model over `grid_db` while the data stays at
/// the scenario's base parameters.
pub fn grid_search(
    spec: &ExperimentSpec,
    param: SweepParam,
    grid_db: &[f64],
) -> std::result::Result<GridSearchResult, Box<ExperimentFailure>> {
    let spec = ExperimentSpec {
        sweep: Sweep {
            param,
            values_db: grid_db.to_vec(),
        },
        ..spec.clone()
    };
    let report = run_sweep(&spec, true)?;
    Ok(GridSearchResult {
        best: select_best(&report, &spec.filters),
        report,
    })
}

/// Minimum trajectory length accepted by [`measure_runtime`].
pub const MIN_RUNTIME_STEPS: usize = 1000;
/// Minimum number of timed repetitions.
pub const MIN_RUNTIME_REPS: usize = 10;

/// Median over `reps` timed runs (after one untimed warm-up) of total
/// filtering time divided by the number of steps.
pub fn measure_runtime(
    kind: FilterKind,
    settings: &FilterSettings,
    model: &LinearGaussianModel,
    trajectory: &Trajectory,
    reps: usize,
) -> Result<Duration> {
    if trajectory.len() < MIN_RUNTIME_STEPS + 1 {
        return Err(Error::InvalidConfig(format!(
            "runtime measurement needs at least {MIN_RUNTIME_STEPS} steps"
        )));
    }
    let reps = reps.max(MIN_RUNTIME_REPS);
    let init = initial_belief(model, trajectory.state(0), None)?;
    let obs = trajectory.observations.rows(1, trajectory.len() - 1).into_owned();
    let steps = obs.nrows() as u32;
    run_filter(kind, settings, model, &init, &obs)?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let run = run_filter(kind, settings, model, &init, &obs)?;
        times.push(start.elapsed() / steps);
        std::hint::black_box(run);
    }
    times.sort();
    Ok(times[times.len() / 2])
}

/// Report export formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExportFormat {
    /// `metrics.csv`: one row per (filter, sweep point). Runtime is left
    /// out so that re-runs with the same seed produce identical bytes.
    Csv,
    /// `table.txt`: aligned text table with RMSE, MSE [dB] and runtime.
    Table,
    /// `plot_mse_db.csv`: sweep value against MSE [dB], one column per
    /// filter.
    PlotData,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 3] = [ExportFormat::Csv, ExportFormat::Table, ExportFormat::PlotData];

    pub fn file_name(self) -> &'static str {
        match self {
            ExportFormat::Csv => "metrics.csv",
            ExportFormat::Table => "table.txt",
            ExportFormat::PlotData => "plot_mse_db.csv",
        }
    }
}

fn filters_in(report: &MetricReport) -> Vec<FilterKind> {
    let mut out = Vec::new();
    for p in &report.points {
        if !out.contains(&p.filter) {
            out.push(p.filter);
        }
    }
    out
}

fn sweep_values(report: &MetricReport) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in &report.points {
        if !out.contains(&p.sweep_db) {
            out.push(p.sweep_db);
        }
    }
    out
}

pub fn write_metrics_csv(report: &MetricReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "filter,{},trials,mse,mse_db,rmse,ci_half_width,detection_rate",
        report.param.label()
    )?;
    for p in &report.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.filter, p.sweep_db, p.trials, p.mse, p.mse_db, p.rmse, p.ci_half_width, p.detection_rate
        )?;
    }
    Ok(())
}

pub fn write_table(report: &MetricReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<10} {:>9} {:>12} {:>10} {:>12} {:>10}",
        "filter",
        report.param.label(),
        "RMSE",
        "MSE[dB]",
        "runtime[ms]",
        "detect"
    )?;
    for p in &report.points {
        writeln!(
            w,
            "{:<10} {:>9.2} {:>12.4} {:>10.3} {:>12.5} {:>10.4}",
            p.filter.label(),
            p.sweep_db,
            p.rmse,
            p.mse_db,
            p.mean_step_time.as_secs_f64() * 1e3,
            p.detection_rate
        )?;
    }
    Ok(())
}

pub fn write_plot_data(report: &MetricReport, mut w: impl Write) -> std::io::Result<()> {
    let filters = filters_in(report);
    let header: Vec<&str> = filters.iter().map(|f| f.label()).collect();
    writeln!(w, "{},{}", report.param.label(), header.join(","))?;
    for x in sweep_values(report) {
        let ys: Vec<String> = filters
            .iter()
            .map(|&f| report.get(f, x).map(|p| p.mse_db.to_string()).unwrap_or_default())
            .collect();
        writeln!(w, "{x},{}", ys.join(","))?;
    }
    Ok(())
}

/// Writes the requested formats into `dir`, returning the written paths.
pub fn export(report: &MetricReport, dir: impl AsRef<Path>, formats: &[ExportFormat]) -> Result<Vec<PathBuf>> {
    if report.points.is_empty() {
        return Err(Error::InvalidConfig("nothing to export: report is empty".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for &format in formats {
        let path = dir.join(format.file_name());
        let mut buf = Vec::new();
        let res = match format {
            ExportFormat::Csv => write_metrics_csv(report, &mut buf),
            ExportFormat::Table => write_table(report, &mut buf),
            ExportFormat::PlotData => write_plot_data(report, &mut buf),
        };
        res.and_then(|_| fs::write(&path, &buf))
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
