use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oikf_core::experiment::{measure_runtime, write_table, ExperimentFailure};
use oikf_core::*;

#[derive(Parser)]
#[command(name = "oikf", version, about = "Outlier-insensitive Kalman filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep on simulated white-noise-acceleration trajectories.
    Synth(SynthArgs),
    /// Sweep the filter noise level over a recorded CSV trajectory.
    Dataset(DatasetArgs),
    /// Tune r² or q² of the filters on a grid, data held at the base values.
    Grid(GridArgs),
    /// Median per-step runtime of each filter on one long trajectory.
    Runtime(RuntimeArgs),
    /// Write one simulated trajectory (t, y.., x..) to CSV.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    R2,
    Q2,
}

impl From<Param> for SweepParam {
    fn from(p: Param) -> Self {
        match p {
            Param::R2 => SweepParam::RSq,
            Param::Q2 => SweepParam::QSq,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObserveArg {
    Full,
    Position,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Random,
    Positive,
}

#[derive(Clone, Copy, ValueEnum)]
enum GammaInitArg {
    PriorResidual,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
    Plot,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Table => ExportFormat::Table,
            FormatArg::Plot => ExportFormat::PlotData,
        }
    }
}

#[derive(Args, Clone)]
struct FilterArgs {
    /// Filters to compare: kf, chi2, oikf-em, oikf-am.
    #[arg(long, value_delimiter = ',', default_value = "kf,chi2,oikf-em,oikf-am")]
    filters: Vec<FilterKind>,
    /// Maximum NUV passes per time step.
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    /// Relative change in γ² that ends the NUV passes.
    #[arg(long, default_value_t = 1e-6)]
    conv_tol: f64,
    /// Starting value of γ² at each step.
    #[arg(long, value_enum, default_value = "prior-residual")]
    gamma_init: GammaInitArg,
    /// Confidence level of the χ² gate.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Initialize from the first observation instead of ground truth.
    #[arg(long)]
    init_from_observation: bool,
    /// Initial covariance scale (default: largest diagonal entry of Q or R).
    #[arg(long)]
    init_cov_scale: Option<f64>,
}

impl FilterArgs {
    fn settings(&self) -> FilterSettings {
        FilterSettings {
            oikf: OikfConfig {
                max_iters: self.max_iters,
                conv_tol: self.conv_tol,
                gamma_init: match self.gamma_init {
                    GammaInitArg::PriorResidual => GammaInit::PriorResidual,
                    GammaInitArg::Zero => GammaInit::Zero,
                },
                ..OikfConfig::default()
            },
            chi2: Chi2Config {
                confidence: self.confidence,
            },
        }
    }

    fn init(&self) -> InitConfig {
        InitConfig {
            from_truth: !self.init_from_observation,
            cov_scale: self.init_cov_scale,
        }
    }
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Sampling interval τ.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Process noise q² in dB.
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    q2_db: f64,
    /// Observation noise r² in dB.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r2_db: f64,
    /// Trajectory length.
    #[arg(long, default_value_t = 2000)]
    horizon: usize,
    #[arg(long, value_enum, default_value = "full")]
    observe: ObserveArg,
    /// Per-entry outlier probability.
    #[arg(long, default_value_t = 0.2)]
    outlier_prob: f64,
    /// Rayleigh scale of outlier magnitudes.
    #[arg(long, default_value_t = 30.0)]
    rayleigh_scale: f64,
    #[arg(long, value_enum, default_value = "random")]
    outlier_sign: SignArg,
}

impl ScenarioArgs {
    fn wna(&self) -> WnaSpec {
        WnaSpec {
            tau: self.tau,
            q_sq: from_db(self.q2_db),
            r_sq: from_db(self.r2_db),
            horizon: self.horizon,
        }
    }

    fn outliers(&self) -> OutlierSpec {
        OutlierSpec {
            prob: self.outlier_prob,
            rayleigh_scale: self.rayleigh_scale,
            sign_mode: match self.outlier_sign {
                SignArg::Random => SignMode::RandomSign,
                SignArg::Positive => SignMode::Positive,
            },
        }
    }

    fn observe(&self) -> Observe {
        match self.observe {
            ObserveArg::Full => Observe::Full,
            ObserveArg::Position => Observe::Position,
        }
    }

    fn model(&self) -> oikf_core::Result<LinearGaussianModel> {
        match self.observe {
            ObserveArg::Full => wna_model(&self.wna()),
            ObserveArg::Position => wna_position_model(&self.wna()),
        }
    }

    fn scenario(&self) -> ScenarioSpec {
        ScenarioSpec::Synthetic {
            wna: self.wna(),
            outliers: self.outliers(),
            observe: self.observe(),
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory for the exported report.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,table,plot")]
    format: Vec<FormatArg>,
}

#[derive(Args)]
struct SynthArgs {
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Parameter to sweep; data and filters move together.
    #[arg(long, value_enum, default_value = "r2")]
    sweep: Param,
    /// Sweep values in dB.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-10,-5,0,5,10,15,20"
    )]
    values_db: Vec<f64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    filters: FilterArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    csv: PathBuf,
    /// TOML file naming the time, observation and truth columns.
    #[arg(long, conflicts_with_all = ["time_col", "obs_cols", "truth_cols"])]
    schema: Option<PathBuf>,
    #[arg(long)]
    time_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    obs_cols: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    truth_cols: Vec<String>,
    /// Separate ground-truth CSV, interpolated onto the observation times.
    /// Uses the schema's time and truth column names.
    #[arg(long)]
    truth_csv: Option<PathBuf>,
    /// TOML model file (F, H, Q, R or r_sq, position). Without one, each
    /// observation column is filtered as its own position axis.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sampling interval (default: median interval of the data).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    q2_db: f64,
    /// Filter r² values to evaluate, in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    r2_db: Vec<f64>,
    #[command(flatten)]
    filters: FilterArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_enum, default_value = "r2")]
    param: Param,
    /// Grid of filter values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    grid_db: Vec<f64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    filters: FilterArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RuntimeArgs {
    #[arg(long)]
    seed: u64,
    /// Timed repetitions per filter (at least 10).
    #[arg(long, default_value_t = 21)]
    reps: usize,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    /// Destination CSV file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

fn formats(output: &OutputArgs) -> Vec<ExportFormat> {
    output.format.iter().map(|&f| f.into()).collect()
}

/// Exports and prints a finished report, or flushes whatever completed
/// before a failure and returns the error.
fn finish(
    result: std::result::Result<MetricReport, Box<ExperimentFailure>>,
    output: &OutputArgs,
) -> anyhow::Result<MetricReport> {
    match result {
        Ok(report) => {
            for path in export(&report, &output.out, &formats(output))? {
                eprintln!("wrote {}", path.display());
            }
            write_table(&report, std::io::stdout().lock())?;
            Ok(report)
        }
        Err(failure) => {
            if !failure.partial.points.is_empty() {
                for path in export(&failure.partial, &output.out, &formats(output))? {
                    eprintln!("wrote partial {}", path.display());
                }
            }
            Err(failure.error).context("experiment failed")
        }
    }
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec = ExperimentSpec {
        filters: args.filters.filters.clone(),
        scenario: args.scenario.scenario(),
        sweep: Sweep {
            param: args.sweep.into(),
            values_db: args.values_db.clone(),
        },
        trials: args.trials,
        seed_base: args.seed,
        settings: args.filters.settings(),
        init: args.filters.init(),
    };
    finish(run_experiment(&spec), &args.output).map(drop)
}

fn load_dataset(args: &DatasetArgs) -> anyhow::Result<TrajectoryDataset> {
    let schema = match &args.schema {
        Some(path) => DatasetSchema::from_toml_file(path)?,
        None => {
            let Some(time) = &args.time_col else {
                bail!("pass --schema or --time-col with --obs-cols");
            };
            if args.obs_cols.is_empty() {
                bail!("--obs-cols is required without --schema");
            }
            let obs: Vec<&str> = args.obs_cols.iter().map(String::as_str).collect();
            let truth: Vec<&str> = args.truth_cols.iter().map(String::as_str).collect();
            DatasetSchema::new(time, &obs, &truth)
        }
    };
    let (main_schema, truth_file) = match &args.truth_csv {
        Some(path) => (
            DatasetSchema {
                truth_columns: Vec::new(),
                ..schema.clone()
            },
            Some(path),
        ),
        None => (schema.clone(), None),
    };
    let mut dataset = load_csv(&args.csv, &main_schema).with_context(|| format!("reading {}", args.csv.display()))?;
    if dataset.dropped_rows > 0 {
        eprintln!("dropped {} malformed rows", dataset.dropped_rows);
    }
    if let Some(path) = truth_file {
        if schema.truth_columns.is_empty() {
            bail!("--truth-csv needs truth column names");
        }
        let (times, values) = load_truth_csv(path, &schema.time_column, &schema.truth_columns)
            .with_context(|| format!("reading {}", path.display()))?;
        dataset.attach_truth(&times, &values)?;
    }
    Ok(dataset)
}

fn dataset(args: DatasetArgs) -> anyhow::Result<()> {
    let data = load_dataset(&args)?;
    let model = args.model.as_deref().map(ModelConfig::from_file).transpose()?;
    let tau = match args.tau.or_else(|| data.sample_interval()) {
        Some(t) => t,
        None => bail!("cannot infer a sampling interval; pass --tau"),
    };
    let r_sq = from_db(args.r2_db[0]);
    let spec = ExperimentSpec {
        filters: args.filters.filters.clone(),
        scenario: ScenarioSpec::Dataset {
            dataset: Box::new(data),
            tau,
            q_sq: from_db(args.q2_db),
            r_sq,
            model,
        },
        sweep: Sweep {
            param: SweepParam::RSq,
            values_db: args.r2_db.clone(),
        },
        trials: 1,
        seed_base: 0,
        settings: args.filters.settings(),
        init: args.filters.init(),
    };
    finish(run_experiment(&spec), &args.output).map(drop)
}

fn grid(args: GridArgs) -> anyhow::Result<()> {
    let spec = ExperimentSpec {
        filters: args.filters.filters.clone(),
        scenario: args.scenario.scenario(),
        sweep: Sweep {
            param: args.param.into(),
            values_db: args.grid_db.clone(),
        },
        trials: args.trials,
        seed_base: args.seed,
        settings: args.filters.settings(),
        init: args.filters.init(),
    };
    let param: SweepParam = args.param.into();
    let result = grid_search(&spec, param, &args.grid_db);
    let report = finish(result.map(|r| r.report), &args.output)?;
    for (filter, best) in oikf_core::experiment::select_best(&report, &spec.filters) {
        println!("best {} for {filter}: {best} dB", param.label());
    }
    Ok(())
}

fn runtime(args: RuntimeArgs) -> anyhow::Result<()> {
    let model = args.scenario.model()?;
    let traj = generate(&model, &args.scenario.wna(), &args.scenario.outliers(), args.seed)?;
    let settings = args.filters.settings();
    println!("{:<10} {:>14}", "filter", "per-step[us]");
    for &kind in &args.filters.filters {
        let t = measure_runtime(kind, &settings, &model, &traj, args.reps)?;
        println!("{:<10} {:>14.3}", kind.label(), t.as_secs_f64() * 1e6);
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let model = args.scenario.model()?;
    let traj = generate(&model, &args.scenario.wna(), &args.scenario.outliers(), args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    export_trajectory(&args.out, &traj, args.scenario.tau)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Dataset(a) => dataset(a),
        Command::Grid(a) => grid(a),
        Command::Runtime(a) => runtime(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
