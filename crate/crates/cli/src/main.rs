//! `trajpred`: synthesize, train, predict, evaluate, detect and plot.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, keys or values; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Unusable input data or model files; exit code 3.
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] trajpred::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use trajpred::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Config(_)) => 2,
            CliError::Data(_) | CliError::Core(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "trajpred", version, about = "Attention LSTM pedestrian trajectory prediction")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic crowd scene (and its labels).
    Synth(SynthArgs),
    /// Cluster, train and save a model set.
    Train(TrainArgs),
    /// Predict the continuation of every pedestrian's first window.
    Predict(PredictArgs),
    /// Report ADE / FDE / n-ADE against the constant-velocity baseline.
    Eval(EvalArgs),
    /// Flag abnormal pedestrians.
    Detect(DetectArgs),
    /// Write SVG plots and polyline CSVs.
    Plot(PlotArgs),
    /// Print every configuration key with its effective value.
    Config,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n_pedestrians: Option<String>,
    #[arg(long)]
    n_frames: Option<String>,
    #[arg(long)]
    zone_layout: Option<String>,
    #[arg(long)]
    interaction_strength: Option<String>,
    #[arg(long)]
    anomaly_rate: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    log: Option<String>,
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    train_seed: Option<String>,
    #[arg(long)]
    hidden_size: Option<String>,
    #[arg(long)]
    t_obs: Option<String>,
    #[arg(long)]
    t_pred: Option<String>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    metric_denominator: Option<String>,
    #[arg(long)]
    metric_distance: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    normal_scene: Option<String>,
    #[arg(long)]
    naive_threshold: Option<String>,
    /// Print the confusion matrix; requires labels.
    #[arg(long)]
    confusion: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    plot_dir: Option<String>,
    /// Comma-separated pedestrian ids, or `all`.
    #[arg(long)]
    ids: Option<String>,
}

type Overrides<'a> = Vec<(&'static str, &'a Option<String>)>;

impl Command {
    fn overrides(&self) -> Overrides<'_> {
        match self {
            Command::Synth(a) => vec![
                ("out", &a.out),
                ("labels", &a.labels),
                ("seed", &a.seed),
                ("n_pedestrians", &a.n_pedestrians),
                ("n_frames", &a.n_frames),
                ("zone_layout", &a.zone_layout),
                ("interaction_strength", &a.interaction_strength),
                ("anomaly_rate", &a.anomaly_rate),
            ],
            Command::Train(a) => vec![
                ("scene", &a.scene),
                ("model", &a.model),
                ("log", &a.log),
                ("ablation", &a.ablation),
                ("epochs", &a.epochs),
                ("train_seed", &a.train_seed),
                ("hidden_size", &a.hidden_size),
                ("t_obs", &a.t_obs),
                ("t_pred", &a.t_pred),
            ],
            Command::Predict(a) => vec![("scene", &a.scene), ("model", &a.model), ("out", &a.out)],
            Command::Eval(a) => vec![
                ("scene", &a.scene),
                ("model", &a.model),
                ("report", &a.report),
                ("metric_denominator", &a.metric_denominator),
                ("metric_distance", &a.metric_distance),
                ("dataset", &a.dataset),
            ],
            Command::Detect(a) => vec![
                ("scene", &a.scene),
                ("model", &a.model),
                ("labels", &a.labels),
                ("out", &a.out),
                ("method", &a.method),
                ("normal_scene", &a.normal_scene),
                ("naive_threshold", &a.naive_threshold),
            ],
            Command::Plot(a) => vec![
                ("scene", &a.scene),
                ("model", &a.model),
                ("plot_dir", &a.plot_dir),
                ("plot_ids", &a.ids),
            ],
            Command::Config => Vec::new(),
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    for (key, value) in cli.command.overrides() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Command::Detect(a) = &cli.command {
        if a.confusion {
            cfg.set("confusion", "true")?;
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Predict(_) => commands::predict(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::Detect(_) => commands::detect(&cfg),
        Command::Plot(_) => commands::plot(&cfg),
        Command::Config => {
            print!("{}", cfg.dump());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
