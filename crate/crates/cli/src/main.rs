use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zsl_core::eval::Space;
use zsl_core::ZslError;

mod commands;

/// Zero-shot learning with user-defined and latent attribute embeddings.
#[derive(Debug, Parser)]
#[command(name = "zsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and a run.json that trains on it.
    GenSynth(GenSynthArgs),
    /// Check a dataset for consistency and list every violation.
    Validate(RunArgs),
    /// Train the per-scale embedding models (and the combiner).
    Train(TrainArgs),
    /// Compute ridge transfer weights and LA prototypes.
    Transfer(TransferArgs),
    /// Predict the class of every unseen-class sample.
    Predict(EvalArgs),
    /// Zero-shot MCA over the unseen classes.
    Eval(EvalArgs),
    /// Generalized zero-shot evaluation over seen and unseen classes.
    GzslEval(EvalArgs),
    /// Soft-crop and zoom an image; writes the mask and zoomed grid as CSV.
    ZoomDemo(ZoomDemoArgs),
    /// Summarize the outputs of a run, optionally ranking samples by one
    /// embedded element.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Path to run.json.
    #[arg(long)]
    config: PathBuf,
    /// Overrides output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    c_s: Option<usize>,
    #[arg(long)]
    c_u: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_lat_signal: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    latent_amplitude: Option<f64>,
    #[arg(long)]
    scales: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Ridge coefficient.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// ua, la or ua+la; defaults to the config's space.
    #[arg(long)]
    space: Option<Space>,
}

#[derive(Debug, Args)]
struct ZoomDemoArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Single-channel image as a CSV or binary matrix; a synthetic image is
    /// used when absent.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Side of the synthetic image.
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Zoom parameters; when absent they come from a window search.
    #[arg(long, requires_all = ["zy", "zs"])]
    zx: Option<f64>,
    #[arg(long, requires_all = ["zx", "zs"])]
    zy: Option<f64>,
    #[arg(long, requires_all = ["zx", "zy"])]
    zs: Option<f64>,
    /// Mask steepness before resolution rescaling.
    #[arg(long, default_value_t = 10.0)]
    steepness: f64,
    /// Window side as a fraction of min(H, W) for the search.
    #[arg(long, default_value_t = zsl_core::zoom::DEFAULT_WINDOW_FRAC)]
    window_frac: f64,
    /// Output grid side; defaults to the input size.
    #[arg(long)]
    out_size: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Embedded element to rank samples by.
    #[arg(long)]
    element: Option<usize>,
    /// ua or la, for --element.
    #[arg(long, default_value = "ua")]
    space: Space,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Scale whose model is used for --element.
    #[arg(long, default_value_t = 0)]
    scale: usize,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("ZSL_LOG", "error");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => commands::gen_synth(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Transfer(a) => commands::transfer(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::GzslEval(a) => commands::gzsl_eval(&a),
        Command::ZoomDemo(a) => commands::zoom_demo(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("zsl: {e}");
            match e {
                ZslError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
