//! `nrel`: generate toy data, train a denoiser, invert, edit and sweep.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "nrel", version, about = "Training-free non-rigid editing on toy diffusion models")]
struct Cli {
    /// Flat `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labeled dataset from the toy mixture.
    #[command(args_override_self = true)]
    GenData(GenDataArgs),
    /// Train the MLP denoiser on a dataset.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Invert one point and report its reconstruction.
    #[command(args_override_self = true)]
    Invert(InvertArgs),
    /// Edit one point toward a target prompt.
    #[command(args_override_self = true)]
    Edit(EditArgs),
    /// Run edits over an (alpha, rho, seed) grid.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Round-trip check of DDIM inversion on the analytic backend.
    #[command(args_override_self = true)]
    ReconCheck(ReconCheckArgs),
    /// Finetuning baseline: sample from fresh noise with a finetuned network.
    #[command(args_override_self = true)]
    ImagicBaseline(ImagicArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    #[arg(long, env = "NREL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Also write a scatter plot of the samples.
    #[arg(long, value_name = "FILE")]
    render: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    size: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long, value_name = "MODEL")]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, env = "NREL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    cond_drop: f64,
    /// Per-epoch loss curve as `epoch,loss`.
    #[arg(long, value_name = "FILE")]
    losses: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Gmm,
    Net,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Ddim,
    NullText,
}

/// Where the input point and the model come from.
#[derive(Args)]
struct InputArgs {
    /// Row of the dataset to use as input.
    #[arg(long, value_name = "ROW_INDEX", conflicts_with = "point", required_unless_present = "point")]
    input: Option<usize>,
    /// Explicit input point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_name = "X,Y", action = ArgAction::Set)]
    point: Option<Vec<f64>>,
    /// Dataset file; also fixes the analytic mixture and the data range.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "gmm")]
    backend: BackendKind,
    /// Network checkpoint, required with `--backend net`.
    #[arg(long, value_name = "MODEL", required_if_eq("backend", "net"))]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 7.5)]
    guidance: f64,
    #[arg(long, value_enum, default_value = "ddim")]
    kind: KindArg,
    /// Null-text optimization steps per sampling step.
    #[arg(long, default_value_t = 10)]
    inner_steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    nti_lr: f64,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Source prompt; defaults to the row's label, or the null prompt for `--point`.
    #[arg(long)]
    src: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EditFlags {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Source prompt, whitespace separated; empty for the null prompt.
    #[arg(long)]
    src: String,
    #[arg(long)]
    tgt: String,
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 200)]
    opt_iters: usize,
    /// Embedding learning rate; defaults to 1e-2 for gmm and 1e-3 for net.
    #[arg(long)]
    opt_lr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    opt_batch: usize,
    #[arg(long, env = "NREL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    record_runtime: bool,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Side length of rendered pixmaps.
    #[arg(long, default_value_t = 256)]
    size: usize,
}

#[derive(Args)]
struct EditArgs {
    #[command(flatten)]
    edit: EditFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    edit: EditFlags,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true, action = ArgAction::Set)]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, action = ArgAction::Set)]
    rhos: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, action = ArgAction::Set)]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct ReconCheckArgs {
    #[arg(long, value_enum, default_value = "gmm")]
    backend: BackendKind,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Dataset whose mixture is checked; the two-class toy mixture if omitted.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Number of inputs per case.
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, env = "NREL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct ImagicArgs {
    #[command(flatten)]
    edit: EditFlags,
    #[arg(long, default_value_t = 400)]
    finetune_iters: usize,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = config::expand(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Invert(a) => commands::invert(&a),
        Command::Edit(a) => commands::edit(&a.edit),
        Command::Sweep(a) => commands::sweep(&a),
        Command::ReconCheck(a) => commands::recon_check(&a),
        Command::ImagicBaseline(a) => commands::imagic(&a),
    }
}
