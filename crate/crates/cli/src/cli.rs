use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cyclesearch", version, about = "Architecture search for unpaired image translation")]
pub struct Cli {
    /// Log level for messages on standard error (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search generator and discriminator architectures.
    Search(SearchArgs),
    /// Print the number of architectures in the search space.
    SpaceSize(SpaceSizeArgs),
    /// Train discrete architectures from fresh weights.
    Train(TrainArgs),
    /// Score trained generators, or compare two image folders.
    Eval(EvalArgs),
    /// Write a synthetic unpaired dataset as PNG folders.
    Gendata(GendataArgs),
    /// Turn saved architecture weights into architecture specs.
    Discretize(DiscretizeArgs),
    /// Re-run a command from its manifest and compare outputs.
    Replay(ReplayArgs),
}

/// Where images come from: a `trainA`/`trainB` folder tree or a synthetic task.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Dataset root containing trainA/ and trainB/.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,

    /// Synthetic task: color_swap or texture_asym.
    #[arg(long)]
    pub synthetic: Option<String>,

    #[arg(long, default_value_t = 32)]
    pub image_size: usize,

    #[arg(long, default_value_t = 16)]
    pub n_a: usize,

    #[arg(long, default_value_t = 16)]
    pub n_b: usize,

    /// Seed of the synthetic images (defaults to --seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// JSON file with search configuration fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// of, tf, th or ths.
    #[arg(long)]
    pub scheme: Option<String>,

    /// Cells per generator.
    #[arg(long)]
    pub n: Option<usize>,

    /// Hidden dimension during search.
    #[arg(long)]
    pub hsearch: Option<usize>,

    /// Hidden dimension written into the emitted specs.
    #[arg(long)]
    pub hfinal: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// Epoch at which THS exchanges its halves.
    #[arg(long)]
    pub swap_epoch: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Use the saturating generator loss log(1 - D(G(x))).
    #[arg(long)]
    pub saturating: bool,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpaceSizeArgs {
    /// Cells per generator.
    #[arg(long)]
    pub n: usize,

    /// Size of the joint space of both generators and both discriminators.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Search output directory holding spec_GA.json, spec_GB.json, spec_DA.json, spec_DB.json.
    #[arg(long, conflicts_with_all = ["ga", "gb", "baseline"])]
    pub run: Option<PathBuf>,

    #[arg(long, requires = "gb")]
    pub ga: Option<PathBuf>,

    #[arg(long, requires = "ga")]
    pub gb: Option<PathBuf>,

    #[arg(long)]
    pub da: Option<PathBuf>,

    #[arg(long)]
    pub db: Option<PathBuf>,

    /// Train the fixed ResNet reference generators instead of searched ones.
    #[arg(long, conflicts_with_all = ["ga", "gb"])]
    pub baseline: bool,

    /// Hidden dimension (defaults to the generator spec's hidden_dim; required with --baseline).
    #[arg(long)]
    pub hidden: Option<usize>,

    #[arg(long, default_value_t = 30)]
    pub epochs: usize,

    /// First seed; repeats use consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Independent training runs; the one with the lowest A→B proxy distance is kept.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    /// Also write the initial weights.
    #[arg(long)]
    pub save_init: bool,

    /// Label used in the results table.
    #[arg(long)]
    pub label: Option<String>,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Training output directory (setup.json and checkpoints/).
    #[arg(long, conflicts_with_all = ["images_x", "images_y"])]
    pub run: Option<PathBuf>,

    /// First image folder for a direct proxy-distance comparison.
    #[arg(long, requires = "images_y")]
    pub images_x: Option<PathBuf>,

    #[arg(long, requires = "images_x")]
    pub images_y: Option<PathBuf>,

    /// Label used in the results table.
    #[arg(long)]
    pub label: Option<String>,

    /// Results table to append to.
    #[arg(long)]
    pub results: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    /// color_swap or texture_asym.
    #[arg(long)]
    pub kind: String,

    #[arg(long, default_value_t = 32)]
    pub size: usize,

    #[arg(long, default_value_t = 16)]
    pub n_a: usize,

    #[arg(long, default_value_t = 16)]
    pub n_b: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiscretizeArgs {
    /// Architecture-weight documents (alpha_*.json).
    #[arg(long = "alpha", required = true, num_args = 1..)]
    pub alphas: Vec<PathBuf>,

    /// Hidden dimension written into the specs.
    #[arg(long)]
    pub hidden: usize,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// manifest.json of the run to repeat.
    pub manifest: PathBuf,

    /// Directory for the repeated run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
