use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "markermap",
    version,
    about = "Differentiable marker-gene selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one method and score its markers with k-NN on the test split.
    Select(Shared),
    /// Sweep methods, panel sizes and seeds.
    Benchmark(Shared),
    /// Accuracy under training-label noise.
    Noise(Shared),
    /// Reconstruct held-out cells from their markers and compare distributions.
    Reconstruct(Shared),
    /// Write planted-marker synthetic data.
    Synth(Shared),
    /// Score an existing marker panel.
    Evaluate(Shared),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Select(_) => "select",
            Command::Benchmark(_) => "benchmark",
            Command::Noise(_) => "noise",
            Command::Reconstruct(_) => "reconstruct",
            Command::Synth(_) => "synth",
            Command::Evaluate(_) => "evaluate",
        }
    }

    pub fn shared(&self) -> &Shared {
        match self {
            Command::Select(s)
            | Command::Benchmark(s)
            | Command::Noise(s)
            | Command::Reconstruct(s)
            | Command::Synth(s)
            | Command::Evaluate(s) => s,
        }
    }
}

/// Every flag is optional so that config-file values survive unless
/// overridden on the command line.
#[derive(Debug, Default, Args)]
pub struct Shared {
    /// TOML config (or a previous report.json) with the same keys as the flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Expression CSV: one row per cell, one column per gene.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Use generated planted-marker data instead of --data.
    #[arg(long)]
    pub synthetic: bool,
    /// Column holding class labels (default: `label` when present).
    #[arg(long)]
    pub label_column: Option<String>,
    /// markermap-supervised, markermap-unsupervised, markermap-joint,
    /// concrete-vae, global-gumbel or random.
    #[arg(long)]
    pub mode: Option<String>,
    /// Methods compared by `benchmark`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Panel size; `benchmark` accepts a comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Explicit seed list for `benchmark` and `noise`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// Named size preset: zeisel, paul, citeseq or mouse-brain.
    #[arg(long)]
    pub preset: Option<String>,

    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tau_initial: Option<f64>,
    #[arg(long)]
    pub tau_final: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub min_epochs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs over which the temperature decays.
    #[arg(long)]
    pub anneal_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fixed learning rate; skips the learning-rate search.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_grid_points: Option<usize>,
    #[arg(long)]
    pub kl_weight: Option<f64>,
    /// cross-entropy or mse.
    #[arg(long)]
    pub class_loss: Option<String>,
    /// File of gene names or indices whose logits start boosted.
    #[arg(long, value_name = "FILE")]
    pub prior_markers: Option<PathBuf>,

    /// Neighbours used by the k-NN evaluation.
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub log_transform: Option<bool>,
    #[arg(long)]
    pub stratified: Option<bool>,

    /// Label-noise fractions for `noise`.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    /// both or selection-only.
    #[arg(long)]
    pub protocol: Option<String>,

    /// Marker panel for `evaluate`: gene names or column indices, one per line.
    #[arg(long, value_name = "FILE")]
    pub markers: Option<PathBuf>,

    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub genes: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub planted: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub synth_seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
