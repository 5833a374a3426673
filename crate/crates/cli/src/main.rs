//! `layerdep`: kernel dependence estimates, autoencoder training runs,
//! latent probes and information-plane plots from the command line.
//!
//! Machine-readable results go to stdout as JSON; diagnostics go to stderr.
//! Exit codes: 0 ok, 2 usage or input error, 3 degenerate computation,
//! 4 output already exists.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "layerdep", version, about = "Kernel dependence between network layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct KernelArgs {
    /// Kernel on X: rbf or linear.
    #[arg(long, default_value = "rbf")]
    kernel_x: String,
    /// Kernel on Y: rbf or linear.
    #[arg(long, default_value = "rbf")]
    kernel_y: String,
    /// RBF bandwidth on X: `median` or a positive number.
    #[arg(long)]
    bandwidth_x: Option<String>,
    /// RBF bandwidth on Y: `median` or a positive number.
    #[arg(long)]
    bandwidth_y: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// HSIC between two sample matrices (headerless CSV, one sample per row).
    Hsic {
        x: std::path::PathBuf,
        y: std::path::PathBuf,
        #[command(flatten)]
        kernels: KernelArgs,
        /// Report normalized HSIC in [0, 1] instead of the biased statistic.
        #[arg(long)]
        normalized: bool,
    },
    /// Squared-loss mutual information.
    #[command(group(ArgGroup::new("mode").required(true).args(["lambda", "cv", "fixed_theta"])))]
    Smi {
        x: std::path::PathBuf,
        y: std::path::PathBuf,
        #[command(flatten)]
        kernels: KernelArgs,
        /// Fit the density ratio with this ridge parameter.
        #[arg(long)]
        lambda: Option<f64>,
        /// Choose λ from the default grid by 5-fold cross-validation.
        #[arg(long)]
        cv: bool,
        /// Fixed-θ estimator on the centered X kernel; equals normalized HSIC − 1.
        #[arg(long)]
        fixed_theta: bool,
        /// Seed for the cross-validation fold shuffle.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Permutation test of independence using normalized HSIC.
    Permtest {
        x: std::path::PathBuf,
        y: std::path::PathBuf,
        #[command(flatten)]
        kernels: KernelArgs,
        #[arg(long, default_value_t = 199)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic moving-blob dataset directory.
    Generate {
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long, default_value_t = 100)]
        num_sequences: usize,
        #[arg(long, default_value_t = 20)]
        frames_per_sequence: usize,
        #[arg(long, default_value_t = 16)]
        side: usize,
        #[arg(long, default_value_t = 4)]
        num_classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overwrite an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train an autoencoder from a JSON config; writes manifest.json,
    /// model.bin and trace.jsonl into the output directory.
    Train {
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train an MLP probe on latent codes and report held-out accuracy.
    Probe {
        /// Model checkpoint; latents are the encodings of the dataset frames.
        #[arg(long, conflicts_with = "latents", requires = "data")]
        model: Option<std::path::PathBuf>,
        /// Dataset directory written by `generate`.
        #[arg(long)]
        data: Option<std::path::PathBuf>,
        /// Latent codes as a headerless CSV instead of a model.
        #[arg(long, requires = "labels")]
        latents: Option<std::path::PathBuf>,
        /// One integer class label per line, paired with --latents.
        #[arg(long)]
        labels: Option<std::path::PathBuf>,
        /// JSON probe settings; missing fields take defaults.
        #[arg(long)]
        probe_config: Option<std::path::PathBuf>,
        /// Number of shuffled-label probes for the null distribution.
        #[arg(long, default_value_t = 0)]
        null_trials: usize,
        /// Seed for the label shuffles of the null probes.
        #[arg(long, default_value_t = 0)]
        null_seed: u64,
    },
    /// Render one trace series from one or more trace files as SVG.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        traces: Vec<std::path::PathBuf>,
        /// hsic_xz, hsic_zy or loss.
        #[arg(long)]
        series: String,
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Hsic { x, y, kernels, normalized } => commands::hsic(&x, &y, &kernels, normalized),
        Command::Smi { x, y, kernels, lambda, cv, fixed_theta, seed } => {
            commands::smi(&x, &y, &kernels, commands::SmiMode::from_flags(lambda, cv, fixed_theta), seed)
        }
        Command::Permtest { x, y, kernels, permutations, seed } => {
            commands::permtest(&x, &y, &kernels, permutations, seed)
        }
        Command::Generate { out, num_sequences, frames_per_sequence, side, num_classes, seed, force } => {
            let cfg = layerdep::ae::GeneratorConfig { num_sequences, frames_per_sequence, side, num_classes, seed };
            commands::generate(&cfg, &out, force)
        }
        Command::Train { config, out, force } => commands::train(&config, &out, force),
        Command::Probe { model, data, latents, labels, probe_config, null_trials, null_seed } => {
            let source = match (model, latents) {
                (Some(m), None) => commands::ProbeSource::Model { model: m, data: data.expect("clap requires --data") },
                (None, Some(z)) => commands::ProbeSource::Latents { latents: z, labels: labels.expect("clap requires --labels") },
                _ => {
                    eprintln!("error: probe needs either --model with --data, or --latents with --labels");
                    return ExitCode::from(2);
                }
            };
            commands::probe(&source, probe_config.as_deref(), null_trials, null_seed)
        }
        Command::Plot { traces, series, out } => commands::plot(&traces, &series, &out),
    };
    match result {
        Ok(json) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
