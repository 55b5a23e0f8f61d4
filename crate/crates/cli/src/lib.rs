//! `m4d` command implementations. `main.rs` only parses arguments and maps
//! errors to exit codes; everything else lives here so tests can drive it.

pub mod ablate;
pub mod bench;
pub mod run;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use ablate::{ablation_rows, run_ablation, AblationAxis, AblationRow, RowResult};
pub use bench::parse_lengths;

#[derive(Debug, Parser)]
#[command(name = "m4d", version, about = "State-space backbone for point cloud videos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes model.ckpt, metrics.log and config.txt to the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a .pcv file or directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Model configuration; defaults to config.txt next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Time the sequence kernels and fit log-log runtime slopes.
    Bench {
        /// Comma list; `a,...,b` fills in powers of two between a and b.
        #[arg(long, default_value = "256,512,...,8192")]
        lengths: String,
        #[arg(long, default_value = "ssm_seq,ssm_par,attention")]
        kernels: String,
        /// Channel width.
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model per row of an ablation table and report the task metric.
    Ablate {
        /// One of modules, blocks, pe, order, stride_radius.
        #[arg(long)]
        axis: AblationAxis,
        #[arg(long)]
        config: PathBuf,
        /// Training runs per row (seeds seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Two block counts crossed for the `blocks` axis.
        #[arg(long, default_value = "4,12")]
        blocks: String,
    },
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, out: dir } => run::train(&config, dir, out),
        Command::Eval { ckpt, data, config } => run::eval(&ckpt, &data, config.as_deref(), out),
        Command::Bench { lengths, kernels, d, seed } => bench::bench(&lengths, &kernels, d, seed, out),
        Command::Ablate { axis, config, repeats, blocks } => ablate::ablate(axis, &config, repeats, &blocks, out),
        Command::Gen { spec, out: path } => run::gen(&spec, &path, out),
    }
}

/// 2 for configuration errors (same as argument errors), 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err
        .chain()
        .any(|c| matches!(c.downcast_ref::<m4d_core::Error>(), Some(m4d_core::Error::Config(_))));
    if config {
        2
    } else {
        1
    }
}
