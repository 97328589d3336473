//! `harp`: simulate two-site diffusion data, fit SH, train and apply the
//! harmonization network, and compute the variability metrics.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harp::HarpError;

#[derive(Debug, Parser)]
#[command(
    name = "harp",
    version,
    about = "SH-domain diffusion MRI harmonization"
)]
pub struct Cli {
    /// Seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Gradients {
    #[arg(long)]
    pub bval: PathBuf,
    #[arg(long)]
    pub bvec: PathBuf,
}

#[derive(Debug, Args)]
pub struct OdfArgs {
    /// Fiber response eigenvalues (parallel, perpendicular), mm^2/s.
    #[arg(long, num_args = 2, default_values_t = [1.7e-3, 0.2e-3])]
    pub response: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub csd_lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub csd_tau: f64,
    #[arg(long, default_value_t = 3)]
    pub sphere_subdivisions: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a paired two-site dataset from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit b0-normalised SH coefficients to a DWI volume.
    FitSh {
        #[arg(long)]
        dwi: PathBuf,
        #[command(flatten)]
        gradients: Gradients,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        lmax: usize,
        #[arg(long, default_value_t = 0.006)]
        lambda: f64,
        /// Shell to fit when the table has several.
        #[arg(long)]
        shell: Option<f64>,
    },
    /// Resample SH coefficients on a gradient table (b0 entries become 1).
    Recon {
        #[arg(long)]
        sh: PathBuf,
        #[command(flatten)]
        gradients: Gradients,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the scale network on paired source/target SH volumes.
    Train {
        #[arg(long)]
        source_sh: PathBuf,
        #[arg(long)]
        target_sh: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Training hyperparameters (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// In-vivo source-site SH volumes whose c0 distribution sets the
        /// voxel filter threshold; the training source is used when omitted.
        #[arg(long, num_args = 1.., requires = "reference_mask")]
        reference_sh: Vec<PathBuf>,
        #[arg(long)]
        reference_mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Harmonize an SH volume with a trained model.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sh: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit LinearRISH scale maps between two groups of SH volumes.
    RishFit {
        #[arg(long, num_args = 1.., required = true)]
        source_sh: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        target_sh: Vec<PathBuf>,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = harp::rish::DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = harp::rish::DEFAULT_SMAX)]
        s_max: f64,
    },
    /// Apply LinearRISH scale maps.
    RishApply {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        sh: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// FA and MD from a tensor fit (to a DWI, or to the signal an SH volume represents).
    Scalars {
        #[arg(long, conflicts_with = "sh", required_unless_present = "sh")]
        dwi: Option<PathBuf>,
        #[arg(long)]
        sh: Option<PathBuf>,
        #[command(flatten)]
        gradients: Gradients,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        fa_out: PathBuf,
        #[arg(long)]
        md_out: PathBuf,
        #[arg(long)]
        dir_out: Option<PathBuf>,
    },
    /// GFA of the CSD fiber ODF.
    Gfa {
        #[arg(long)]
        sh: PathBuf,
        #[command(flatten)]
        gradients: Gradients,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fodf_out: Option<PathBuf>,
        #[command(flatten)]
        odf: OdfArgs,
    },
    /// Principal fiber peak of the CSD fiber ODF.
    Peaks {
        #[arg(long)]
        sh: PathBuf,
        #[command(flatten)]
        gradients: Gradients,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        rel_threshold: f64,
        #[arg(long, default_value_t = 25.0)]
        min_separation: f64,
        #[command(flatten)]
        odf: OdfArgs,
    },
    /// Pooled voxel-wise standard error; one --subject per subject,
    /// listing that subject's K maps separated by commas.
    Se {
        #[arg(long = "subject", required = true)]
        subjects: Vec<String>,
        /// One mask per subject, or a single shared mask.
        #[arg(long = "mask", required = true)]
        masks: Vec<PathBuf>,
    },
    /// Weighted Dice of two maps thresholded at --threshold.
    Wdice {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Mean angular error between two direction fields.
    Angular {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble a variability table (CSV, optionally JSON) from a report spec.
    Report {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
}

/// Exit statuses.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Harp(HarpError),
}

impl From<HarpError> for CliError {
    fn from(e: HarpError) -> Self {
        CliError::Harp(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Harp(e) if e.is_format() => EXIT_FORMAT,
            CliError::Harp(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Harp(_) => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Harp(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
