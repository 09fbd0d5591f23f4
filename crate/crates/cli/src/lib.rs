//! Command-line front end for the homogeneous axisymmetric flow solver.
//!
//! Subcommands cover the pipeline end to end: profile solves, admissible
//! center-value intervals, parameter-region classification, the kernel
//! and operator identities, swirl construction, parameter sweeps, and a
//! deterministic self-check battery.

pub mod atlas;
pub mod commands;
pub mod config;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use homax_core::Params;
use std::path::PathBuf;

/// Exit code for parameter or region errors.
pub const EXIT_PARAMETER: i32 = 1;
/// Exit code for solver divergence.
pub const EXIT_DIVERGENCE: i32 = 2;
/// Exit code for I/O and serialization failures.
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "homax",
    about = "Minus-one-homogeneous axisymmetric stationary flows on the sphere",
    version
)]
pub struct Cli {
    /// JSON configuration file (otherwise the HOMAX_CONFIG environment
    /// variable, otherwise built-in defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the mesh size.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Override the mesh grading exponent.
    #[arg(long, global = true)]
    pub grading: Option<f64>,
    /// Override the random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

/// Parameter point shared by most subcommands.
#[derive(Args, Debug, Clone, Copy)]
pub struct PointArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub c1: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub c2: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub c3: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: f64,
}

impl PointArgs {
    pub fn params(&self) -> Params {
        Params::new(self.c1, self.c2, self.c3, self.gamma)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the no-swirl profile equation at one parameter point.
    Noswirl {
        #[command(flatten)]
        point: PointArgs,
        /// Write the profile grid as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the profile grid as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compute the admissible interval of the center value gamma.
    GammaBounds {
        #[arg(long, allow_hyphen_values = true)]
        c1: f64,
        #[arg(long, allow_hyphen_values = true)]
        c2: f64,
        #[arg(long, allow_hyphen_values = true)]
        c3: f64,
    },
    /// Classify a parameter point into its region strata and solver case.
    Classify {
        #[command(flatten)]
        point: PointArgs,
    },
    /// Report the kernel basis and gauge functionals at a point.
    Kernel {
        #[command(flatten)]
        point: PointArgs,
        /// Write kernel vector grids as CSV into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the right-inverse and kernel identities at a point.
    VerifyOperators {
        #[command(flatten)]
        point: PointArgs,
        /// Number of random residual samples.
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
    /// Construct a nearby solution with nonzero swirl.
    Solve {
        #[command(flatten)]
        point: PointArgs,
        /// Kernel coefficients in the basis order reported by `kernel`
        /// (comma-separated; pad with zeros to the kernel dimension).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Vec<f64>,
        /// Run a Newton polish after the fixed-point iteration.
        #[arg(long)]
        newton: bool,
        /// Directory for profile CSV output.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        /// Path for the solution JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Path for reconstructed field samples CSV.
        #[arg(long)]
        field_csv: Option<PathBuf>,
        /// Radius for field reconstruction.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Number of field sample points.
        #[arg(long, default_value_t = 101)]
        field_samples: usize,
    },
    /// Classify a grid of parameter points in parallel.
    Sweep {
        /// JSON grid description.
        #[arg(long)]
        grid: PathBuf,
        /// Output directory for per-point JSON and index.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the deterministic self-check battery.
    Verify,
}

/// Map an error chain to the documented exit codes.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<homax_core::Error>() {
            return match core {
                homax_core::Error::InvalidParameter(_) | homax_core::Error::CaseMismatch(_) => {
                    EXIT_PARAMETER
                }
                homax_core::Error::Divergence(_) => EXIT_DIVERGENCE,
                homax_core::Error::Io(_) | homax_core::Error::Json(_) | homax_core::Error::Csv(_) => {
                    EXIT_IO
                }
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_PARAMETER
}

/// Parse the command line, run the requested command, and print its
/// report to standard output.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.n {
        config.n = n;
    }
    if let Some(g) = cli.grading {
        config.grading_exponent = g;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let text = match &cli.command {
        Command::Noswirl { point, csv, json } => commands::noswirl(
            &point.params(),
            &config,
            csv.as_deref(),
            json.as_deref(),
        )?,
        Command::GammaBounds { c1, c2, c3 } => commands::gamma_bounds(*c1, *c2, *c3, &config)?,
        Command::Classify { point } => commands::classify(&point.params(), &config)?,
        Command::Kernel { point, out } => {
            commands::kernel(&point.params(), &config, out.as_deref())?
        }
        Command::VerifyOperators { point, samples } => {
            commands::verify_operators(&point.params(), &config, *samples)?
        }
        Command::Solve {
            point,
            beta,
            newton,
            csv_dir,
            json,
            field_csv,
            radius,
            field_samples,
        } => {
            let outputs = commands::SolveOutputs {
                newton: *newton,
                csv_dir: csv_dir.clone(),
                json: json.clone(),
                field_csv: field_csv.clone(),
                radius: *radius,
                field_samples: *field_samples,
            };
            commands::solve(&point.params(), beta, &config, &outputs)?
        }
        Command::Sweep { grid, out } => {
            let records = atlas::run_sweep(grid, out, &config)?;
            let profiles = records.iter().filter(|r| r.outcome == "profile").count();
            let blowups = records.iter().filter(|r| r.outcome == "blow-up").count();
            let errors = records.len() - profiles - blowups;
            format!(
                "swept {} points: {} profiles, {} blow-ups, {} errors -> {}\n",
                records.len(),
                profiles,
                blowups,
                errors,
                out.display()
            )
        }
        Command::Verify => commands::verify(&config)?,
    };
    print!("{text}");
    Ok(())
}
