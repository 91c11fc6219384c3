//! `ellqg`: evaluation tables and verification suites for the elliptic
//! quantum group numerics.
//!
//! Exit codes: 0 success, 1 a check failed or a computation raised an error,
//! 2 usage or configuration error.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Format;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Compute(String),
}

impl From<ellqg::Error> for CliError {
    fn from(e: ellqg::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "ellqg", version, about = "Elliptic quantum group numerics: tables and verification suites")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON parameter file (defaults to the shipped configs/default.json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; overrides the config's `format`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for parallel checks and sums.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for random parameter sets; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Negative control: drop the dynamical shift in the GT exchange checks.
    #[arg(long, global = true)]
    pub break_shift: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jacobi brackets [u], [u]* and θ_p(q^{2u}).
    Theta {
        /// Additive points u (complex, e.g. `0.3+0.1i`); defaults to log z/(2 ln q).
        #[arg(long = "u", allow_hyphen_values = true)]
        u: Vec<String>,
    },
    /// Entries of the dynamical R-matrix R̄(z, Π).
    Rmat {
        /// Spectral parameter; defaults to z_1 of the config.
        #[arg(long, allow_hyphen_values = true)]
        z: Option<String>,
        /// Build on p* instead of p.
        #[arg(long)]
        starred: bool,
        /// Include the scalar factor ρ⁺(z), giving R⁺(z, Π).
        #[arg(long)]
        plus: bool,
    },
    /// Elliptic weight functions.
    Wf {
        #[command(subcommand)]
        op: WfOp,
    },
    /// Gelfand-Tsetlin basis and current action.
    Gt {
        #[command(subcommand)]
        op: GtOp,
    },
    /// q-KZ integrand, grids and torus quadrature.
    Qkz {
        #[command(subcommand)]
        op: QkzOp,
    },
    /// Run a verification suite: ellfn, rmat, wf, gt, qkz or all.
    Verify { suite: String },
}

#[derive(Debug, Subcommand)]
pub enum WfOp {
    /// W̃_I at the config's t, or at t = z_J with --at.
    Eval {
        /// Color string μ of I, e.g. `2,1,1`.
        #[arg(long)]
        colors: String,
        /// Color string of J for the specialization t = z_J.
        #[arg(long)]
        at: Option<String>,
    },
    /// Off-triangle and diagonal deviations over all pairs of the config's λ.
    Triangularity,
    /// Worst transition residual over all μ of the config's λ and adjacent swaps.
    Transition,
    /// Matrix of stable-envelope restrictions Stab(I)|_J.
    Stab,
}

#[derive(Debug, Subcommand)]
pub enum GtOp {
    /// Transition matrix from ξ_I to the standard basis.
    Basis,
    /// Action of e_j, f_j or φ_j on ξ_I.
    Act {
        #[arg(long, value_parser = ["e", "f", "phi"])]
        op: String,
        #[arg(long)]
        j: usize,
        /// Color string μ of I.
        #[arg(long)]
        colors: String,
        /// Spectral point w for φ.
        #[arg(long, allow_hyphen_values = true)]
        w: Option<String>,
        /// φ⁺ or φ⁻.
        #[arg(long, default_value = "plus", value_parser = ["plus", "minus"])]
        sign: String,
    },
    /// The gt verification suite.
    Verify,
}

#[derive(Debug, Args)]
pub struct QkzArgs {
    /// Color string μ of the cocycle label I; defaults to the first partition.
    #[arg(long)]
    pub colors: Option<String>,
    /// Color string of the cycle label J (elliptic kernel only).
    #[arg(long)]
    pub cycle: Option<String>,
    /// Use the trigonometric kernel even if the config sets Q.
    #[arg(long)]
    pub trig: bool,
}

#[derive(Debug, Subcommand)]
pub enum QkzOp {
    /// Integrand and its factors at the config's t.
    Eval {
        #[command(flatten)]
        args: QkzArgs,
    },
    /// Integrand values on the torus grid.
    Grid {
        #[command(flatten)]
        args: QkzArgs,
        #[arg(long, default_value_t = 16)]
        m0: usize,
    },
    /// Experimental torus integral with a convergence report (m0 against 2 m0).
    Quad {
        #[command(flatten)]
        args: QkzArgs,
        #[arg(long, default_value_t = 32)]
        m0: usize,
    },
}

/// Rendered output plus whether every check in it passed.
pub struct Output {
    pub text: String,
    pub pass: bool,
}

fn run(cli: Cli) -> Result<Output, CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let mut cfg = config::RunConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(format) = cli.global.format {
        cfg.format = format;
    }
    commands::dispatch(&cli.command, &cfg, cli.global.break_shift)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let out_path = cli.global.out.clone();
    match run(cli) {
        Ok(output) => {
            let written = match &out_path {
                Some(path) => std::fs::write(path, &output.text),
                None => std::io::stdout().write_all(output.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(if output.pass { 0 } else { 1 })
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
