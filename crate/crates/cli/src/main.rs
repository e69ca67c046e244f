//! Command-line front end: ensemble runs, exact references, representation
//! solving, coupling sweeps, and the validation suite.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 numerical validation
//! failure, 3 I/O error.

mod commands;
mod config;
mod csvio;
mod validate;

use std::process::ExitCode;

/// Error classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<cpsdyn::Error> for CliError {
    fn from(e: cpsdyn::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

const USAGE: &str = "\
usage: cpsdyn <command> [--flag value ...]

commands:
  exact      exact reference populations on the time grid
  simulate   Monte Carlo population dynamics for one method
  solve-f    solve a normalization profile for its weight generator
  sweep      simulate over a list of couplings and methods, plus a summary
  validate   run the numerical validation suite

flags (config file keys use the same names without the leading --):
  --config PATH     flat key = value file; command-line flags win
  --h11 E --h22 E   diagonal energies            [10, 2]
  --lambda E        real coupling (sets h12-re)  [2]
  --h12-re E --h12-im E                          [lambda, 0]
  --method NAME     sqz|case1|case2|sqc-twf|covariant|custom  [sqz]
  --gamma G         zero-point parameter         [0.5]
  --ntraj N         trajectories                 [1000000]
  --seed S          master seed                  [42]
  --tmax T          grid end                     [3 Rabi periods]
  --dt DT           grid step                    [Rabi period / 200]
  --out PATH        output file (stdout if omitted); directory for sweep
  --xi-table PATH   custom normalization profile table (xi,value CSV)
  --f-table PATH    custom weight generator table (y,f CSV)
  --threads N       worker threads               [all cores]
  --lambdas LIST    sweep couplings, comma-separated  [0.02,0.2,2,20]
  --methods LIST    sweep methods, comma-separated    [sqz,case1]
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(args: &[String]) -> Result<(), CliError> {
    let (command, rest) = match args.split_first() {
        Some((c, rest)) => (c.as_str(), rest),
        None => {
            eprint!("{USAGE}");
            return Err(CliError::Usage("missing command".into()));
        }
    };
    if command == "--help" || command == "-h" || command == "help" {
        print!("{USAGE}");
        return Ok(());
    }

    let cfg = config::RunConfig::from_args(rest)?;
    if let Some(n) = cfg.threads {
        // Ignore the error if a global pool already exists (tests call
        // `run` repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    match command {
        "exact" => commands::cmd_exact(&cfg),
        "simulate" => commands::cmd_simulate(&cfg),
        "solve-f" => commands::cmd_solve_f(&cfg),
        "sweep" => commands::cmd_sweep(&cfg),
        "validate" => validate::cmd_validate(&cfg),
        other => {
            eprint!("{USAGE}");
            Err(CliError::Usage(format!("unknown command: {other}")))
        }
    }
}
