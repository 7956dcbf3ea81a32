use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use poiseuille_lab::config::{parse_document, Command, RunSpec};
use poiseuille_lab::error::LabError;
use poiseuille_lab::run::{output_dir, run, OUT_DIR_ENV};
use poiseuille_lab::scaling::SolverKind;

/// Spectral laboratory for steady flow perturbed from Poiseuille flow in a
/// periodic strip.
///
/// Commands: solve-linear, solve-nonlinear, decompose, sweep, verify-lemmas,
/// probe-uniqueness, bl-profile. Exit status is 0 when every gate holds,
/// 1 for invalid input or I/O failure, 2 for numerical failures.
#[derive(Parser, Debug)]
#[command(name = "poiseuille-lab", version, allow_negative_numbers = true)]
struct Cli {
    /// Command to run.
    command: Command,
    /// TOML run document; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flux values, comma separated.
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    /// Period lengths, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<f64>>,
    /// Streamwise mode numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<i64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Linear solver: slip, clamped, decomposition, high_freq.
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<RunSpec, LabError> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            parse_document(&text, Some(cli.command))?
        }
        None => RunSpec::with_command(cli.command),
    };
    if let Some(v) = &cli.phi {
        spec.params.phi = v.clone();
    }
    if let Some(v) = &cli.l {
        spec.params.l = v.clone();
    }
    if let Some(v) = &cli.n {
        spec.params.n = v.clone();
    }
    if let Some(s) = cli.seed {
        spec.solver.seed = s;
    }
    if let Some(k) = cli.solver {
        spec.solver.kind = k;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match load(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("poiseuille-lab: {e}");
            return ExitCode::from(1);
        }
    };
    let dir = output_dir(cli.out.as_deref(), &spec);
    let outcome = run(&spec, &dir);
    match (&outcome.error, outcome.exit_code) {
        (Some(e), _) => eprintln!("poiseuille-lab {}: {e}", spec.command),
        (None, 0) => println!("poiseuille-lab {}: pass ({})", spec.command, dir.display()),
        (None, _) => println!("poiseuille-lab {}: gate failed, see {}", spec.command, dir.join("summary.json").display()),
    }
    ExitCode::from(outcome.exit_code as u8)
}
