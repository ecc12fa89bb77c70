use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qjumps::hamiltonians::{
    dressed_closed_form, four_level_effective, four_level_lab, four_level_rotating_from, four_level_rwa_lab,
    qubit_effective, qubit_rotating, HamiltonianMatrix, LabFrame,
};
use qjumps_cli::config::{load_config, ExperimentConfig};
use qjumps_cli::experiments::execute;
use qjumps_cli::verify::run_checks;
use qjumps_cli::CliError;

/// Quantum-jump simulations of a driven phase qubit coupled to a two-level
/// defect.
///
/// Configuration keys may be overridden with environment variables named
/// `QJUMPS_<KEY>` (for example `QJUMPS_MASTER_SEED=7`); command-line flags
/// take precedence over both.
#[derive(Debug, Parser)]
#[command(name = "qjumps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config or a JSON manifest.
    Run { config: PathBuf },
    /// Run the invariant suite; exits 3 if any check fails.
    Verify { config: Option<PathBuf> },
    /// Print a Hamiltonian built from the config as JSON.
    DumpHamiltonian {
        config: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        /// Time for the time-dependent Hamiltonians.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Drive frequency ω of the laboratory-frame Hamiltonian.
        #[arg(long, default_value_t = 100.0)]
        drive_frequency: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Which {
    QubitRotating,
    QubitEffective,
    FourLevelLab,
    FourLevelRwaLab,
    FourLevelRotating,
    FourLevelEffective,
    Dressed,
}

fn apply_flags(mut c: ExperimentConfig, cli: &Cli) -> ExperimentConfig {
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    if let Some(d) = &cli.out_dir {
        c.out_dir = d.clone();
    }
    c
}

fn hamiltonian(c: &ExperimentConfig, which: Which, t: f64, drive: f64) -> Result<HamiltonianMatrix, CliError> {
    let m = c.model();
    Ok(match which {
        Which::QubitRotating => qubit_rotating(m.detuning, m.rabi_frequency),
        Which::QubitEffective => qubit_effective(m.detuning, m.rabi_frequency, m.relaxation, m.tunneling),
        Which::FourLevelLab => four_level_lab(&LabFrame::from_params(&m, drive), t),
        Which::FourLevelRwaLab => four_level_rwa_lab(m.detuning, m.tls_detuning, m.rabi_frequency, m.coupling, t),
        Which::FourLevelRotating => four_level_rotating_from(&m),
        Which::FourLevelEffective => four_level_effective(&m),
        Which::Dressed => dressed_closed_form(m.detuning, m.tls_detuning, m.rabi_frequency, m.coupling)?,
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Validation(vec![format!("threads: {e}")]))?;
    match &cli.command {
        Command::Run { config } => {
            let c = apply_flags(load_config(config)?, cli);
            for path in execute(&c)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Verify { config } => {
            let c = match config {
                Some(p) => load_config(p)?,
                None => ExperimentConfig::default(),
            };
            let c = apply_flags(c, cli);
            let report = run_checks(&c);
            for r in &report {
                println!("{r}");
            }
            let failed: Vec<String> = report.iter().filter(|r| !r.passed).map(|r| r.name.to_string()).collect();
            println!("{} of {} checks passed", report.len() - failed.len(), report.len());
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::VerifyFailed(failed))
            }
        }
        Command::DumpHamiltonian { config, which, time, drive_frequency } => {
            let c = apply_flags(load_config(config)?, cli);
            let h = hamiltonian(&c, *which, *time, *drive_frequency)?;
            let text = serde_json::to_string_pretty(&h.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
