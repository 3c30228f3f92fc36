use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cogmac_cli::{load, run_experiment, CliError, Overrides};

#[derive(Parser)]
#[command(name = "cogmac", version, about = "Cognitive MAC experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment and write summary.csv and trace.csv.
    Run(Target),
    /// Print the optimized sensing periods (un-slotted scenarios).
    Optimize(Target),
    /// Parse and check a config; print its canonical form with --canonical.
    Validate {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        canonical: bool,
    },
}

#[derive(Args)]
struct Target {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Target {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            runs: self.runs,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(t) => {
            let cfg = load(&t.config, &t.overrides())?;
            for path in run_experiment(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Optimize(t) => {
            let cfg = load(&t.config, &t.overrides())?;
            cogmac_cli::run::optimize(&cfg)?.write_to(std::io::stdout().lock())?;
        }
        Command::Validate { target, canonical } => {
            let cfg = load(&target.config, &target.overrides())?;
            if canonical {
                print!("{}", cfg.to_toml()?);
            } else {
                println!("ok: {} ({} runs)", cfg.scenario.name(), cfg.runs);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
