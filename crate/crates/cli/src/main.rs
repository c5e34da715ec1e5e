use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nds_lab::presets;
use nds_lab::runner;

/// Reproducible experiments on time-dependent expanding circle maps.
#[derive(Parser)]
#[command(name = "nds-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Entropy estimators: counting table, integral formulas, partition refinement.
    Entropy(RunArgs),
    /// Pressure tables, metric pressure and the variational gap.
    Pressure(RunArgs),
    /// Transfer-operator evolution and the loss-of-memory experiment.
    Memoryloss(RunArgs),
    /// Equi-conjugacy construction to an autonomous target map.
    Conjugacy(RunArgs),
    /// Strong-uniform-expansivity search on a finite net.
    Expansivity(RunArgs),
    /// Frink metrization pipeline with adapted expanding metrics.
    Frink(RunArgs),
    /// Volume-lemma product sweep over Bowen balls.
    Volume(RunArgs),
    /// List the shipped experiment presets.
    ListPresets,
}

fn dispatch(subcommand: &str, args: &RunArgs) -> ExitCode {
    match runner::run_config_file(subcommand, &args.config, args.out.as_deref()) {
        Ok(out_dir) => {
            println!("wrote artifacts to {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let object = err.to_json();
            eprintln!("{object}");
            // best effort: also leave the error object next to the artifacts
            if let Some(out) = args.out.as_deref() {
                if std::fs::create_dir_all(out).is_ok() {
                    let _ = std::fs::write(
                        out.join("error.json"),
                        serde_json::to_string_pretty(&object).unwrap(),
                    );
                }
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Entropy(args) => dispatch("entropy", args),
        Command::Pressure(args) => dispatch("pressure", args),
        Command::Memoryloss(args) => dispatch("memoryloss", args),
        Command::Conjugacy(args) => dispatch("conjugacy", args),
        Command::Expansivity(args) => dispatch("expansivity", args),
        Command::Frink(args) => dispatch("frink", args),
        Command::Volume(args) => dispatch("volume", args),
        Command::ListPresets => {
            print!("{}", presets::listing());
            ExitCode::SUCCESS
        }
    }
}
