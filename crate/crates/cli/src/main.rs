use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sideband", version, about = "Run sideband-synthesis experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment in CONFIG and write CSV tables plus report.json.
    Run { config: PathBuf },
    /// Check CONFIG and its device file without running.
    Validate { config: PathBuf },
    /// Write the bundled device file and a default config per experiment.
    ExportDefaults {
        #[arg(default_value = "defaults")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config } => sideband_cli::run_path(&config).map(|r| {
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: wrote {} files ({:.1} s)", r.experiment, r.files.len() + 1, r.metadata.timings.total_s);
        }),
        Command::Validate { config } => sideband_cli::validate_path(&config).map(|(cfg, warnings)| {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("ok: {} ({})", config.display(), cfg.file.experiment);
        }),
        Command::ExportDefaults { dir } => sideband_cli::export_defaults(&dir).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
