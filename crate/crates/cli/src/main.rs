use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vnslab::config::RunConfig;
use vnslab::run::{replay, run, ReplayTask};
use vnslab::scenarios::{default_run_config, ScenarioKind};
use vnslab::Error;

#[derive(Parser)]
#[command(
    name = "vnslab",
    version,
    about = "Vlasov-Navier-Stokes laboratory in a box with absorbing walls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a coupled simulation from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `run.output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the built-in scenarios at desk scale.
    Scenario {
        #[arg(value_parser = ["confinement", "escape", "mixed"])]
        kind: String,
        /// Asymptotic mass of the mixed scenario.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Post-process a finished run from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = ["xinfty", "profiles", "representation-check"])]
        task: String,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|source| Error::Io {
                path: config.clone(),
                source,
            })?;
            let cfg = RunConfig::from_toml_str(&text)?;
            let art = run(&cfg, out.as_deref())?;
            eprintln!(
                "wrote {}",
                art.dir.join(vnslab::io::MANIFEST_NAME).display()
            );
            print_json(&art.output.summary())?;
            if let Some(report) = &art.scenario {
                print_json(report)?;
            }
        }
        Command::Scenario { kind, alpha, out } => {
            let kind: ScenarioKind = kind.parse()?;
            if alpha.is_some() && kind != ScenarioKind::Mixed {
                return Err(Error::Validation(
                    "--alpha applies to the mixed scenario only".into(),
                ));
            }
            let cfg = default_run_config(kind, alpha);
            let art = run(&cfg, out.as_deref())?;
            eprintln!(
                "wrote {}",
                art.dir.join(vnslab::io::MANIFEST_NAME).display()
            );
            if let Some(report) = &art.scenario {
                print_json(report)?;
            }
        }
        Command::Replay { manifest, task } => {
            let task: ReplayTask = task.parse()?;
            print_json(&replay(&manifest, task)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
