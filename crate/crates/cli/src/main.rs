//! `rtf-mclp`: simulate reverberant scenes, dereverberate them and score
//! the results.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numerical failures.

mod commands;
mod config;
mod error;
mod wav;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{EnhanceArgs, EvaluateArgs};
use crate::config::{LoadedScene, Method};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "rtf-mclp", version, about = "Multichannel dereverberation with RTF-constrained linear prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene file (TOML); built-in defaults when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the synthetic speech.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override a scene value, e.g. `--set method.taps=10`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl SceneArgs {
    fn load(&self) -> Result<LoadedScene, CliError> {
        LoadedScene::load(self.scene.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the scene: mixture, direct-path references and RIRs.
    Simulate {
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Dereverberate a mixture.
    Enhance {
        #[command(flatten)]
        scene: SceneArgs,
        /// Method; defaults to the scene's `method.name`.
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Mixture WAV; defaults to `<out>/mixture.wav`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Multichannel RIR WAV of the desired source; its early part
        /// gives a fixed RTF.
        #[arg(long)]
        known_rtf: Option<PathBuf>,
        /// Also write the per-frame filters of the online method.
        #[arg(long)]
        log_filters: bool,
    },
    /// Score an enhanced signal against a reference.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Interferer image at the array, filtered with `--filters`.
        #[arg(long)]
        interferer: Option<PathBuf>,
        #[arg(long)]
        filters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Scene file for the `[metrics]` section.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Effective RIR and energy decay curves of a batch method.
    RirReport {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        known_rtf: Option<PathBuf>,
    },
}

/// Prints to stdout, ignoring a closed pipe.
fn print_json(value: &serde_json::Value) {
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scene } => commands::simulate(&scene.load()?, &scene.out, scene.seed, &scene.overrides),
        Command::Enhance {
            scene,
            method,
            input,
            known_rtf,
            log_filters,
        } => {
            let loaded = scene.load()?;
            let args = EnhanceArgs {
                method: method.unwrap_or(loaded.file.method.name),
                input: input.unwrap_or_else(|| scene.out.join("mixture.wav")),
                known_rtf: known_rtf.as_deref(),
                log_filters,
            };
            commands::enhance(&loaded, &scene.out, &args, scene.seed, &scene.overrides)
        }
        Command::Evaluate {
            reference,
            test,
            interferer,
            filters,
            out,
            scene,
            overrides,
        } => {
            let loaded = LoadedScene::load(scene.as_deref(), &overrides)?;
            let args = EvaluateArgs {
                reference: &reference,
                test: &test,
                interferer: interferer.as_deref(),
                filters: filters.as_deref(),
                tracks: loaded.file.metrics.tracks,
            };
            let summary = commands::evaluate(&out, &args)?;
            print_json(&summary);
            Ok(())
        }
        Command::RirReport {
            scene,
            method,
            known_rtf,
        } => {
            let loaded = scene.load()?;
            let method = method.unwrap_or(loaded.file.method.name);
            let summary = commands::rir_report(&loaded, &scene.out, method, known_rtf.as_deref(), scene.seed, &scene.overrides)?;
            print_json(&summary);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
