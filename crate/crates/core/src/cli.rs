//! Command-line front end. Exit codes: 0 success, 1 stage failure,
//! 2 configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, RunConfig, Stage, StageStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "headimpact",
    version,
    about = "Head Impact scoring and HI-guided LoRA on a toy multimodal model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Render the synthetic dataset and its splits.
    GenData,
    /// Train the base model on the train split.
    Pretrain,
    /// Score every head and rank layers.
    Hi,
    /// Fine-tune adapters for each layer-selection setup.
    Finetune,
    /// Evaluate all setups on the test split.
    Eval,
    /// Run every stage, reusing up-to-date outputs.
    RunAll,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Layers per ranked setup.
    #[arg(long, global = true, value_name = "N")]
    k: Option<usize>,
    /// Mask projection threshold.
    #[arg(long, global = true, value_name = "F")]
    tau: Option<f64>,
    /// Last stage run-all executes.
    #[arg(long, global = true, value_name = "NAME")]
    stage: Option<String>,
}

fn resolve(command: Command, o: Overrides) -> Result<RunConfig> {
    let mut c = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.out {
        c.out = v;
    }
    if o.k.is_some() {
        c.k = o.k;
    }
    if let Some(v) = o.tau {
        c.tau = v;
    }
    if let Some(s) = o.stage {
        if command != Command::RunAll {
            return Err(Error::Config("--stage only applies to run-all".into()));
        }
        c.stage = Some(s.parse()?);
    }
    c.validate()?;
    Ok(c)
}

fn execute(command: Command, config: RunConfig) -> Result<()> {
    let pipeline = Pipeline::new(config)?;
    let single = |s: Stage| pipeline.run_stage(s);
    match command {
        Command::GenData => single(Stage::Data),
        Command::Pretrain => single(Stage::Pretrain),
        Command::Hi => single(Stage::Hi),
        Command::Finetune => single(Stage::Finetune),
        Command::Eval => {
            single(Stage::Eval)?;
            let table = std::fs::read_to_string(
                pipeline
                    .dir(Stage::Eval)
                    .join(crate::pipeline::COMPARISON_TXT),
            )?;
            print!("{table}");
            Ok(())
        }
        Command::RunAll => {
            for (stage, status) in pipeline.run_all()? {
                let s = match status {
                    StageStatus::Ran => "ran",
                    StageStatus::Cached => "cached",
                };
                println!("{stage:<9} {s}");
            }
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let config = match resolve(cli.command, cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(cli.command, config) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                EXIT_CONFIG
            } else {
                EXIT_STAGE
            }
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    match e {
        Error::Config(_) => true,
        Error::Context { source, .. } => is_config_error(source),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "tau": 0.5}"#).unwrap();
        let o = Overrides {
            config: Some(p),
            seed: Some(9),
            ..Overrides::default()
        };
        let c = resolve(Command::Hi, o).unwrap();
        assert_eq!((c.seed, c.tau), (9, 0.5));
    }

    #[test]
    fn exit_codes_for_bad_input() {
        assert_eq!(run(["headimpact", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["headimpact", "hi", "--tau", "2"]), EXIT_CONFIG);
        assert_eq!(run(["headimpact", "hi", "--stage", "hi"]), EXIT_CONFIG);
        assert_eq!(
            run(["headimpact", "run-all", "--stage", "bogus"]),
            EXIT_CONFIG
        );
        assert_eq!(
            run(["headimpact", "hi", "--config", "/nonexistent/c.json"]),
            EXIT_CONFIG
        );
    }

    #[test]
    fn missing_upstream_is_a_stage_failure() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["headimpact", "hi", "--out", out]), EXIT_STAGE);
    }
}
