//! Batch front-end: `mqrm <decay|angles|energy|sweep|validate>` with a TOML
//! config, named figure presets, and `block.key=value` overrides.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mqrm_zeno::config::RunConfig;
use mqrm_zeno::runner;
use mqrm_zeno::zeno::Engine;

#[derive(Parser)]
#[command(
    name = "mqrm",
    about = "Quantum Zeno/anti-Zeno decay rates of a qubit coupled to a ladder of cavity modes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named figure recipe applied before the config file and overrides.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Computational engine.
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Worker pool size for sweep points.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Output directory (falls back to output.directory / $MQRM_OUT).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Additional `block.key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Survival probability and decay rate over a tau grid.
    Decay(RunArgs),
    /// Decay rate versus squeezing angle at fixed tau.
    Angles(RunArgs),
    /// Qubit and per-mode energies along one evolution (tdvp engine).
    Energy(RunArgs),
    /// Run the configured task kind over the sweep axes.
    Sweep(RunArgs),
    /// Run the property-test battery and print a pass/fail table.
    Validate,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EngineArg {
    Analytic,
    Se,
    Tdvp,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Analytic => Engine::Analytic,
            EngineArg::Se => Engine::Se,
            EngineArg::Tdvp => Engine::Tdvp,
        }
    }
}

fn build_config(args: &RunArgs) -> mqrm_zeno::Result<RunConfig> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(_), Some(_)) => {
            return Err(mqrm_zeno::Error::Config(
                "--preset and --config are mutually exclusive; use key=value overrides".into(),
            ))
        }
        (Some(name), None) => RunConfig::preset(name)?,
        (None, Some(path)) => RunConfig::load(path)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    if let Some(engine) = args.engine {
        cfg.task.engine = engine.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, f: impl FnOnce(&RunConfig, usize, Option<&std::path::Path>) -> mqrm_zeno::Result<runner::RunOutput>) -> mqrm_zeno::Result<()> {
    let cfg = build_config(args)?;
    let out = f(&cfg, args.jobs, args.out.as_deref())?;
    for file in &out.files {
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decay(args) => run(args, runner::run_decay),
        Command::Angles(args) => run(args, runner::run_angles),
        Command::Energy(args) => run(args, runner::run_energy),
        Command::Sweep(args) => run(args, runner::run_sweep),
        Command::Validate => match runner::run_validate() {
            Ok(report) => {
                print!("{}", report.table());
                if report.all_passed() {
                    println!("all checks passed");
                    Ok(())
                } else {
                    Err(mqrm_zeno::Error::NonConverged("validation checks failed".into()))
                }
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
