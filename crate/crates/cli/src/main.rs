use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polyprobe::commands::{self, SimulationKind};
use polyprobe::config::RunConfig;
use polyprobe::pipeline::{Grain, InterceptGrouping};
use polyprobe::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "polyprobe", version, about = "Diagnostics for the multilingual penalty in lexical disambiguation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check trace directories against the format invariants.
    Validate {
        #[arg(long)]
        trace: PathBuf,
        /// Also flag orphan payloads and spans covering special tokens.
        #[arg(long)]
        strict: bool,
    },
    /// Compute metrics.csv and sentence_metrics.csv from traces.
    Metrics(RunArgs),
    /// Fit every analysis on the metric tables.
    Analyze(RunArgs),
    /// Emit figure tables and SVG plots.
    Report(RunArgs),
    /// Write seeded synthetic tables or the toy fixture.
    Simulate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Take the seed from a config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Penalty,
    Mediation,
    Sentences,
    Toy,
}

#[derive(Clone, Copy, ValueEnum)]
enum GrainArg {
    Sentence,
    Layer,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterceptArg {
    Model,
    ModelLanguage,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trace_root: Option<PathBuf>,
    #[arg(long)]
    output_root: Option<PathBuf>,
    #[arg(long)]
    include_embedding_layer: Option<bool>,
    #[arg(long)]
    include_specials: bool,
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_enum)]
    grain: Option<GrainArg>,
    #[arg(long, value_enum)]
    intercept: Option<InterceptArg>,
    #[arg(long)]
    parallel_fits: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::read(&self.config)?;
        if let Some(p) = &self.trace_root {
            cfg.trace_root = p.clone();
        }
        if let Some(p) = &self.output_root {
            cfg.output_root = p.clone();
        }
        if let Some(v) = self.include_embedding_layer {
            cfg.include_embedding_layer = v;
        }
        cfg.include_specials |= self.include_specials;
        cfg.standardize |= self.standardize;
        cfg.parallel_fits |= self.parallel_fits;
        if let Some(g) = self.grain {
            cfg.grain = match g {
                GrainArg::Sentence => Grain::Sentence,
                GrainArg::Layer => Grain::Layer,
            };
        }
        if let Some(i) = self.intercept {
            cfg.intercept = match i {
                InterceptArg::Model => InterceptGrouping::Model,
                InterceptArg::ModelLanguage => InterceptGrouping::ModelLanguage,
            };
        }
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { trace, strict } => {
            let reports = commands::cmd_validate(&trace, strict)?;
            print_json(&reports)?;
            commands::require_valid(&trace, &reports)
        }
        Command::Metrics(args) => print_json(&commands::cmd_metrics(&args.load()?)?),
        Command::Analyze(args) => print_json(&commands::cmd_analyze(&args.load()?)?),
        Command::Report(args) => {
            let dir = commands::cmd_report(&args.load()?)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Simulate { kind, seed, out, config } => {
            let seed = match (seed, config) {
                (Some(s), _) => s,
                (None, Some(c)) => RunConfig::read(&c)?.seed,
                (None, None) => 0,
            };
            let kind = match kind {
                Kind::Penalty => SimulationKind::Penalty,
                Kind::Mediation => SimulationKind::Mediation,
                Kind::Sentences => SimulationKind::Sentences,
                Kind::Toy => SimulationKind::Toy,
            };
            for p in commands::cmd_simulate(kind, seed, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
