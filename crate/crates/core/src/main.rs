use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use affect::corpus::{save_dataset, Track};
use affect::pipeline::{cmd_eval, cmd_prepare, cmd_train, Method, PipelineError, Run, RunConfig};
use affect::synthetic::toy_split;

#[derive(Parser)]
#[command(name = "affect", version, about = "Emotion detection training pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render SP prompts and, per method, CRC pairs or preference pairs.
    Prepare(StageArgs),
    /// Fit the scorer (SFT) or preference-tune an SFT checkpoint.
    Train(StageArgs),
    /// Predict on the evaluation split and write metric reports.
    Eval(StageArgs),
    /// prepare, train and eval in sequence.
    Run(StageArgs),
    /// Write a separable toy corpus (train.csv, test.csv) and a ready-to-run
    /// config per method.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    track: Option<Track>,
    #[arg(long)]
    method: Option<Method>,
    /// Output directory (relative to the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    track: Track,
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load(args: &StageArgs) -> Result<Run, PipelineError> {
    let mut run = Run::load(&args.config)?;
    let c = &mut run.config.run;
    if let Some(seed) = args.seed {
        c.seed = seed;
    }
    if let Some(track) = args.track {
        c.track = track;
    }
    if let Some(method) = args.method {
        c.method = method;
    }
    if let Some(out) = &args.out {
        c.out_dir = std::path::absolute(out).map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    run.config.validate()?;
    Ok(run)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Prepare(a) => print_json(&cmd_prepare(&load(&a)?)?),
        Command::Train(a) => print_json(&cmd_train(&load(&a)?)?),
        Command::Eval(a) => print_json(&cmd_eval(&load(&a)?)?.metrics),
        Command::Run(a) => {
            let run = load(&a)?;
            cmd_prepare(&run)?;
            cmd_train(&run)?;
            print_json(&cmd_eval(&run)?.metrics);
        }
        Command::Synth(a) => {
            let (train, test) = toy_split(a.track, a.train, a.test, a.seed);
            std::fs::create_dir_all(&a.out).map_err(|e| PipelineError::Data(e.to_string()))?;
            save_dataset(a.out.join("train.csv"), &train).map_err(|e| PipelineError::Data(e.to_string()))?;
            save_dataset(a.out.join("test.csv"), &test).map_err(|e| PipelineError::Data(e.to_string()))?;
            for method in [Method::Sp, Method::Crc, Method::Dpo, Method::Simpo] {
                let text = RunConfig::toy(a.track, method, a.seed).to_toml();
                std::fs::write(a.out.join(format!("{method}.toml")), text)
                    .map_err(|e| PipelineError::Data(e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var("AFFECT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: AFFECT_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
