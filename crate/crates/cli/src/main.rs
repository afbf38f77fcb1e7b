use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hptr::config::{RunConfig, Task};
use hptr::{Error, Result};
use hptr_cli::{cmd_eval, cmd_gen_data, cmd_parse, cmd_train, exit_code, EvalOptions, GenOptions};

/// Hierarchical pointer-network parsers for dependency and discourse trees.
#[derive(Parser)]
#[command(name = "hptr", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for initialization, shuffling, dropout and data generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parsing and evaluation (default: HPTR_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a parser; writes config.txt, train.log and checkpoint(s) under --output.
    Train {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        fusion: Option<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Any config key, as key=value; may repeat.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Parse raw input with a checkpoint.
    Parse {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CoNLL-U for dependency models; bracketed trees or `|||`-separated EDU lines for discourse.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Label inventory that must match the checkpoint.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Write the decoding trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score predictions against gold trees.
    Eval {
        #[arg(long, default_value = "dep")]
        task: String,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Score punctuation tokens too.
        #[arg(long)]
        include_punct: bool,
        /// Leave the whole-sentence span out of Parseval counts.
        #[arg(long)]
        no_root_span: bool,
        /// Length bucket width (tokens for dependency, EDUs for discourse).
        #[arg(long, default_value_t = 10)]
        bucket_width: usize,
        /// Write the bucketed report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic corpus.
    GenData {
        #[arg(long, default_value = "dep")]
        kind: String,
        #[arg(long, default_value_t = 64)]
        count: usize,
        /// Maximum sentence length (dependency) or EDU count (discourse).
        #[arg(long, default_value_t = 12)]
        max_len: usize,
        #[arg(long, default_value_t = 200)]
        vocab: usize,
        #[arg(long, default_value_t = 8)]
        labels: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

fn setup_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("HPTR_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| Error::Config(format!("invalid HPTR_THREADS `{v}`")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    setup_threads(cli.threads)?;
    match cli.command {
        Command::Train {
            task,
            variant,
            fusion,
            train,
            dev,
            output,
            epochs,
            set,
        } => {
            let text = match &cli.config {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => String::new(),
            };
            let mut overrides = Vec::new();
            for kv in &set {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string());
            let flags = [
                ("task", task),
                ("variant", variant),
                ("fusion", fusion),
                ("train", path(train)),
                ("dev", path(dev)),
                ("output", path(output)),
                ("epochs", epochs.map(|e| e.to_string())),
                ("seed", cli.seed.map(|s| s.to_string())),
                ("threads", cli.threads.map(|t| t.to_string())),
            ];
            overrides.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
            let config = RunConfig::parse(&text, &overrides)?;
            let written = cmd_train(&config, |line| eprintln!("{line}"))?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Parse {
            checkpoint,
            input,
            output,
            beam,
            labels,
            trace,
        } => {
            let n = cmd_parse(&checkpoint, &input, &output, beam, labels.as_deref(), trace.as_deref())?;
            eprintln!("parsed {n} sentences");
        }
        Command::Eval {
            task,
            gold,
            pred,
            include_punct,
            no_root_span,
            bucket_width,
            csv,
        } => {
            let task: Task = task.parse()?;
            let report = cmd_eval(
                task,
                &gold,
                &pred,
                &EvalOptions {
                    exclude_punct: !include_punct,
                    include_root: !no_root_span,
                    bucket_width,
                },
            )?;
            print!("{}", report.text());
            if let Some(p) = csv {
                std::fs::write(p, &report.csv)?;
            }
        }
        Command::GenData {
            kind,
            count,
            max_len,
            vocab,
            labels,
            output,
        } => {
            let task: Task = kind.parse()?;
            cmd_gen_data(
                task,
                cli.seed.unwrap_or(1),
                &GenOptions {
                    count,
                    max_len,
                    vocab,
                    labels,
                },
                &output,
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
