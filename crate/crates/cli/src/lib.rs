//! Command-line front end: synthetic data, feature extraction, training,
//! evaluation, robustness sweeps, gradient checks and the attention
//! benchmark.

pub mod commands;
pub mod config;
pub mod error;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};

use crate::commands::Run;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "citf",
    version,
    about = "Interaction-aware trajectory forecasting: data, training and evaluation",
    after_help = "Any configuration setting can be overridden with `--<key> <value>`, where the key is a \
                  setting name (e.g. --epochs 5) or a dotted path (e.g. --model.d_model 16)."
)]
pub struct Cli {
    /// JSON file merged over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthesis, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-lane trajectory CSV.
    Synth,
    /// Compute safety indices and behavior criteria for a trajectory CSV.
    Extract {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model and write the checkpoint and loss history.
    Train {
        /// Trajectory CSV or `.jsonl` window cache.
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate a checkpoint at the 1-5 s horizons.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// full, drop3, drop5 or drop8.
        #[arg(long, default_value = "full")]
        variant: String,
    },
    /// Evaluate a checkpoint on the full, drop3, drop5 and drop8 variants.
    Robustness {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the central-difference gradient suite.
    Gradcheck,
    /// Compare low-rank and full attention cost across sequence lengths.
    BenchmarkAttention,
}

fn long_flags(cmd: &clap::Command, out: &mut BTreeSet<String>) {
    out.extend(cmd.get_arguments().filter_map(|a| a.get_long()).map(str::to_string));
    for sub in cmd.get_subcommands() {
        long_flags(sub, out);
    }
}

/// Separates `--key value` configuration overrides from the flags the
/// parser knows. `--key=value` is accepted too.
pub fn split_overrides(args: &[String]) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut known = BTreeSet::from(["help".to_string(), "version".to_string()]);
    long_flags(&Cli::command(), &mut known);
    let mut passthrough = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--").filter(|f| !f.is_empty()) else {
            passthrough.push(arg.clone());
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        if known.contains(name) {
            passthrough.push(arg.clone());
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => iter.next().cloned().ok_or_else(|| CliError::Usage(format!("--{name} needs a value")))?,
        };
        overrides.push((name.to_string(), value));
    }
    Ok((passthrough, overrides))
}

/// Parses `args` (without the program name) and runs the command.
pub fn run(args: &[String]) -> Result<(), CliError> {
    let (passthrough, overrides) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(std::iter::once("citf".to_string()).chain(passthrough)) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            commands::emit(&e.render().to_string());
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = config::effective_config(cli.config.as_ref(), cli.seed, &overrides)?;
    let model_given = overrides.iter().any(|(k, _)| k.starts_with("model.") || is_model_key(k))
        || cli.config.as_ref().is_some_and(|p| file_has_model(p));
    let expected = model_given.then_some(&cfg.model);

    let mut inputs = BTreeMap::new();
    let show = |p: &PathBuf| p.display().to_string();
    let name = match &cli.command {
        Command::Synth => "synth",
        Command::Extract { data } | Command::Train { data } => {
            inputs.insert("data", show(data));
            if matches!(cli.command, Command::Extract { .. }) { "extract" } else { "train" }
        }
        Command::Eval { checkpoint, data, variant } => {
            inputs.insert("checkpoint", show(checkpoint));
            inputs.insert("data", show(data));
            inputs.insert("variant", variant.clone());
            "eval"
        }
        Command::Robustness { checkpoint, data } => {
            inputs.insert("checkpoint", show(checkpoint));
            inputs.insert("data", show(data));
            "robustness"
        }
        Command::Gradcheck => "gradcheck",
        Command::BenchmarkAttention => "benchmark-attention",
    };
    let run = Run { out: &cli.out, command: name, inputs };
    match &cli.command {
        Command::Synth => commands::synth(&run, &cfg),
        Command::Extract { data } => commands::extract(&run, &cfg, data),
        Command::Train { data } => commands::train(&run, &cfg, data),
        Command::Eval { checkpoint, data, variant } => {
            let variant = variant.parse().map_err(|e: citf_model::ModelError| CliError::Usage(e.to_string()))?;
            commands::eval(&run, &cfg, checkpoint, data, variant, expected)
        }
        Command::Robustness { checkpoint, data } => commands::robustness_sweep(&run, &cfg, checkpoint, data, expected),
        Command::Gradcheck => commands::gradcheck(&run, &cfg),
        Command::BenchmarkAttention => commands::benchmark(&run, &cfg),
    }
}

/// Whether a bare override key names a model setting.
fn is_model_key(key: &str) -> bool {
    let defaults = serde_json::to_value(config::CliConfig::default()).expect("defaults serialize");
    config::resolve_key(&defaults, key).is_ok_and(|p| p.starts_with("model."))
}

fn file_has_model(path: &PathBuf) -> bool {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .is_some_and(|v| v.get("model").is_some())
}
