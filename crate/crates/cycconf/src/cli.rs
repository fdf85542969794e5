//! The `cycconf` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage errors and
//! missing inputs. Seeds resolve as: `--seed` flag, then the config file,
//! then the `CYCCONF_SEED` environment variable, then 0.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cycconf_core::train::{SslTask, TrainMode};

use crate::checkpoint;
use crate::config::{load_pairs, resolve, SEED_ENV};
use crate::datapipe::load_dataset;
use crate::error::{Error, Result};
use crate::evalkit::{ood_report, text_table, write_report};
use crate::fsutil::prepare_out_dir;
use crate::inspect::{inspect_matching, parse_polarity, InspectJob};
use crate::runner::{train, TrainJob};
use crate::synthvid::{generate_benchmark, BenchmarkSpec};

#[derive(Debug, Parser)]
#[command(name = "cycconf", version, about = "Cycle-confusion detection lab on synthetic video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic benchmark tree.
    GenerateData(GenerateArgs),
    /// Train a detector with an optional auxiliary task.
    Train(TrainArgs),
    /// Evaluate a checkpoint in-domain and out-of-domain.
    Eval(EvalArgs),
    /// Export matching heatmaps, entropies and instance embeddings.
    InspectMatching(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON generation spec; the built-in default spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled training dataset (a directory holding manifest.json).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = ["cycconf", "cycle_consistency", "rotation", "jigsaw", "none"])]
    pub task: Option<String>,
    #[arg(long, value_parser = ["ood", "uda"])]
    pub mode: Option<String>,
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Unlabelled target dataset; required with `--mode uda`.
    #[arg(long)]
    pub target_data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any configuration key, e.g. `--set total_iters=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub force: bool,
    /// Progress line interval in iterations; 0 disables.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub train_domain: PathBuf,
    #[arg(long)]
    pub test_domain: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub pairs: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub gap: usize,
    /// Objectness threshold; the checkpoint's training value by default.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `confusion` or `consistency`; the checkpoint's task by default.
    #[arg(long)]
    pub polarity: Option<String>,
    #[arg(long)]
    pub force: bool,
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn seed_or_env(flag: Option<u64>) -> Result<u64> {
    match (flag, env_seed()) {
        (Some(s), _) => Ok(s),
        (None, Some(s)) => s.trim().parse().map_err(|_| Error::Usage(format!("{SEED_ENV}={s:?} is not an integer"))),
        (None, None) => Ok(0),
    }
}

pub fn cmd_generate_data(args: &GenerateArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => BenchmarkSpec::load(p)?,
        None => BenchmarkSpec::default(),
    };
    let summary = generate_benchmark(&spec, &args.out, seed_or_env(args.seed)?, args.force)?;
    println!("{} sequences, manifest sha256 {}", summary.num_sequences, summary.manifest_sha256);
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = args.config.as_deref().map(load_pairs).transpose()?;
    let mut flags = BTreeMap::new();
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        flags.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(t) = &args.task {
        flags.insert("ssl_task".into(), t.clone());
    }
    if let Some(m) = &args.mode {
        flags.insert("mode".into(), m.clone());
    }
    if let Some(s) = args.seed {
        flags.insert("seed".into(), s.to_string());
    }
    let config = resolve(file.as_ref(), &flags, env_seed().as_deref())?;
    match (config.mode, &args.target_data) {
        (TrainMode::Uda, None) => return Err(Error::Usage("--mode uda requires --target-data DIR".into())),
        (TrainMode::Ood, Some(_)) => return Err(Error::Usage("--target-data is only used with --mode uda".into())),
        _ => {}
    }
    if config.ssl_task == SslTask::None && config.mode == TrainMode::Uda {
        eprintln!("warning: uda mode with task none trains on source labels only");
    }
    let mut job = TrainJob::new(&args.data, &args.out, config);
    job.target_data = args.target_data.clone();
    job.force = args.force;
    job.log_every = (args.log_every > 0).then_some(args.log_every);
    let outcome = train(&job)?;
    println!("checkpoint {}", outcome.checkpoint.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.ckpt)?;
    let train_idx = load_dataset(&args.train_domain)?;
    let test_idx = load_dataset(&args.test_domain)?;
    prepare_out_dir(&args.out, args.force)?;
    let report = ood_report(&ckpt.model, &train_idx, &test_idx)?;
    write_report(&report, &args.out)?;
    print!("{}", text_table(&report));
    Ok(())
}

pub fn cmd_inspect_matching(args: &InspectArgs) -> Result<()> {
    let polarity = match &args.polarity {
        None => None,
        Some(p) => Some(parse_polarity(p).ok_or_else(|| Error::Usage(format!("unknown polarity {p:?}")))?),
    };
    let job = InspectJob {
        ckpt: args.ckpt.clone(),
        data: args.data.clone(),
        pairs: args.pairs,
        out: args.out.clone(),
        seed: seed_or_env(args.seed)?,
        gap: args.gap,
        threshold: args.threshold,
        polarity,
        force: args.force,
    };
    let outcome = inspect_matching(&job)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match outcome.report.mean_entropy {
        Some(h) => println!("{} of {} pairs matched, mean entropy {h:.6}", outcome.report.num_matched, outcome.report.num_pairs),
        None => println!("{} pairs, none matched", outcome.report.num_pairs),
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenerateData(a) => cmd_generate_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::InspectMatching(a) => cmd_inspect_matching(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
