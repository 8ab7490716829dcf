use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use tokenwalk_cli::error::{EXIT_OK, EXIT_USAGE};
use tokenwalk_cli::stages::{Ablation, Analysis, Run};
use tokenwalk_cli::{CliError, CliResult, RunConfig};
use tokenwalk_core::walk::WalkKind;

/// Multi-token graph transformer pipeline.
///
/// Every command reads one JSON config; outputs, a resolved config copy and
/// `manifest.json` go to the output directory. TOKENWALK_THREADS caps the
/// worker count and RUST_LOG sets verbosity (default `info`).
#[derive(Parser)]
#[command(name = "tokenwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated training seeds for `eval` and `ablate`.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset, cache it, split it and write graph statistics.
    Ingest,
    /// Sample the mixed walk corpus.
    Walks,
    /// Build the graph document, pre-train and export per-node tokens.
    Pretrain,
    /// Train once with the global seed.
    Train,
    /// Retrain over several seeds and write mean and std of test accuracy.
    Eval,
    /// Walk theory reports.
    Analyze {
        #[arg(value_enum, default_value_t = Which::All)]
        which: Which,
    },
    /// Retrain without one token kind or walk kind, or with a single walk kind.
    Ablate {
        #[arg(
            long,
            value_enum,
            conflicts_with = "only",
            required_unless_present = "only"
        )]
        drop: Option<Drop>,
        #[arg(long, value_enum)]
        only: Option<Kind>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Stationary,
    Coverage,
    Discrimination,
    Complexity,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Drop {
    SgpmToken,
    HopToken,
    WalkToken,
    Urw,
    Nbrw,
    Njw,
    Nbnjw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Urw,
    Nbrw,
    Njw,
    Nbnjw,
}

impl From<Kind> for WalkKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Urw => WalkKind::Urw,
            Kind::Nbrw => WalkKind::Nbrw,
            Kind::Njw => WalkKind::Njw,
            Kind::Nbnjw => WalkKind::Nbnjw,
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("TOKENWALK_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "TOKENWALK_THREADS = {v:?} is not a positive integer"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))
}

fn execute(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let config = cli
        .config
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let cfg = RunConfig::load(&config, cli.out.as_deref(), cli.seed)?;
    let seeds = match cli.seeds {
        Some(s) if s.is_empty() => return Err(CliError::Usage("--seeds is empty".into())),
        Some(s) => s,
        None => match cli.command {
            Command::Eval => (0..10).map(|i| cfg.seed + i).collect(),
            _ => vec![cfg.seed],
        },
    };
    let mut run = Run::open(cfg)?;
    match cli.command {
        Command::Ingest => run.ingest()?,
        Command::Walks => run.walks()?,
        Command::Pretrain => run.pretrain()?,
        Command::Train => run.train()?,
        Command::Eval => run.eval(&seeds)?,
        Command::Analyze { which } => {
            let picked = match which {
                Which::Stationary => vec![Analysis::Stationary],
                Which::Coverage => vec![Analysis::Coverage],
                Which::Discrimination => vec![Analysis::Discrimination],
                Which::Complexity => vec![Analysis::Complexity],
                Which::All => Analysis::ALL.to_vec(),
            };
            run.analyze(&picked)?
        }
        Command::Ablate { drop, only } => {
            let ablation = match (drop, only) {
                (Some(Drop::SgpmToken), _) => Ablation::DropSgpm,
                (Some(Drop::HopToken), _) => Ablation::DropHop,
                (Some(Drop::WalkToken), _) => Ablation::DropWalk,
                (Some(Drop::Urw), _) => Ablation::DropKind(WalkKind::Urw),
                (Some(Drop::Nbrw), _) => Ablation::DropKind(WalkKind::Nbrw),
                (Some(Drop::Njw), _) => Ablation::DropKind(WalkKind::Njw),
                (Some(Drop::Nbnjw), _) => Ablation::DropKind(WalkKind::Nbnjw),
                (None, Some(k)) => Ablation::Only(k.into()),
                (None, None) => unreachable!("clap requires --drop or --only"),
            };
            run.ablate(ablation, &seeds)?
        }
    };
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
