use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use fragpes_core::config::{BankChoice, PipelineConfig, System};
use fragpes_core::error::{Error, EXIT_USAGE};
use fragpes_core::pipeline;

// Summaries are best effort: a closed pipe (`fragpes ... | head`) is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Fragment-based energy pipeline: fragment, label, train, transfer, predict, report.
#[derive(Debug, Parser)]
#[command(name = "fragpes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SystemArg {
    Primitive,
    Target,
}

impl From<SystemArg> for System {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Primitive => System::Primitive,
            SystemArg::Target => System::Target,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BankArg {
    Primitive,
    Transfer,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic trajectories from the `generate` sections.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Build graphs and extract fragments (both systems unless --system).
    Fragment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        system: Option<SystemArg>,
        /// Overrides the maximum simplex rank.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Compute descriptors and oracle corrections (both systems unless --system).
    Label {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        system: Option<SystemArg>,
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Train one network array per fragment kind on the primitive system.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Update the primitive bank slice by slice with target samples.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Assemble full-system energies (target unless --system).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        system: Option<SystemArg>,
        /// Predict at this rank only; default sweeps 0 to the configured maximum.
        #[arg(long)]
        rank: Option<usize>,
        /// Overrides `predict.bank`.
        #[arg(long, value_enum)]
        bank: Option<BankArg>,
    },
    /// Fragment weights and cost estimate (both systems unless --system).
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        system: Option<SystemArg>,
        #[arg(long)]
        rank: Option<usize>,
    },
}

fn load(common: &Common, rank: Option<usize>) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(r) = rank {
        cfg.fragmentation.max_rank = r;
    }
    Ok(cfg)
}

fn systems(arg: Option<SystemArg>) -> Vec<System> {
    match arg {
        Some(s) => vec![s.into()],
        None => vec![System::Primitive, System::Target],
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("FRAGPES_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("FRAGPES_THREADS must be a non-negative integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Generate { common } => {
            let cfg = load(&common, None)?;
            for (system, path, frames) in pipeline::run_generate(&cfg)? {
                out!("{system}: {frames} frames -> {}", path.display());
            }
        }
        Command::Fragment { common, system, rank } => {
            let cfg = load(&common, rank)?;
            for system in systems(system) {
                let s = pipeline::run_fragment(&cfg, system)?;
                out!(
                    "{system}: {} frames, {} fragments -> {}",
                    s.frames,
                    s.fragments,
                    s.path.display()
                );
                out!("rank\tkind\tcount");
                for ((rank, kind), n) in &s.by_kind {
                    out!("{rank}\t{kind}\t{n}");
                }
            }
        }
        Command::Label { common, system, rank } => {
            let cfg = load(&common, rank)?;
            for system in systems(system) {
                let s = pipeline::run_label(&cfg, system)?;
                out!("{system}: {} labels -> {}", s.labels, s.path.display());
                out!("kind\tsamples\tmean_abs_delta");
                for (kind, (n, mean)) in &s.by_kind {
                    out!("{kind}\t{n}\t{mean:.6}");
                }
            }
        }
        Command::Train { common, rank } => {
            let cfg = load(&common, rank)?;
            let s = pipeline::run_train(&cfg)?;
            out!("model bank -> {}", s.dir.display());
            out!("kind\tsamples\ttrain_samples\ttrain_mae\tfull_mae");
            for e in &s.trained {
                out!(
                    "{}\t{}\t{}\t{:.6}\t{:.6}",
                    e.kind, e.samples, e.train_samples, e.train_mae, e.full_mae
                );
            }
            for (kind, reason) in &s.skipped {
                out!("skipped {kind}: {reason}");
            }
        }
        Command::Transfer { common, rank } => {
            let cfg = load(&common, rank)?;
            let s = pipeline::run_transfer(&cfg)?;
            out!("transferred bank -> {}", s.dir.display());
            out!("kind\tslice\tsamples\ttrain_samples\tmae_before\tmae_after");
            for step in &s.steps {
                out!(
                    "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                    step.kind,
                    step.slice,
                    step.samples,
                    step.train_samples,
                    step.mae_slice_before,
                    step.mae_slice_after
                );
            }
            for kind in &s.cold_started {
                out!("cold start {kind}");
            }
            for (kind, reason) in &s.skipped {
                out!("skipped {kind}: {reason}");
            }
        }
        Command::Predict {
            common,
            system,
            rank,
            bank,
        } => {
            let mut cfg = load(&common, None)?;
            if let Some(b) = bank {
                cfg.predict.bank = match b {
                    BankArg::Primitive => BankChoice::Primitive,
                    BankArg::Transfer => BankChoice::Transfer,
                };
            }
            let system = system.map_or(System::Target, System::from);
            out!("rank\tframes\tmae\tmax_error\ttruncation_mae\tfile");
            for r in pipeline::run_predict(&cfg, system, rank)? {
                out!(
                    "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    r.rank,
                    r.report.count,
                    r.report.mae,
                    r.report.max_error,
                    r.truncation_mae,
                    r.path.display()
                );
            }
        }
        Command::Report { common, system, rank } => {
            let cfg = load(&common, rank)?;
            for system in systems(system) {
                let s = pipeline::run_report(&cfg, system)?;
                out!("{system}: {} frames of {} atoms, {} electrons", s.frames, s.atoms, s.electrons);
                if let Some(c) = s.cost {
                    out!(
                        "training samples {}, relative cost {:.4e}",
                        c.training_samples, c.relative_cost
                    );
                }
                out!("rank\tkind\tomega");
                for k in &s.weights.kinds {
                    out!("{}\t{}\t{:.6}", k.rank, k.kind, k.omega);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    let result = configure_threads().and_then(|()| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
