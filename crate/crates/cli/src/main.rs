//! `cidg`: train, label, generate, evaluate and chat with context-based
//! instruction-tuned dialogue models.

use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cidg_core::pipeline::{self, InstructionMode, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "cidg", version, about = "Context-based instruction tuning for dialogue generation")]
struct Cli {
    /// TOML file with RunConfig fields; unset fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config instruction mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Root for relative paths. Defaults to $CIDG_DATA_DIR, then the working directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    None,
    Fixed,
    GeneratedNaive,
    GeneratedIterative,
    Oracle,
}

impl From<Mode> for InstructionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::None => InstructionMode::None,
            Mode::Fixed => InstructionMode::Fixed,
            Mode::GeneratedNaive => InstructionMode::GeneratedNaive,
            Mode::GeneratedIterative => InstructionMode::GeneratedIterative,
            Mode::Oracle => InstructionMode::Oracle,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the instruction generator on the triplet corpus.
    TrainInstgen,
    /// Label every dialogue example with a generated instruction.
    Label,
    /// Train the dialogue model (response-only under `--mode none`).
    TrainDialog,
    /// Generate responses for the test corpus under the instruction mode.
    Generate,
    /// Score the generations against the test corpus.
    Eval,
    /// Chat with the dialogue model on stdin/stdout.
    Chat,
    /// Print the effective configuration as TOML.
    Config,
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.instruction_mode = mode.into();
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = run_config(&cli)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());

    match cli.command {
        Command::TrainInstgen => {
            let o = pipeline::cmd_train_instgen(&cfg)?;
            writeln!(out, "instruction generator: final loss {:.6}", o.history.last().copied().unwrap_or(f64::NAN))?;
        }
        Command::Label => {
            let s = pipeline::cmd_label(&cfg)?;
            writeln!(out, "labeled {} examples ({} fallbacks)", s.records, s.fallbacks)?;
        }
        Command::TrainDialog => {
            let o = pipeline::cmd_train_dialog(&cfg)?;
            writeln!(out, "dialogue model: final loss {:.6}", o.history.last().copied().unwrap_or(f64::NAN))?;
        }
        Command::Generate => {
            let records = pipeline::cmd_generate(&cfg)?;
            writeln!(out, "generated {} responses ({})", records.len(), cfg.instruction_mode.name())?;
        }
        Command::Eval => {
            let report = pipeline::cmd_eval(&cfg)?;
            writeln!(out, "mode: {} ({})", cfg.instruction_mode.name(), cfg.instruction_mode.describe())?;
            write!(out, "{}", report.table())?;
        }
        Command::Chat => {
            let stdin = std::io::stdin();
            pipeline::chat(&cfg, stdin.lock(), &mut out)?;
        }
        Command::Config => write!(out, "{}", cfg.to_toml())?,
    }
    out.flush()?;
    Ok(())
}
