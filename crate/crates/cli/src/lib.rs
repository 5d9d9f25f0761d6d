//! Command-line front end: one subcommand per pipeline stage over files, plus a
//! `pipeline` command that chains them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use motifwatch::events::{SideFilter, DEFAULT_GROUP_SIZE};
use motifwatch::io::Format;
use motifwatch::powerlaw::{FitRange, TailForm};
use motifwatch::tape::{Session, Variable};

mod commands;
pub mod manifest;

pub use commands::run;

#[derive(Debug, Parser)]
#[command(
    name = "motifwatch",
    version,
    about = "Order-tape replay, trading-network motifs, event studies and price impact"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct GlobalArgs {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Format of record outputs (csv or jsonl). Inputs are read by extension.
    #[arg(long, global = true, default_value = "csv")]
    pub format: Format,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for generation and bootstrap; overrides a config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Args)]
pub struct SessionArgs {
    /// Session open as milliseconds after midnight.
    #[arg(long, default_value_t = Session::default().open_ms)]
    pub session_open_ms: u32,
}

impl SessionArgs {
    pub fn session(&self) -> Session {
        Session {
            open_ms: self.session_open_ms,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct StudyArgs {
    /// Lag range of the slope fits, LO:HI.
    #[arg(long, default_value_t = FitRange::default())]
    pub fit_range: FitRange,
    /// Events per size group and stock.
    #[arg(long, default_value_t = DEFAULT_GROUP_SIZE)]
    pub group_size: usize,
    /// Trade initiators to keep: buyer, seller or both.
    #[arg(long, default_value = "both")]
    pub side: SideFilter,
    /// Minute-bar variables, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["volatility", "volume", "avg_trade_size", "turnover"])]
    pub variables: Vec<Variable>,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    /// Market configuration (JSON).
    pub config: PathBuf,
    /// Injection plan (JSON).
    #[arg(long, conflicts_with = "injections")]
    pub plan: Option<PathBuf>,
    /// Generate a random plan with this many injections per stock.
    #[arg(long)]
    pub injections: Option<usize>,
}

/// Which integer sample of a motif report to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum MotifSample {
    /// Parallel-edge counts of C instances.
    CEdges,
    ClustersA,
    ClustersB,
    ClustersC,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic order tape with labeled manipulation.
    Synth(SynthArgs),
    /// Rebuild trades, quotes and minute bars from an order tape.
    Replay {
        tape: PathBuf,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Build trading networks and detect motifs.
    Motifs { trades: PathBuf },
    /// Event study of minute-bar activity around motif trades.
    Eventstudy {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        motifs: PathBuf,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Trade-by-trade price impact of motif trades.
    Impact {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        motifs: PathBuf,
        #[arg(long, default_value = "both")]
        side: SideFilter,
    },
    /// Fit a discrete power law to the tail of an integer sample.
    Fit {
        /// Integers separated by whitespace, a JSON array, or a motif report with --sample-of.
        sample: PathBuf,
        #[arg(long, value_enum)]
        sample_of: Option<MotifSample>,
        #[arg(long, default_value = "density")]
        form: TailForm,
        /// Bootstrap replications for a goodness-of-fit p-value; 0 skips it.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
    },
    /// Run every stage in sequence, from a market config or an existing tape.
    Pipeline {
        #[arg(long, required_unless_present = "tape", conflicts_with = "tape")]
        config: Option<PathBuf>,
        #[arg(long, requires = "config", conflicts_with = "injections")]
        plan: Option<PathBuf>,
        #[arg(long, requires = "config")]
        injections: Option<usize>,
        #[arg(long)]
        tape: Option<PathBuf>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        session: SessionArgs,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] motifwatch::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for bad input or usage, 1 for failures of the tool itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_input_error() => 1,
            _ => 2,
        }
    }
}
