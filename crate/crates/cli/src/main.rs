//! `sepll` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sepll::data::{DataFormat, SplitName};
use sepll::Error;

#[derive(Parser)]
#[command(name = "sepll", version, about = "Weak supervision by separating task and LF information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split multi-class weak labels into one-class LFs and write L/T triplet files.
    Convert {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the keyword/regex LFs of a config and write L/T triplet files.
    ApplyLfs {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coverage, overlap and per-LF statistics for every split.
    Stats {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// Config with a [data.synth] table; defaults are used without one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::WrenchJson)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write the best-dev checkpoint, history and manifest.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Task metrics of a checkpoint on the dev and test splits.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Memorization, match-count and train/test gap analyses.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Analysis::Memorization)]
        which: Analysis,
        /// Split analysed by `memorization` and `matches`.
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Match threshold `p > k / m`; overrides the config.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..=4))]
        threshold_k: Option<u64>,
        /// Also write SVG bar charts.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full model and each ablated variant.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated dataset directories; defaults to the config's data.
        #[arg(long)]
        datasets: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::WrenchJson)]
    format: FormatArg,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// TOML run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `data.path` (and clears `data.synth`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the config echoed in the checkpoint.
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FormatArg {
    WrenchJson,
    Jsonl,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::WrenchJson => DataFormat::WrenchJson,
            FormatArg::Jsonl => DataFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Analysis {
    Memorization,
    Matches,
    Gap,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Dev => SplitName::Dev,
            SplitArg::Test => SplitName::Test,
        }
    }
}

fn init_threads() -> sepll::Result<()> {
    let Ok(value) = std::env::var("SEPLL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("SEPLL_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> sepll::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Convert { data, out } => commands::convert(&data.data, data.format.into(), &out),
        Command::ApplyLfs { run, out } => commands::apply_lfs(&run, &out),
        Command::Stats { run, out } => commands::stats(&run, out.as_deref()),
        Command::Synth {
            config,
            seed,
            format,
            out,
        } => commands::synth(config.as_deref(), seed, format.into(), &out),
        Command::Train { run, out } => commands::train(&run, &out),
        Command::Eval { model, out } => commands::eval(&model, out.as_deref()),
        Command::Analyze {
            model,
            which,
            split,
            threshold_k,
            plot,
            out,
        } => commands::analyze(&model, which, split.into(), threshold_k.map(|k| k as usize), plot, &out),
        Command::Ablate { run, datasets, out } => commands::ablate(&run, datasets.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
