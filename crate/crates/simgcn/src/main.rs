use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simgcn::commands::{self, load_config};
use simgcn::{checkpoint, AppError};

#[derive(Parser)]
#[command(
    name = "simgcn",
    version,
    about = "Video moment retrieval with a similarity-weighted GCN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its split manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from scratch and write a checkpoint; prints the epoch log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split; prints a CSV table.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Retrieve the query video's action inside the reference video.
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Video index whose ground-truth clip is the query.
        #[arg(long)]
        query: usize,
        /// Video index to search.
        #[arg(long)]
        reference: usize,
    },
    /// Write one pair's adjacency as a text grid and a grayscale PNG.
    DumpAdj {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        query: usize,
        #[arg(long)]
        reference: usize,
        /// Proposal index; defaults to the retrieved proposal.
        #[arg(long)]
        proposal: Option<usize>,
        /// Output stem; `.txt` and `.png` are appended.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), AppError> {
    match cli.command {
        Command::GenData { common, out: path } => {
            let cfg = load_config(common.config.as_deref(), common.seed)?;
            commands::gen_data(&cfg, &path, out)
        }
        Command::Train {
            common,
            data,
            out: path,
        } => {
            let cfg = load_config(common.config.as_deref(), common.seed)?;
            let d = commands::dataset(&cfg, data.as_deref())?;
            commands::train_cmd(&cfg, &d, &path, out).map(|_| ())
        }
        Command::Eval {
            common,
            checkpoint: ck,
            data,
        } => {
            let cfg = load_config(common.config.as_deref(), common.seed)?;
            let ck = checkpoint::load(&ck)?;
            let d = commands::dataset(&cfg, data.as_deref())?;
            commands::eval_cmd(&ck, &d, out).map(|_| ())
        }
        Command::Retrieve {
            common,
            checkpoint: ck,
            data,
            query,
            reference,
        } => {
            let cfg = load_config(common.config.as_deref(), common.seed)?;
            let ck = checkpoint::load(&ck)?;
            let d = commands::dataset(&cfg, data.as_deref())?;
            commands::retrieve_cmd(&ck, &d, query, reference, out).map(|_| ())
        }
        Command::DumpAdj {
            common,
            checkpoint: ck,
            data,
            query,
            reference,
            proposal,
            out: stem,
        } => {
            let cfg = load_config(common.config.as_deref(), common.seed)?;
            let ck = checkpoint::load(&ck)?;
            let d = commands::dataset(&cfg, data.as_deref())?;
            commands::dump_adj_cmd(&ck, &d, query, reference, proposal, &stem, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
