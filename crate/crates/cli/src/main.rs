use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Ask questions of a knowledge graph through an LLM, one visible step at a time.
#[derive(Parser)]
#[command(name = "kgqa", version)]
struct Cli {
    /// TOML configuration file. `KGQA_*` environment variables override it.
    #[arg(long, short, global = true, default_value = "kgqa.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one question headlessly and print every step.
    Ask { question: String },
    /// Start the HTTP service.
    Serve,
    /// Print the structure graph of a SPARQL SELECT query as JSON.
    Graph {
        /// Query file, or `-` for standard input.
        file: PathBuf,
        /// Look up labels in the configured knowledge graph.
        #[arg(long)]
        labels: bool,
    },
    /// Score a question bank.
    Eval {
        /// JSON-lines question bank.
        bank: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Both)]
        answerer: Which,
        /// Where run records and reports are written.
        #[arg(long, default_value = "eval-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Re-record fixtures against live endpoints.
    Record {
        /// Questions to record conversations for.
        questions: Vec<String>,
        /// Also record both answerers over this question bank.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Protocol,
    Baseline,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    let result = rt.block_on(async {
        match cli.command {
            Command::Ask { question } => commands::ask(&cli.config, &question).await,
            Command::Serve => commands::serve(&cli.config).await,
            Command::Graph { file, labels } => commands::graph(&cli.config, &file, labels).await,
            Command::Eval {
                bank,
                answerer,
                out,
                parallelism,
            } => commands::eval(&cli.config, &bank, answerer, &out, parallelism).await,
            Command::Record { questions, bank } => {
                commands::record(&cli.config, &questions, bank.as_deref()).await
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
