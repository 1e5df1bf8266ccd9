//! `enrichbench`: preprocess, enrich, embed, evaluate and report.
//!
//! Exit codes: 0 success, 1 unexpected I/O failure, 2 usage or
//! configuration error, 3 provider failure, 4 partial results.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use enrichbench::enrich::FallbackPolicy;
use enrichbench::store::CACHE_DIR_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "enrichbench",
    version,
    about = "LLM text enrichment before embedding, evaluated MTEB-style"
)]
pub struct Cli {
    /// Cache root for chat completions and embeddings.
    #[arg(long, global = true, env = CACHE_DIR_ENV, default_value = ".enrichbench-cache")]
    pub cache_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in rewrite prompts.
    Prompts,
    /// Strip URLs/hashtags/mentions and lowercase the text fields of a JSONL file.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated steps, applied in canonical order.
        #[arg(long, value_delimiter = ',', default_value = "strip_noise,lowercase")]
        steps: Vec<String>,
    },
    /// Rewrite every document of a JSONL file with one prompt.
    Enrich {
        #[arg(long = "in")]
        input: PathBuf,
        /// Built-in prompt id (see `prompts`); names the prompt when used with --prompt-file.
        #[arg(long, required_unless_present = "prompt_file")]
        prompt: Option<String>,
        /// Plain-text file holding a custom system prompt.
        #[arg(long)]
        prompt_file: Option<PathBuf>,
        /// Chat provider configuration (JSON).
        #[arg(long)]
        provider_config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_in_flight: Option<usize>,
        #[arg(long, value_enum)]
        fallback: Option<Fallback>,
    },
    /// Embed the text of every document of a JSONL file.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        /// Embedding provider configuration (JSON).
        #[arg(long)]
        provider_config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_in_flight: Option<usize>,
    },
    /// Run an experiment configuration and report the result table.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Directory for results.json, report.json, results.md and results.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the classifier seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides max_in_flight for both providers.
        #[arg(long)]
        max_in_flight: Option<usize>,
        #[arg(long, value_enum)]
        fallback: Option<Fallback>,
    },
    /// Render a result table (JSON or CSV) as markdown, CSV or JSON.
    Report {
        /// results.json or results.csv; omit with --published.
        #[arg(long, required_unless_present = "published")]
        table: Option<PathBuf>,
        /// Render the published comparison table instead.
        #[arg(long)]
        published: bool,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fallback {
    Fail,
    Passthrough,
}

impl From<Fallback> for FallbackPolicy {
    fn from(f: Fallback) -> Self {
        match f {
            Fallback::Fail => FallbackPolicy::Fail,
            Fallback::Passthrough => FallbackPolicy::Passthrough,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
