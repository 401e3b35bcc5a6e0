mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rcscore::corpus::{DecodingStrategy, RecordKind};
use rcscore::evaluation::AnswerMatch;

#[derive(Debug, Parser)]
#[command(name = "rcs", version, about = "Score how consistently a model answers the same problem under different instruction styles")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every subcommand. Each one overrides the matching
/// entry of the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub problems: Option<PathBuf>,
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[arg(long, global = true)]
    pub responses: Option<PathBuf>,
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    /// Accuracy cell file
    #[arg(long, global = true)]
    pub accuracy: Option<PathBuf>,
    /// CRS row file
    #[arg(long, global = true)]
    pub crs: Option<PathBuf>,
    /// Output file; standard output when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub benchmark: Option<String>,
    /// `all` or a single style name
    #[arg(long, global = true)]
    pub style: Option<String>,
    #[arg(long, global = true, value_parser = parse_strategy)]
    pub decoding: Option<DecodingStrategy>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub top_k: Option<u32>,
    #[arg(long, global = true)]
    pub top_p: Option<f64>,
    #[arg(long, global = true)]
    pub max_new_tokens: Option<u32>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Echo prompts instead of calling the endpoint
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Base URL of a chat-completion server
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatchArg {
    Exact,
    Rational,
}

impl From<MatchArg> for AnswerMatch {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Exact => AnswerMatch::Exact,
            MatchArg::Rational => AnswerMatch::Rational,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand problems into one prompt per style
    Prompts,
    /// Send prompts to an endpoint and record the responses
    Collect {
        /// Skip (problem, style) keys already in the output file
        #[arg(long)]
        resume: bool,
    },
    /// Compare two annotated documents
    Score {
        #[arg(long = "a")]
        a: PathBuf,
        #[arg(long = "b")]
        b: PathBuf,
    },
    /// Cross-response consistency per model
    Crs,
    /// Accuracy per style
    Accuracy {
        #[arg(long, value_enum)]
        answer_match: Option<MatchArg>,
    },
    /// Style sensitivity index grid as CSV
    Ssi {
        /// Round accuracies to one decimal first
        #[arg(long)]
        round_accuracy: bool,
    },
    /// Correlate CRS with mean accuracy
    Correlate {
        #[arg(long)]
        label: Option<String>,
        /// Use a permutation test with this many shuffles for p-values
        #[arg(long, default_value_t = 0)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Schema-check a corpus file
    Validate {
        #[arg(long, value_parser = parse_kind)]
        kind: RecordKind,
        path: PathBuf,
    },
}

fn parse_strategy(s: &str) -> Result<DecodingStrategy, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<RecordKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<commands::UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain, leaving out causes an outer message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}
