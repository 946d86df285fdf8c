//! `cora`: generate divergent variants, query a model, and report
//! consistency-aware scores.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cora_core::guessing::DEFAULT_THRESHOLD;
use cora_core::metrics::DEFAULT_BMCA_SWEEP;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cora", version, about = "Consistency-aware evaluation of multiple-choice benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the divergent set of every question as JSON lines.
    Variants(VariantsArgs),
    /// Answer every variant with a model endpoint or the mock oracle.
    Run(Box<RunArgs>),
    /// Score one or more matrices.
    Score(ScoreArgs),
    /// Resample variants and report mean and spread of the metrics.
    Bootstrap(BootstrapArgs),
    /// Random-guessing tail probabilities and minimum success guessing rates.
    GuessingTable(GuessingArgs),
    /// Rescore using only variants with the original number of choices.
    Ablation(AblationArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Md,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    InPlace,
    Appended,
}

#[derive(Debug, Args)]
pub struct VariationFlags {
    /// Text of the "none of the above" choice.
    #[arg(long)]
    pub nota_text: Option<String>,
    /// Where the NOTA choice goes when it replaces a distractor.
    #[arg(long, value_enum, default_value_t = PlacementArg::InPlace)]
    pub nota_placement: PlacementArg,
}

#[derive(Debug, Args)]
pub struct VariantsArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only variants with the parent's number of choices.
    #[arg(long)]
    pub same_cardinality: bool,
    #[command(flatten)]
    pub variation: VariationFlags,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run exactly what a previously written manifest describes.
    #[arg(long, conflicts_with_all = ["benchmark", "endpoint_url", "mock_oracle"])]
    pub manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub benchmark: Option<PathBuf>,
    /// JSON-lines pool of worked exemplars.
    #[arg(long)]
    pub fewshot: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// OpenAI-compatible base URL, e.g. http://localhost:8000/v1.
    #[arg(long, requires = "model", required_unless_present_any = ["manifest", "mock_oracle"])]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 60.0)]
    pub timeout_secs: f64,
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
    /// Deterministic stand-in model, e.g. `r=0.9` or `r=0.9,seed=3,fail=invalid`.
    #[arg(long, conflicts_with = "endpoint_url")]
    pub mock_oracle: Option<String>,
    /// File with a prompt template using $QUESTION$, $CHOICES$ and $LETTERS$.
    #[arg(long)]
    pub prompt_template: Option<PathBuf>,
    #[arg(long)]
    pub alphabet: Option<String>,
    #[command(flatten)]
    pub variation: VariationFlags,
    /// Response cache; created when missing.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Matrix artifact to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-variant response records (JSON lines).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Also write the run manifest here.
    #[arg(long)]
    pub write_manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
}

#[derive(Debug, Args)]
pub struct MatrixInputs {
    /// Matrix artifacts written by `run`; one column per file.
    #[arg(long, required = true, num_args = 1..)]
    pub matrix: Vec<PathBuf>,
    /// Column labels, in matrix order; defaults to each run's model name.
    #[arg(long, num_args = 1..)]
    pub label: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScoreOptions {
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BMCA_SWEEP.to_vec())]
    pub bmca_sweep: Vec<f64>,
    /// Average per-question accuracy instead of pooling all variants.
    #[arg(long)]
    pub macro_average: bool,
    /// Leave the original question out of the variant-based metrics.
    #[arg(long)]
    pub exclude_original: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub inputs: MatrixInputs,
    #[command(flatten)]
    pub scoring: ScoreOptions,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub inputs: MatrixInputs,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 100)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw variant indices independently for every question.
    #[arg(long)]
    pub per_question: bool,
    /// Also write every replicate's metrics here.
    #[arg(long)]
    pub replicates_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GuessingArgs {
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    #[arg(long, default_value_t = 5)]
    pub choices: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub inputs: MatrixInputs,
    #[command(flatten)]
    pub scoring: ScoreOptions,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn report(err: &CliError) {
    eprintln!("{}", err.record());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            report(&err);
            return ExitCode::from(err.exit_code());
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err);
            ExitCode::from(err.exit_code())
        }
    }
}
