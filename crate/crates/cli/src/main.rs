mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coesql_core::extract::RuleGroup;
use coesql_core::prompt::Component;
use coesql_core::{ChainStyle, RuleTag};
use tracing_subscriber::EnvFilter;

/// Chain-of-edit multi-turn text-to-SQL toolkit.
#[derive(Parser, Debug)]
#[command(name = "coesql", version)]
struct Cli {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the edit chain turning one query into another.
    Extract(ExtractArgs),
    /// Apply a rendered edit chain to a query.
    Apply(ApplyArgs),
    /// Answer a test corpus with a chat model.
    Run(Box<RunArgs>),
    /// Score a prediction file.
    Evaluate(EvaluateArgs),
    /// Edit-chain coverage over a corpus for a range of chain limits.
    Coverage(CoverageArgs),
}

#[derive(Args, Debug, Clone)]
struct SchemaArgs {
    /// Table-description file used to resolve names.
    #[arg(long, requires = "db_id")]
    tables: Option<PathBuf>,
    /// Database in the table-description file.
    #[arg(long)]
    db_id: Option<String>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    old: String,
    #[arg(long)]
    new: String,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value = "edit-rule")]
    style: ChainStyle,
    /// Longest admissible chain.
    #[arg(long = "l-c")]
    l_c: Option<usize>,
    /// Enabled rules, by name or short alias; all when omitted.
    #[arg(long, value_delimiter = ',')]
    rules: Vec<RuleTag>,
    #[arg(long)]
    omit_no_change: bool,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    #[arg(long)]
    base: String,
    /// File holding the rendered chain; `-` reads standard input.
    #[arg(long)]
    chain: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value = "edit-rule")]
    style: ChainStyle,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ProviderKind {
    Oracle,
    Replay,
    Openai,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Interactions exemplars are drawn from.
    #[arg(long)]
    train: PathBuf,
    /// Interactions to answer.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    tables: PathBuf,
    /// Directory with `<db>/<db>.sqlite` files, for example rows.
    #[arg(long)]
    db_dir: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "oracle")]
    provider: ProviderKind,
    /// Saved transcript answering requests (replay provider).
    #[arg(long, required_if_eq("provider", "replay"))]
    transcript: Option<PathBuf>,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    base_url: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    key_var: String,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    style: Option<ChainStyle>,
    /// Databases sampled for exemplars.
    #[arg(long = "k-d")]
    k_d: Option<usize>,
    /// Interactions sampled per database.
    #[arg(long = "k-e")]
    k_e: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "l-c")]
    l_c: Option<usize>,
    #[arg(long)]
    post_process: Option<Component>,
    /// Block order of code-style answers, e.g. `code+sql+dict`.
    #[arg(long)]
    component_order: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    token_budget: Option<usize>,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    #[arg(long)]
    no_analysis: bool,
    #[arg(long)]
    omit_no_change: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Interaction file the predictions answer.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    tables: PathBuf,
    /// Enables execution match.
    #[arg(long)]
    db_dir: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    /// Interaction files; repeat to pool several.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    tables: PathBuf,
    #[arg(long = "l-c-min", default_value_t = 1)]
    l_c_min: usize,
    #[arg(long = "l-c-max", default_value_t = 8)]
    l_c_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "S+W,F+S+W,all")]
    groups: Vec<RuleGroup>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_env("COESQL_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Apply(a) => commands::apply(a),
        Command::Run(a) => commands::run(*a, cli.config.as_deref()),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Coverage(a) => commands::coverage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
