use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "bugreplay",
    version,
    about = "Extract reproduction steps from Android bug reports and replay them on a device"
)]
pub struct Cli {
    /// TOML config file. Flags and environment variables override it.
    #[arg(long, global = true, env = "BUGREPLAY_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (repeat for trace output). Logs go to stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the steps to reproduce from a bug report.
    Extract(ExtractArgs),
    /// Extract (or load) steps and replay them until the bug shows.
    Replay(Box<ReplayArgs>),
    /// Print the HTML encoding of a UI Automator dump.
    Encode(EncodeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    /// Chat-completion endpoint.
    Http,
    /// Recorded transcripts, for offline runs.
    Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// State-graph app from a JSON spec.
    Sim,
    /// Device or emulator reached through adb.
    Adb,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LlmArgs {
    /// Completion backend; defaults to `transcript` when a transcript is given.
    #[arg(long, value_enum, env = "BUGREPLAY_LLM")]
    pub llm: Option<LlmKind>,

    /// Transcript JSON. Repeat to give each run its own; run N uses entry N mod count.
    #[arg(long = "transcript", value_name = "FILE")]
    pub transcripts: Vec<PathBuf>,

    #[arg(long, env = "BUGREPLAY_ENDPOINT", value_name = "URL")]
    pub endpoint: Option<String>,

    #[arg(long, env = "BUGREPLAY_MODEL")]
    pub model: Option<String>,

    #[arg(long)]
    pub temperature: Option<f32>,

    /// Extra attempts on transport errors, 429 and 5xx.
    #[arg(long)]
    pub retries: Option<u32>,

    /// Prompt ceiling in estimated tokens.
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<usize>,

    /// Exemplar corpus (TOML) used instead of the built-in one.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Independent runs; extraction takes the majority, replay the first reproduction.
    #[arg(long, value_name = "N")]
    pub runs: Option<usize>,

    /// Directory for output files; without it results go to stdout.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// Bug report text file.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,

    #[command(flatten)]
    pub llm: LlmArgs,

    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DeviceArgs {
    /// Device backend; defaults to `sim` when an app spec is given.
    #[arg(long, value_enum, env = "BUGREPLAY_DEVICE")]
    pub device: Option<DeviceKind>,

    /// Simulated app spec (JSON).
    #[arg(long, value_name = "FILE")]
    pub app: Option<PathBuf>,

    #[arg(long, env = "ANDROID_SERIAL")]
    pub serial: Option<String>,

    /// Package of the app under test.
    #[arg(long)]
    pub package: Option<String>,

    /// Launch activity, e.g. `.MainActivity`.
    #[arg(long)]
    pub activity: Option<String>,

    /// Path to the adb binary.
    #[arg(long, value_name = "PATH")]
    pub adb: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BudgetArgs {
    #[arg(long, value_name = "N")]
    pub max_actions: Option<usize>,

    #[arg(long, value_name = "N")]
    pub max_backtracks: Option<usize>,

    /// Wall-clock limit per run, in seconds.
    #[arg(long, value_name = "SECS")]
    pub wall_clock: Option<u64>,

    /// Exploratory hops allowed in a row for one step.
    #[arg(long, value_name = "N")]
    pub max_missing_depth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["report", "steps"]))]
pub struct ReplayArgs {
    /// Bug report text file; steps are extracted first.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Step list (numbered primitives, or the JSON written by `extract`); skips extraction.
    #[arg(long, value_name = "FILE")]
    pub steps: Option<PathBuf>,

    #[command(flatten)]
    pub llm: LlmArgs,

    #[command(flatten)]
    pub device: DeviceArgs,

    #[command(flatten)]
    pub budgets: BudgetArgs,

    /// Drop this many non-final steps before replaying.
    #[arg(long, value_name = "K")]
    pub omit: Option<usize>,

    /// Seed for step omission.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Run sessions in parallel; simulated devices only.
    #[arg(long)]
    pub parallel: bool,

    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    /// UI Automator dump XML.
    #[arg(long, value_name = "FILE")]
    pub dump: PathBuf,

    /// Drop text-less layout wrappers.
    #[arg(long)]
    pub elide: bool,
}
