//! Run configuration: flags, then environment, then the config file, then
//! defaults.
//!
//! The config file is TOML; every key is optional and relative paths are
//! taken from the file's directory:
//!
//! ```toml
//! runs = 3
//! seed = 7
//! omit = 0
//! parallel = false
//! corpus = "corpus.toml"
//! out_dir = "out"
//!
//! [llm]
//! backend = "http"            # or "transcript"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-3.5-turbo"
//! max_tokens = 4096
//! response_max_tokens = 1024
//! temperature = 0.0
//! timeout_secs = 120
//! retries = 3
//! backoff_ms = 1000
//! system_message = "You are a helpful assistant."
//! transcripts = ["run1.json", "run2.json"]
//!
//! [device]
//! backend = "adb"             # or "sim"
//! app = "app.json"
//! serial = "emulator-5554"
//! package = "org.example.app"
//! activity = ".MainActivity"
//! adb = "/opt/android/platform-tools/adb"
//!
//! [budgets]
//! max_actions = 50
//! max_backtracks = 10
//! wall_clock = 600
//! max_missing_depth = 2
//!
//! [guidance]
//! exclusion_clause = "excluding components"
//! ```
//!
//! The API key is read only from `BUGREPLAY_API_KEY`.

use std::path::{Path, PathBuf};

use bugreplay_core::device::AdbConfig;
use bugreplay_core::guidance::GuidanceOptions;
use bugreplay_core::llm::{LlmConfig, DEFAULT_MAX_TOKENS};
use bugreplay_core::replay::{Budgets, ReplayConfig};
use serde::Deserialize;

use crate::args::{BudgetArgs, DeviceArgs, DeviceKind, ExtractArgs, LlmArgs, LlmKind, ReplayArgs, RunArgs};
use crate::CliError;

pub const API_KEY_VAR: &str = "BUGREPLAY_API_KEY";
pub const DEFAULT_RUNS: usize = 3;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub omit: Option<usize>,
    pub parallel: Option<bool>,
    pub corpus: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub llm: LlmSection,
    pub device: DeviceSection,
    pub budgets: Option<Budgets>,
    pub guidance: Option<GuidanceOptions>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: Option<LlmKind>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub max_tokens: Option<usize>,
    pub response_max_tokens: Option<u32>,
    pub temperature: Option<f32>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub system_message: Option<String>,
    pub transcripts: Vec<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub backend: Option<DeviceKind>,
    pub app: Option<PathBuf>,
    pub serial: Option<String>,
    pub package: Option<String>,
    pub activity: Option<String>,
    pub adb: Option<String>,
}

impl FileConfig {
    /// Reads a config file, resolving its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.corpus.as_mut().map(rebase);
        config.out_dir.as_mut().map(rebase);
        config.device.app.as_mut().map(rebase);
        config.llm.transcripts.iter_mut().for_each(rebase);
        Ok(config)
    }
}

#[derive(Debug, Clone)]
pub enum LlmBackend {
    Http(LlmConfig),
    Transcripts(Vec<PathBuf>),
}

#[derive(Debug, Clone)]
pub enum DeviceBackend {
    Simulated(PathBuf),
    Adb(AdbConfig),
}

#[derive(Debug, Clone)]
pub enum Input {
    Report(PathBuf),
    Steps(PathBuf),
}

/// Everything a command needs, after precedence is applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Input,
    pub llm: LlmBackend,
    /// Prompt ceiling shared by extraction and guidance.
    pub prompt_tokens: usize,
    pub corpus: Option<PathBuf>,
    pub device: Option<DeviceBackend>,
    pub replay: ReplayConfig,
    pub runs: usize,
    pub parallel: bool,
    pub omit: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn for_extract(args: &ExtractArgs, file: FileConfig) -> Result<Self, CliError> {
        let mut config = base(&args.llm, &args.run, &file)?;
        config.input = Input::Report(args.report.clone());
        config.validate()?;
        Ok(config)
    }

    pub fn for_replay(args: &ReplayArgs, file: FileConfig) -> Result<Self, CliError> {
        let mut config = base(&args.llm, &args.run, &file)?;
        config.input = match (&args.report, &args.steps) {
            (Some(report), None) => Input::Report(report.clone()),
            (None, Some(steps)) => Input::Steps(steps.clone()),
            _ => return Err(CliError::Usage("give exactly one of --report and --steps".into())),
        };
        config.device = Some(device(&args.device, &file.device)?);
        config.replay.budgets = budgets(&args.budgets, file.budgets.unwrap_or_default());
        config.replay.budgets.prompt_tokens = config.replay.budgets.prompt_tokens.min(config.prompt_tokens);
        config.replay.guidance = file.guidance.unwrap_or_default();
        config.omit = args.omit.or(file.omit).unwrap_or(0);
        config.seed = args.seed.or(file.seed).unwrap_or(0);
        config.parallel = args.parallel || file.parallel.unwrap_or(false);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.into()));
        if self.runs == 0 {
            return usage("--runs must be at least 1");
        }
        if self.prompt_tokens == 0 {
            return usage("max_tokens must be positive");
        }
        let b = &self.replay.budgets;
        if b.max_actions == 0
            || b.max_backtracks == 0
            || b.wall_clock.is_zero()
            || b.max_missing_depth == 0
            || b.prompt_tokens == 0
        {
            return usage("budgets must be positive");
        }
        if self.parallel && !matches!(self.device, Some(DeviceBackend::Simulated(_))) {
            return usage("--parallel needs the simulated device; one physical device runs one session at a time");
        }
        if let LlmBackend::Transcripts(t) = &self.llm {
            if t.is_empty() {
                return usage("the transcript backend needs at least one --transcript");
            }
        }
        Ok(())
    }
}

fn base(llm: &LlmArgs, run: &RunArgs, file: &FileConfig) -> Result<RunConfig, CliError> {
    let section = &file.llm;
    let prompt_tokens = llm.max_tokens.or(section.max_tokens).unwrap_or(DEFAULT_MAX_TOKENS);
    let transcripts = if llm.transcripts.is_empty() {
        section.transcripts.clone()
    } else {
        llm.transcripts.clone()
    };
    let kind = llm.llm.or(section.backend).unwrap_or(if transcripts.is_empty() {
        LlmKind::Http
    } else {
        LlmKind::Transcript
    });
    let backend = match kind {
        LlmKind::Transcript => LlmBackend::Transcripts(transcripts),
        LlmKind::Http => {
            let defaults = LlmConfig::default();
            let mut config = LlmConfig {
                endpoint: llm
                    .endpoint
                    .clone()
                    .or(section.endpoint.clone())
                    .unwrap_or(defaults.endpoint),
                model: llm.model.clone().or(section.model.clone()).unwrap_or(defaults.model),
                api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
                max_tokens: prompt_tokens,
                response_max_tokens: section.response_max_tokens.unwrap_or(defaults.response_max_tokens),
                temperature: llm.temperature.or(section.temperature).unwrap_or(defaults.temperature),
                retry: defaults.retry,
                timeout_secs: section.timeout_secs.unwrap_or(defaults.timeout_secs),
                system_message: section.system_message.clone(),
            };
            config.retry.retries = llm.retries.or(section.retries).unwrap_or(config.retry.retries);
            config.retry.backoff_ms = section.backoff_ms.unwrap_or(config.retry.backoff_ms);
            LlmBackend::Http(config)
        }
    };
    Ok(RunConfig {
        input: Input::Steps(PathBuf::new()),
        llm: backend,
        prompt_tokens,
        corpus: llm.corpus.clone().or(file.corpus.clone()),
        device: None,
        replay: ReplayConfig::default(),
        runs: run.runs.or(file.runs).unwrap_or(DEFAULT_RUNS),
        parallel: false,
        omit: 0,
        seed: 0,
        out_dir: run.out_dir.clone().or(file.out_dir.clone()),
    })
}

fn device(args: &DeviceArgs, section: &DeviceSection) -> Result<DeviceBackend, CliError> {
    let app = args.app.clone().or(section.app.clone());
    let kind = args.device.or(section.backend).unwrap_or(if app.is_some() {
        DeviceKind::Sim
    } else {
        DeviceKind::Adb
    });
    Ok(match kind {
        DeviceKind::Sim => {
            DeviceBackend::Simulated(app.ok_or_else(|| CliError::Usage("the simulated device needs --app".into()))?)
        }
        DeviceKind::Adb => DeviceBackend::Adb(AdbConfig {
            adb: args.adb.clone().or(section.adb.clone()).unwrap_or_default(),
            serial: args.serial.clone().or(section.serial.clone()),
            package: args.package.clone().or(section.package.clone()),
            activity: args.activity.clone().or(section.activity.clone()),
        }),
    })
}

fn budgets(args: &BudgetArgs, mut b: Budgets) -> Budgets {
    if let Some(v) = args.max_actions {
        b.max_actions = v;
    }
    if let Some(v) = args.max_backtracks {
        b.max_backtracks = v;
    }
    if let Some(v) = args.wall_clock {
        b.wall_clock = std::time::Duration::from_secs(v);
    }
    if let Some(v) = args.max_missing_depth {
        b.max_missing_depth = v;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{Cli, Command};
    use clap::Parser;

    fn replay_config(argv: &[&str], file: &str) -> Result<RunConfig, CliError> {
        let cli = Cli::try_parse_from(argv).unwrap();
        let Command::Replay(args) = cli.command else { panic!() };
        RunConfig::for_replay(&args, toml::from_str(file).unwrap())
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let file =
            "runs = 5\nseed = 9\n[budgets]\nmax_actions = 20\n[llm]\nmodel = \"from-file\"\n[device]\napp = \"a.json\"";
        let c = replay_config(
            &[
                "bugreplay",
                "replay",
                "--steps",
                "s.txt",
                "--runs",
                "2",
                "--model",
                "flag",
            ],
            file,
        )
        .unwrap();
        assert_eq!(c.runs, 2);
        assert_eq!(c.seed, 9);
        assert_eq!(c.replay.budgets.max_actions, 20);
        assert_eq!(c.replay.budgets.max_backtracks, 10);
        assert!(matches!(&c.llm, LlmBackend::Http(l) if l.model == "flag"));
        assert!(matches!(&c.device, Some(DeviceBackend::Simulated(p)) if p == Path::new("a.json")));

        let c = replay_config(&["bugreplay", "replay", "--steps", "s.txt", "--app", "x.json"], "").unwrap();
        assert_eq!(c.runs, DEFAULT_RUNS);
        assert_eq!(c.replay.budgets, Budgets::default());
    }

    #[test]
    fn transcripts_select_their_backend() {
        let c = replay_config(
            &[
                "bugreplay",
                "replay",
                "--steps",
                "s",
                "--app",
                "a",
                "--transcript",
                "t.json",
            ],
            "",
        )
        .unwrap();
        assert!(matches!(c.llm, LlmBackend::Transcripts(ref t) if t.len() == 1));
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        for argv in [
            &["bugreplay", "replay", "--steps", "s", "--app", "a", "--runs", "0"][..],
            &[
                "bugreplay",
                "replay",
                "--steps",
                "s",
                "--app",
                "a",
                "--max-actions",
                "0",
            ][..],
            &["bugreplay", "replay", "--steps", "s", "--parallel"][..],
            &["bugreplay", "replay", "--steps", "s", "--device", "sim"][..],
            &[
                "bugreplay",
                "replay",
                "--steps",
                "s",
                "--app",
                "a",
                "--llm",
                "transcript",
            ][..],
        ] {
            assert!(matches!(replay_config(argv, ""), Err(CliError::Usage(_))), "{argv:?}");
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("rnus = 3").is_err());
        assert!(toml::from_str::<FileConfig>("[llm]\napi_key = \"sk\"").is_err());
    }
}
