use std::collections::VecDeque;
use std::process::Command;

use super::{Device, DeviceError, DeviceEvent};
use crate::gui::{parse_dump, ViewNode};

/// Substring of a crash-buffer line that marks an uncaught exception.
pub const FATAL_MARKER: &str = "FATAL EXCEPTION";

const DUMP_PATH: &str = "/sdcard/window_dump.xml";
const LONG_PRESS_MS: u32 = 800;
const SWIPE_MS: u32 = 300;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub success: bool,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutput {
    pub fn ok(stdout: impl Into<String>) -> Self {
        CommandOutput {
            success: true,
            stdout: stdout.into(),
            stderr: String::new(),
        }
    }
}

/// Runs one process to completion.
pub trait CommandRunner: Send {
    fn run(&mut self, argv: &[String]) -> Result<CommandOutput, DeviceError>;
}

/// Spawns real processes.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemRunner;

impl CommandRunner for SystemRunner {
    fn run(&mut self, argv: &[String]) -> Result<CommandOutput, DeviceError> {
        let (program, args) = argv.split_first().ok_or_else(|| DeviceError::Command {
            command: String::new(),
            detail: "empty command line".into(),
        })?;
        let output = Command::new(program)
            .args(args)
            .output()
            .map_err(|e| DeviceError::Command {
                command: argv.join(" "),
                detail: e.to_string(),
            })?;
        Ok(CommandOutput {
            success: output.status.success(),
            stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        })
    }
}

/// Records command lines and answers from canned outputs.
///
/// A rule matches when the command line, joined by spaces, contains its
/// needle. Queued rules answer once each in order; sticky rules answer
/// forever. Unmatched commands succeed with empty output.
#[derive(Debug, Default, Clone)]
pub struct RecordingRunner {
    calls: Vec<Vec<String>>,
    queued: VecDeque<(String, CommandOutput)>,
    sticky: Vec<(String, CommandOutput)>,
}

impl RecordingRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond(mut self, needle: impl Into<String>, stdout: impl Into<String>) -> Self {
        self.sticky.push((needle.into(), CommandOutput::ok(stdout)));
        self
    }

    pub fn respond_once(mut self, needle: impl Into<String>, output: CommandOutput) -> Self {
        self.queued.push_back((needle.into(), output));
        self
    }

    pub fn calls(&self) -> &[Vec<String>] {
        &self.calls
    }

    /// The shell command of every `adb ... shell CMD` call, in order.
    pub fn shell_commands(&self) -> Vec<String> {
        self.calls
            .iter()
            .filter_map(|argv| {
                let pos = argv.iter().position(|a| a == "shell")?;
                Some(argv[pos + 1..].join(" "))
            })
            .collect()
    }
}

impl CommandRunner for RecordingRunner {
    fn run(&mut self, argv: &[String]) -> Result<CommandOutput, DeviceError> {
        self.calls.push(argv.to_vec());
        let line = argv.join(" ");
        if let Some(pos) = self
            .queued
            .iter()
            .position(|(needle, _)| line.contains(needle.as_str()))
        {
            return Ok(self.queued.remove(pos).expect("position is valid").1);
        }
        Ok(self
            .sticky
            .iter()
            .find(|(needle, _)| line.contains(needle.as_str()))
            .map(|(_, out)| out.clone())
            .unwrap_or_else(|| CommandOutput::ok("")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdbConfig {
    /// Path to the adb binary; `adb` when empty.
    pub adb: String,
    /// Device serial passed with `-s`.
    pub serial: Option<String>,
    /// Package of the app under test; needed for restart and focus checks.
    pub package: Option<String>,
    /// Launch activity, e.g. `.MainActivity`. Without it the launcher intent is used.
    pub activity: Option<String>,
}

/// A device reached through `adb`.
pub struct AdbDevice<R> {
    runner: R,
    config: AdbConfig,
    screen: (i32, i32),
}

/// Escapes text for `input text`: spaces become `%s` and shell
/// metacharacters get a backslash.
pub fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '\\' | '"' | '\'' | '`' | '$' | '&' | '|' | ';' | '<' | '>' | '(' | ')' | '*' | '~' | '#' | '?' | '['
            | ']' | '{' | '}' | '!' => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

/// Parses `wm size` output, preferring an override size.
fn parse_wm_size(stdout: &str) -> Option<(i32, i32)> {
    let parse = |line: &str| {
        let (_, dims) = line.split_once(':')?;
        let (w, h) = dims.trim().split_once('x')?;
        Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
    };
    let lines: Vec<&str> = stdout.lines().collect();
    lines
        .iter()
        .find(|l| l.starts_with("Override size"))
        .or_else(|| lines.iter().find(|l| l.starts_with("Physical size")))
        .and_then(|l| parse(l))
}

impl<R: CommandRunner> AdbDevice<R> {
    /// Reads the screen size and clears the crash buffer.
    pub fn connect(runner: R, config: AdbConfig) -> Result<Self, DeviceError> {
        let mut device = AdbDevice {
            runner,
            config,
            screen: (0, 0),
        };
        let out = device.shell("wm size")?;
        device.screen = parse_wm_size(&out).ok_or_else(|| DeviceError::Command {
            command: "wm size".into(),
            detail: format!("unexpected output {out:?}"),
        })?;
        device.shell("logcat -b crash -c")?;
        Ok(device)
    }

    pub fn runner(&self) -> &R {
        &self.runner
    }

    fn argv(&self, tail: &[&str]) -> Vec<String> {
        let adb = if self.config.adb.is_empty() {
            "adb"
        } else {
            &self.config.adb
        };
        let mut argv = vec![adb.to_string()];
        if let Some(serial) = &self.config.serial {
            argv.push("-s".into());
            argv.push(serial.clone());
        }
        argv.extend(tail.iter().map(|s| s.to_string()));
        argv
    }

    fn run(&mut self, tail: &[&str]) -> Result<String, DeviceError> {
        let argv = self.argv(tail);
        let out = self.runner.run(&argv)?;
        if !out.success {
            return Err(DeviceError::Command {
                command: argv.join(" "),
                detail: out.stderr.trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    fn shell(&mut self, command: &str) -> Result<String, DeviceError> {
        self.run(&["shell", command])
    }

    fn package(&self) -> Result<String, DeviceError> {
        self.config
            .package
            .clone()
            .ok_or_else(|| DeviceError::Unsupported("no app package configured".into()))
    }

    /// Shell command for an event.
    pub fn event_command(event: &DeviceEvent) -> String {
        match event {
            DeviceEvent::Tap { x, y } => format!("input tap {x} {y}"),
            DeviceEvent::DoubleTap { x, y } => format!("input tap {x} {y} && input tap {x} {y}"),
            DeviceEvent::LongTap { x, y } => format!("input swipe {x} {y} {x} {y} {LONG_PRESS_MS}"),
            DeviceEvent::Text(text) => format!("input text {}", escape_input_text(text)),
            DeviceEvent::Swipe { from, to } => {
                format!("input swipe {} {} {} {} {SWIPE_MS}", from.0, from.1, to.0, to.1)
            }
            DeviceEvent::Back => "input keyevent 4".into(),
        }
    }
}

impl<R: CommandRunner> Device for AdbDevice<R> {
    fn dump_hierarchy(&mut self) -> Result<ViewNode, DeviceError> {
        self.shell(&format!("uiautomator dump {DUMP_PATH}"))?;
        let xml = self.run(&["exec-out", "cat", DUMP_PATH])?;
        Ok(parse_dump(&xml)?)
    }

    fn inject(&mut self, event: &DeviceEvent) -> Result<(), DeviceError> {
        event.check_on_screen(self.screen)?;
        self.shell(&Self::event_command(event)).map(drop)
    }

    /// A fatal exception in the crash buffer, or the app no longer holding the
    /// resumed activity.
    fn crashed(&mut self) -> Result<bool, DeviceError> {
        if self.shell("logcat -d -b crash")?.contains(FATAL_MARKER) {
            return Ok(true);
        }
        let Some(package) = self.config.package.clone() else {
            return Ok(false);
        };
        let activities = self.shell("dumpsys activity activities")?;
        let resumed = activities
            .lines()
            .find(|l| l.contains("mResumedActivity") || l.contains("ResumedActivity:"));
        Ok(resumed.is_some_and(|line| !line.contains(&format!(" {package}/"))))
    }

    fn restart(&mut self) -> Result<(), DeviceError> {
        let package = self.package()?;
        self.shell(&format!("am force-stop {package}"))?;
        self.shell("logcat -b crash -c")?;
        match &self.config.activity {
            Some(activity) => self.shell(&format!("am start -W -n {package}/{activity}"))?,
            None => self.shell(&format!("monkey -p {package} -c android.intent.category.LAUNCHER 1"))?,
        };
        Ok(())
    }

    fn screen_size(&self) -> (i32, i32) {
        self.screen
    }
}
