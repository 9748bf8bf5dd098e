use std::fs;
use std::path::Path;
use std::sync::Arc;

use bugreplay_core::batch::par_map;
use bugreplay_core::device::{synthesize_omissions, AdbDevice, Device, SimulatedApp, SimulatedDevice, SystemRunner};
use bugreplay_core::entity::{render_step_list, BugReport, Step};
use bugreplay_core::exemplar::ExemplarCorpus;
use bugreplay_core::extraction::{extract_s2r, parse_extraction_response};
use bugreplay_core::gui::{encode_gui_with, parse_dump, EncodeOptions};
use bugreplay_core::llm::{HttpLlm, LlmClient, Transcript, TranscriptLlm};
use bugreplay_core::replay::{replay, Outcome, ReplayTrace};
use serde::Serialize;

use crate::args::EncodeArgs;
use crate::config::{DeviceBackend, Input, LlmBackend, RunConfig};
use crate::{CliError, Exit};

fn read(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_report(path: &Path) -> Result<BugReport, CliError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    BugReport::new(id, read(path, "report")?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_corpus(config: &RunConfig) -> Result<ExemplarCorpus, CliError> {
    match &config.corpus {
        Some(path) => {
            ExemplarCorpus::load(path).map_err(|e| CliError::Usage(format!("corpus {}: {e}", path.display())))
        }
        None => Ok(ExemplarCorpus::builtin()),
    }
}

/// Reads every transcript up front so a bad file is reported before any run.
fn load_transcripts(config: &RunConfig) -> Result<Vec<Transcript>, CliError> {
    match &config.llm {
        LlmBackend::Transcripts(paths) => paths
            .iter()
            .map(|p| Transcript::load(p).map_err(|e| CliError::Usage(e.to_string())))
            .collect(),
        LlmBackend::Http(_) => Ok(Vec::new()),
    }
}

/// A fresh backend for one run.
fn llm_for_run(config: &RunConfig, transcripts: &[Transcript], run: usize) -> Result<Box<dyn LlmClient>, CliError> {
    match &config.llm {
        LlmBackend::Http(http) => Ok(Box::new(
            HttpLlm::new(http.clone()).map_err(|e| CliError::Usage(e.to_string()))?,
        )),
        LlmBackend::Transcripts(_) => {
            let transcript = transcripts[run % transcripts.len()].clone();
            let llm = TranscriptLlm::new(transcript).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Box::new(llm.with_limit(config.prompt_tokens)))
        }
    }
}

#[derive(Serialize)]
struct ExtractionRun {
    run: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<Vec<Step>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct ExtractionSummary {
    report_id: String,
    runs: Vec<ExtractionRun>,
    selected_run: usize,
    votes: usize,
    steps: Vec<Step>,
}

/// Most frequent step list; ties go to the list seen first. Returns the
/// winning run (0-based) and its vote count.
pub fn majority(lists: &[Option<Vec<Step>>]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, list) in lists.iter().enumerate() {
        let Some(list) = list else { continue };
        if lists[..i].iter().any(|earlier| earlier.as_ref() == Some(list)) {
            continue;
        }
        let votes = lists.iter().filter(|l| l.as_ref() == Some(list)).count();
        if best.is_none_or(|(_, v)| votes > v) {
            best = Some((i, votes));
        }
    }
    best
}

pub fn cmd_extract(config: &RunConfig) -> Result<Exit, CliError> {
    let Input::Report(path) = &config.input else {
        return Err(CliError::Usage("extract needs --report".into()));
    };
    let report = load_report(path)?;
    let corpus = load_corpus(config)?;
    let transcripts = load_transcripts(config)?;

    let mut results = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let llm = llm_for_run(config, &transcripts, run)?;
        let budget = config.prompt_tokens.min(llm.max_prompt_tokens());
        let result = extract_s2r(&report, llm.as_ref(), &corpus, budget);
        match &result {
            Ok(steps) => eprintln!("run {}: {} step(s)", run + 1, steps.len()),
            Err(e) => eprintln!("run {}: failed: {e}", run + 1),
        }
        results.push(result);
    }

    let lists: Vec<Option<Vec<Step>>> = results.iter().map(|r| r.as_ref().ok().cloned()).collect();
    let Some((winner, votes)) = majority(&lists) else {
        let detail = results
            .iter()
            .filter_map(|r| r.as_ref().err())
            .map(|e| e.to_string())
            .next()
            .unwrap_or_default();
        return Err(CliError::Runtime(format!("extraction failed in every run: {detail}")));
    };
    let steps = lists[winner].clone().expect("winner has steps");
    if config.runs > 1 {
        eprintln!("selected run {} ({votes} of {} agree)", winner + 1, config.runs);
    }

    let text = render_step_list(&steps);
    match &config.out_dir {
        Some(dir) => {
            let summary = ExtractionSummary {
                report_id: report.id.clone(),
                runs: results
                    .iter()
                    .enumerate()
                    .map(|(i, r)| ExtractionRun {
                        run: i + 1,
                        steps: r.as_ref().ok().cloned(),
                        error: r.as_ref().err().map(|e| e.to_string()),
                    })
                    .collect(),
                selected_run: winner + 1,
                votes,
                steps: steps.clone(),
            };
            write(dir, "steps.txt", &text)?;
            write(dir, "steps.json", &to_json(&steps))?;
            write(dir, "extraction.json", &to_json(&summary))?;
        }
        None => print!("{text}"),
    }
    Ok(Exit::Success)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// Step list from a file: the JSON written by `extract`, or numbered primitives.
fn load_steps(path: &Path) -> Result<Vec<Step>, CliError> {
    let text = read(path, "step list")?;
    if let Ok(steps) = serde_json::from_str::<Vec<Step>>(&text) {
        return Ok(steps);
    }
    parse_extraction_response(&text).map_err(|e| CliError::Usage(format!("step list {}: {e}", path.display())))
}

enum Source {
    Report(BugReport),
    Steps(Vec<Step>),
}

fn failed_trace(report_id: &str, steps: Vec<Step>, detail: impl ToString) -> ReplayTrace {
    ReplayTrace {
        report_id: report_id.to_string(),
        steps,
        events: Vec::new(),
        abandoned: Vec::new(),
        outcome: Outcome::Error {
            detail: detail.to_string(),
        },
        actions: 0,
        backtracks: 0,
        llm_calls: 0,
        restarts: 0,
        wall_time_ms: 0,
    }
}

struct ReplayJob<'a> {
    config: &'a RunConfig,
    corpus: &'a ExemplarCorpus,
    transcripts: &'a [Transcript],
    app: Option<Arc<SimulatedApp>>,
    report_id: &'a str,
    source: &'a Source,
}

impl ReplayJob<'_> {
    fn device(&self) -> Result<Box<dyn Device>, String> {
        match (&self.config.device, &self.app) {
            (Some(DeviceBackend::Simulated(_)), Some(app)) => Ok(Box::new(SimulatedDevice::new(Arc::clone(app)))),
            (Some(DeviceBackend::Adb(adb)), _) => {
                let mut device = AdbDevice::connect(SystemRunner, adb.clone()).map_err(|e| e.to_string())?;
                if adb.package.is_some() {
                    device.restart().map_err(|e| e.to_string())?;
                }
                Ok(Box::new(device))
            }
            _ => Err("no device configured".into()),
        }
    }

    /// One full session. Every failure is folded into the trace.
    fn run(&self, run: usize) -> Result<ReplayTrace, CliError> {
        let llm = llm_for_run(self.config, self.transcripts, run)?;
        let budget = self.config.prompt_tokens.min(llm.max_prompt_tokens());
        let steps = match self.source {
            Source::Steps(steps) => steps.clone(),
            Source::Report(report) => match extract_s2r(report, llm.as_ref(), self.corpus, budget) {
                Ok(steps) => steps,
                Err(e) => return Ok(failed_trace(self.report_id, Vec::new(), format!("extraction: {e}"))),
            },
        };
        let steps = if self.config.omit > 0 {
            match synthesize_omissions(&steps, self.config.omit, self.config.seed) {
                Ok(steps) => steps,
                Err(e) => return Err(CliError::Usage(e.to_string())),
            }
        } else {
            steps
        };
        let mut device = match self.device() {
            Ok(device) => device,
            Err(e) => return Ok(failed_trace(self.report_id, steps, format!("device: {e}"))),
        };
        Ok(
            match replay(
                self.report_id,
                &steps,
                device.as_mut(),
                llm.as_ref(),
                self.corpus,
                &self.config.replay,
            ) {
                Ok(trace) => trace,
                Err(e) => failed_trace(self.report_id, steps, e),
            },
        )
    }
}

fn outcome_label(outcome: &Outcome) -> String {
    match outcome {
        Outcome::BugTriggered => "bug triggered".into(),
        Outcome::StepsExhaustedNoBug => "steps exhausted, no bug".into(),
        Outcome::BudgetExhausted { budget } => format!("{budget:?} budget exhausted").to_lowercase(),
        Outcome::Error { detail } => format!("error: {detail}"),
    }
}

pub fn exit_for(outcome: &Outcome) -> Exit {
    match outcome {
        Outcome::BugTriggered => Exit::Success,
        Outcome::StepsExhaustedNoBug | Outcome::BudgetExhausted { .. } => Exit::NoBug,
        Outcome::Error { .. } => Exit::Failure,
    }
}

pub fn cmd_replay(config: &RunConfig) -> Result<Exit, CliError> {
    let (report_id, source) = match &config.input {
        Input::Report(path) => {
            let report = load_report(path)?;
            (report.id.clone(), Source::Report(report))
        }
        Input::Steps(path) => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (id, Source::Steps(load_steps(path)?))
        }
    };
    let corpus = load_corpus(config)?;
    let transcripts = load_transcripts(config)?;
    let app = match &config.device {
        Some(DeviceBackend::Simulated(path)) => Some(Arc::new(
            SimulatedApp::load(path).map_err(|e| CliError::Usage(format!("app {}: {e}", path.display())))?,
        )),
        _ => None,
    };
    let job = ReplayJob {
        config,
        corpus: &corpus,
        transcripts: &transcripts,
        app,
        report_id: &report_id,
        source: &source,
    };

    let traces: Vec<ReplayTrace> = if config.parallel {
        par_map((0..config.runs).collect(), |run| job.run(run))
            .into_iter()
            .collect::<Result<_, _>>()?
    } else {
        let mut traces = Vec::new();
        for run in 0..config.runs {
            let trace = job.run(run)?;
            let done = trace.outcome == Outcome::BugTriggered;
            traces.push(trace);
            if done {
                break;
            }
        }
        traces
    };

    for (i, t) in traces.iter().enumerate() {
        eprintln!(
            "run {}: {} ({} events, {} exploratory, {} backtracks, {} actions)",
            i + 1,
            outcome_label(&t.outcome),
            t.events.len(),
            t.exploratory_count(),
            t.backtracks,
            t.actions
        );
    }
    let chosen = traces
        .iter()
        .position(|t| t.outcome == Outcome::BugTriggered)
        .unwrap_or(0);
    let trace = &traces[chosen];

    match &config.out_dir {
        Some(dir) => {
            for (i, t) in traces.iter().enumerate() {
                write(dir, &format!("trace-run-{}.json", i + 1), &(t.to_json() + "\n"))?;
            }
            write(dir, "trace.json", &(trace.to_json() + "\n"))?;
            write(dir, "steps.txt", &render_step_list(&trace.steps))?;
        }
        None => println!("{}", trace.to_json()),
    }
    Ok(exit_for(&trace.outcome))
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<Exit, CliError> {
    let xml = read(&args.dump, "dump")?;
    let root = parse_dump(&xml).map_err(|e| CliError::Runtime(format!("{}: {e}", args.dump.display())))?;
    let gui = encode_gui_with(
        &root,
        EncodeOptions {
            elide_wrappers: args.elide,
        },
    );
    println!("{}", gui.html());
    Ok(Exit::Success)
}
