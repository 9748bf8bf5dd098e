//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always show; exits non-zero if any check fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use bugreplay_cli::args::{Cli, Command};
use bugreplay_cli::config::{FileConfig, RunConfig};
use bugreplay_cli::{cmd_extract, Exit};
use bugreplay_core::device::{omission_plan, synthesize_omissions, AdbConfig, AdbDevice, Device, RecordingRunner};
use bugreplay_core::entity::{render_step_list, validate_steps, Step};
use bugreplay_core::exemplar::{html_ids, ExemplarCorpus, MAX_EXEMPLARS};
use bugreplay_core::extraction::{build_extraction_prompt, parse_extraction_response, ExtractionError};
use bugreplay_core::gui::{encode_gui, parse_dump, ViewNode};
use bugreplay_core::guidance::parse_guidance_response;
use bugreplay_core::llm::{LlmClient, LlmError, RecordingLlm, ScriptedLlm, TranscriptLlm};
use bugreplay_core::prompt::{estimate_tokens, Prompt, SegmentKind};
use bugreplay_core::replay::{execute_step, replay, Outcome, ReplayConfig, ReplayTrace};
use bugreplay_core::testkit::{garbage_text, random_steps, random_tree, scenarios};
use bugreplay_core::{BugReport, Direction};
use clap::Parser;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<(), String>;
type Criterion = (&'static str, Box<dyn Fn() -> Check>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Every prompt any check sends, for the token-budget criterion.
#[derive(Clone, Default)]
struct PromptLog(Arc<Mutex<Vec<Prompt>>>);

impl PromptLog {
    fn wrap<L: LlmClient + 'static>(&self, inner: L) -> LoggedLlm<L> {
        LoggedLlm {
            inner: RecordingLlm::new(inner),
            log: self.clone(),
        }
    }

    fn prompts(&self) -> Vec<Prompt> {
        self.0.lock().unwrap().clone()
    }
}

struct LoggedLlm<L> {
    inner: RecordingLlm<L>,
    log: PromptLog,
}

impl<L: LlmClient> LlmClient for LoggedLlm<L> {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        self.log.0.lock().unwrap().push(prompt.clone());
        self.inner.complete(prompt)
    }

    fn max_prompt_tokens(&self) -> usize {
        self.inner.max_prompt_tokens()
    }
}

impl<L: LlmClient> LoggedLlm<L> {
    fn queries(&self) -> Vec<String> {
        self.inner
            .prompts()
            .iter()
            .filter_map(|p| p.segment(SegmentKind::TestInput))
            .map(|s| s.text.clone())
            .collect()
    }
}

const BOOKMARK_STEPS: &str = "1. [Tap] [\"bookmark\"]
2. [Tap] [\"add new bookmark\"]
3. [Input] [\"name\"] [\"a\"]
4. [Tap] [\"add new bookmark\"]
5. [Input] [\"name\"] [\"b\"]
6. [Tap] [\"a\"]
7. [Input] [\"name\"] [\"b\"]
8. [Tap] [\"back\"]
";

fn c1_bookmark_extraction(log: &PromptLog) -> Check {
    let started = Instant::now();
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let report = fixture("bookmark_report.txt");
    let transcript = fixture("bookmark_transcript.json");
    let cli = Cli::try_parse_from([
        "bugreplay",
        "extract",
        "--runs",
        "1",
        "--report",
        report.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ])
    .map_err(|e| e.to_string())?;
    let Command::Extract(args) = cli.command else {
        return Err("not an extract command".into());
    };
    let config = RunConfig::for_extract(&args, FileConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        cmd_extract(&config).map_err(|e| e.to_string())? == Exit::Success,
        "non-zero exit"
    );
    let written = fs::read_to_string(dir.path().join("steps.txt")).map_err(|e| e.to_string())?;
    ensure!(written == BOOKMARK_STEPS, "steps differ:\n{written}");
    ensure!(written.lines().count() == 8, "expected 8 steps");

    // the same extraction prompt, recorded for the token check
    let text = fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let prompt = build_extraction_prompt(
        &BugReport::new("bookmark", text).unwrap(),
        &ExemplarCorpus::builtin(),
        4096,
    )
    .map_err(|e| e.to_string())?;
    log.0.lock().unwrap().push(prompt);
    ensure!(
        started.elapsed() < Duration::from_secs(1),
        "took {:?}",
        started.elapsed()
    );
    Ok(())
}

fn c2_guidance_outputs() -> Check {
    let a = parse_guidance_response("[id=6]").map_err(|e| e.to_string())?;
    ensure!(a.component_id == Some(6) && !a.missing, "first output: {a:?}");
    let b = parse_guidance_response("[MISSING] [id=1]").map_err(|e| e.to_string())?;
    ensure!(b.component_id == Some(1) && b.missing, "second output: {b:?}");
    // with the reasoning in front, the answer still comes out the same
    let verbose = parse_guidance_response(
        "No component says \"Sign in\"; the \"Log in\" button has id 6, so tap [id=6].\n[id=6]",
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        verbose.component_id == Some(6) && !verbose.missing,
        "verbose: {verbose:?}"
    );
    Ok(())
}

/// Deletes, duplicates or swaps a few characters.
fn mutate(rng: &mut StdRng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..6) {
        if chars.is_empty() {
            break;
        }
        let i = rng.random_range(0..chars.len());
        match rng.random_range(0..3) {
            0 => {
                chars.remove(i);
            }
            1 => chars.insert(i, chars[i]),
            _ => chars[i] = ['[', ']', '"', ' ', '\n', 'x'][rng.random_range(0..6)],
        }
    }
    chars.into_iter().collect()
}

fn c3_parser_round_trip() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(3);
    for i in 0..1000 {
        let steps = random_steps(&mut rng, 12);
        let parsed = parse_extraction_response(&render_step_list(&steps)).map_err(|e| format!("list {i}: {e}"))?;
        ensure!(parsed == steps, "list {i} changed in the round trip");
    }
    let mut errors = 0;
    for i in 0..1000 {
        let text = if i % 2 == 0 {
            garbage_text(&mut rng)
        } else {
            let steps = random_steps(&mut rng, 6);
            mutate(&mut rng, &render_step_list(&steps))
        };
        match parse_extraction_response(&text) {
            Ok(steps) => ensure!(
                !steps.is_empty() && validate_steps(&steps).is_ok(),
                "input {i} gave invalid steps: {text:?}"
            ),
            Err(ExtractionError::NoStepsFound | ExtractionError::MalformedStep { .. }) => errors += 1,
            Err(e) => return Err(format!("input {i}: unexpected error kind {e}")),
        }
    }
    ensure!(errors > 0, "no garbage input was rejected");
    ensure!(
        started.elapsed() < Duration::from_secs(5),
        "took {:?}",
        started.elapsed()
    );
    Ok(())
}

fn preorder(root: &ViewNode) -> Vec<&ViewNode> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        out.push(n);
        stack.extend(n.children.iter().rev());
    }
    out
}

/// Expected opening of the element for a class, written out independently.
fn expected_tag(class: &str) -> &'static str {
    match class.rsplit(['.', '$']).next().unwrap_or(class) {
        "TextView" => "<p ",
        "Button" | "ImageButton" => "<button ",
        "ImageView" => "<img ",
        "EditText" | "CheckBox" | "Switch" | "RadioButton" => "<input ",
        _ => "<div ",
    }
}

fn c4_encoder() -> Check {
    let started = Instant::now();
    for seed in 0..1000u64 {
        let tree = random_tree(seed, 200);
        let gui = encode_gui(&tree);
        ensure!(gui == encode_gui(&tree.clone()), "tree {seed}: not deterministic");
        let nodes = preorder(&tree);
        ensure!(nodes.len() <= 200, "tree {seed}: too big");
        let ids = html_ids(gui.html());
        ensure!(
            ids == (0..nodes.len()).collect::<Vec<_>>(),
            "tree {seed}: ids are not 0..n-1"
        );
        let lines: Vec<&str> = gui
            .html()
            .lines()
            .map(str::trim_start)
            .filter(|l| !l.starts_with("</"))
            .collect();
        ensure!(
            lines.len() == nodes.len(),
            "tree {seed}: one opening line per node expected"
        );
        for (i, node) in nodes.iter().enumerate() {
            ensure!(
                lines[i].starts_with(expected_tag(&node.class_name)),
                "tree {seed}: node {i} ({}) encoded as {}",
                node.class_name,
                lines[i]
            );
            let back = gui.resolve(i as i64).map_err(|e| e.to_string())?;
            ensure!(*back == node.shallow(), "tree {seed}: resolve({i}) is not the node");
        }
        ensure!(
            gui.resolve(nodes.len() as i64).is_err(),
            "tree {seed}: out-of-range id resolved"
        );
    }
    ensure!(
        started.elapsed() < Duration::from_secs(5),
        "took {:?}",
        started.elapsed()
    );
    Ok(())
}

fn run_replay(steps: &[Step], device: &mut dyn Device, llm: &dyn LlmClient) -> Result<ReplayTrace, String> {
    replay(
        "acceptance",
        steps,
        device,
        llm,
        &ExemplarCorpus::builtin(),
        &ReplayConfig::default(),
    )
    .map_err(|e| e.to_string())
}

fn c5_scenarios(log: &PromptLog) -> Check {
    let started = Instant::now();
    let suite = scenarios();
    ensure!(suite.len() >= 10, "only {} scenarios", suite.len());
    for s in &suite {
        // (a) complete steps
        let llm = log.wrap(TranscriptLlm::new(s.oracle_transcript(&[])).map_err(|e| e.to_string())?);
        let trace = run_replay(&s.golden, &mut s.device(), &llm)?;
        ensure!(
            trace.outcome == Outcome::BugTriggered,
            "{}: complete run ended {:?}",
            s.name,
            trace.outcome
        );
        ensure!(
            trace.exploratory_count() == 0,
            "{}: exploratory events on a complete run",
            s.name
        );

        // (b) one or two steps omitted
        for k in 1..=2 {
            for seed in 0..3 {
                let plan = omission_plan(s.golden.len(), k, seed).map_err(|e| e.to_string())?;
                let steps = synthesize_omissions(&s.golden, k, seed).map_err(|e| e.to_string())?;
                let llm = log.wrap(TranscriptLlm::new(s.oracle_transcript(&plan)).map_err(|e| e.to_string())?);
                let trace = run_replay(&steps, &mut s.device(), &llm)?;
                ensure!(
                    trace.outcome == Outcome::BugTriggered,
                    "{} k={k} seed={seed}: ended {:?}",
                    s.name,
                    trace.outcome
                );
                ensure!(
                    trace.exploratory_count() == k,
                    "{} k={k} seed={seed}: {} exploratory events",
                    s.name,
                    trace.exploratory_count()
                );
            }
        }

        // (c) a wrong first answer
        let llm = log.wrap(TranscriptLlm::new(s.wrong_id_transcript()).map_err(|e| e.to_string())?);
        let trace = run_replay(&s.golden, &mut s.device(), &llm)?;
        ensure!(
            trace.outcome == Outcome::BugTriggered,
            "{}: wrong-id run ended {:?}",
            s.name,
            trace.outcome
        );
        ensure!(trace.backtracks >= 1, "{}: no backtrack", s.name);
        let clause = format!("excluding components [id={}]", s.decoy_id);
        ensure!(
            llm.queries().iter().any(|q| q.contains(&clause)),
            "{}: no retried query excludes the decoy",
            s.name
        );
    }
    ensure!(
        started.elapsed() < Duration::from_secs(30),
        "took {:?}",
        started.elapsed()
    );
    Ok(())
}

fn c6_budget(log: &PromptLog) -> Check {
    let s = scenarios().into_iter().next().unwrap();
    let (tx, rx) = mpsc::channel();
    let log = log.clone();
    std::thread::spawn(move || {
        let llm = log.wrap(ScriptedLlm::constant("It is not on this screen. [MISSING]"));
        let _ = tx.send(run_replay(&s.golden, &mut s.device(), &llm));
    });
    let trace = rx
        .recv_timeout(Duration::from_secs(30))
        .map_err(|_| "replay did not finish within 30 s".to_string())??;
    let max = ReplayConfig::default().budgets.max_actions;
    ensure!(
        matches!(trace.outcome, Outcome::BudgetExhausted { .. }),
        "ended {:?}",
        trace.outcome
    );
    ensure!(trace.actions <= max, "{} actions, budget {max}", trace.actions);
    Ok(())
}

fn c7_tokens(log: &PromptLog) -> Check {
    let prompts = log.prompts();
    ensure!(prompts.len() > 100, "only {} prompts recorded", prompts.len());
    for (i, p) in prompts.iter().enumerate() {
        let tokens = estimate_tokens(p.rendered());
        ensure!(tokens <= 4096, "prompt {i}: {tokens} tokens");
        ensure!(
            (1..=MAX_EXEMPLARS).contains(&p.exemplar_count()),
            "prompt {i}: {} exemplars",
            p.exemplar_count()
        );
    }
    ensure!(MAX_EXEMPLARS == 3, "exemplar cap is {MAX_EXEMPLARS}");
    Ok(())
}

fn c8_adb() -> Check {
    let xml = fs::read_to_string(fixture("login_dump.xml")).map_err(|e| e.to_string())?;
    let root = parse_dump(&xml).map_err(|e| e.to_string())?;
    let gui = encode_gui(&root);
    let node = |id: i64| gui.resolve(id).map_err(|e| e.to_string());
    let runner = RecordingRunner::new().respond("wm size", "Physical size: 1080x1920\n");
    let config = AdbConfig {
        serial: Some("emulator-5554".into()),
        ..AdbConfig::default()
    };
    let mut device = AdbDevice::connect(runner, config).map_err(|e| e.to_string())?;
    let cases: Vec<(Step, Option<&ViewNode>)> = vec![
        (Step::tap(1, "Log in"), Some(node(7)?)),
        (Step::double_tap(2, "Welcome back"), Some(node(3)?)),
        (Step::long_tap(3, "Terms & privacy"), Some(node(8)?)),
        (Step::input(4, "Username", "it's me & you"), Some(node(4)?)),
        (Step::scroll(5, Direction::Down), None),
        (Step::scroll(6, Direction::Left), None),
    ];
    for (step, n) in &cases {
        execute_step(&mut device, step, *n).map_err(|e| e.to_string())?;
    }
    device.press_back().map_err(|e| e.to_string())?;
    let expected = [
        "wm size",
        "logcat -b crash -c",
        "input tap 540 1200",
        "input tap 540 550 && input tap 540 550",
        "input swipe 540 1340 540 1340 800",
        "input tap 540 720",
        "input text it\\'s%sme%s\\&%syou",
        "input swipe 540 384 540 1536 300",
        "input swipe 864 960 216 960 300",
        "input keyevent 4",
    ];
    let got = device.runner().shell_commands();
    ensure!(got == expected, "commands differ:\n{got:#?}");
    let first = &device.runner().calls()[2];
    ensure!(
        first == &["adb", "-s", "emulator-5554", "shell", "input tap 540 1200"],
        "argv {first:?}"
    );
    Ok(())
}

fn main() {
    let log = PromptLog::default();
    let checks: Vec<Criterion> = vec![
        (
            "1 worked extraction example through cmd_extract",
            Box::new({
                let log = log.clone();
                move || c1_bookmark_extraction(&log)
            }),
        ),
        ("2 worked guidance outputs parse", Box::new(c2_guidance_outputs)),
        (
            "3 parser round trip and garbage rejection",
            Box::new(c3_parser_round_trip),
        ),
        ("4 encoder properties on 1000 random trees", Box::new(c4_encoder)),
        (
            "5 replay scenario suite",
            Box::new({
                let log = log.clone();
                move || c5_scenarios(&log)
            }),
        ),
        (
            "6 always-missing oracle hits a budget",
            Box::new({
                let log = log.clone();
                move || c6_budget(&log)
            }),
        ),
        (
            "7 prompt token budget and exemplar count",
            Box::new({
                let log = log.clone();
                move || c7_tokens(&log)
            }),
        ),
        ("8 adb command strings", Box::new(c8_adb)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let ms = started.elapsed().as_millis();
        match result {
            Ok(()) => println!("PASS  criterion {name} ({ms} ms)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({ms} ms): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
