//! Guided replay of steps on a device.
//!
//! Each iteration dumps the screen, asks the model which element the current
//! step targets and acts on it. An answer of `[MISSING] [id=k]` taps `k` to
//! explore toward the step without advancing. A dead end (no usable answer,
//! an unknown or already-tried id, or too many exploratory hops in a row)
//! pops the last decision, restores that screen and asks again with the
//! failed element excluded.
//!
//! Screens are restored by one system back press when only one action is
//! undone and the screen digest then matches; otherwise the app is restarted
//! and the remaining path re-executed.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Device, DeviceError, DeviceEvent};
use crate::entity::{validate_steps, ActionType, Direction, Step, StepError, DEFAULT_INPUT_VALUE};
use crate::exemplar::ExemplarCorpus;
use crate::gui::{encode_gui, ViewNode};
use crate::guidance::{build_guidance_prompt, parse_guidance_response, GuidanceOptions};
use crate::llm::{LlmClient, DEFAULT_MAX_TOKENS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    /// Device actions, including back presses and re-executed steps.
    pub max_actions: usize,
    pub max_backtracks: usize,
    #[serde(with = "secs")]
    pub wall_clock: Duration,
    /// Consecutive exploratory hops allowed for one step.
    pub max_missing_depth: usize,
    /// Prompt ceiling in estimated tokens.
    pub prompt_tokens: usize,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_actions: 50,
            max_backtracks: 10,
            wall_clock: Duration::from_secs(600),
            max_missing_depth: 2,
            prompt_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub budgets: Budgets,
    pub guidance: GuidanceOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Actions,
    Backtracks,
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    BugTriggered,
    StepsExhaustedNoBug,
    BudgetExhausted { budget: Budget },
    Error { detail: String },
}

impl Outcome {
    fn error(detail: impl std::fmt::Display) -> Self {
        Outcome::Error {
            detail: detail.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEvent {
    /// Position of the step being worked on, 1-based.
    pub step_index: usize,
    /// Text form of what was executed; a synthesized tap for exploratory hops.
    pub step_text: String,
    pub step: Step,
    /// Preorder id in the full screen tree; absent for scrolls.
    pub resolved_id: Option<usize>,
    pub exploratory: bool,
    /// Digest of the full encoding of the screen acted on.
    pub screen_digest: String,
    /// 1-based number of the model call whose answer chose this action.
    pub llm_call: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayTrace {
    pub report_id: String,
    pub steps: Vec<Step>,
    /// Effective path from app launch to the final screen.
    pub events: Vec<ReplayEvent>,
    /// Events undone by backtracking, in the order they were undone.
    pub abandoned: Vec<ReplayEvent>,
    pub outcome: Outcome,
    pub actions: usize,
    pub backtracks: usize,
    /// Guidance queries sent to the model.
    pub llm_calls: usize,
    pub restarts: usize,
    pub wall_time_ms: u64,
}

impl ReplayTrace {
    pub fn exploratory_count(&self) -> usize {
        self.events.iter().filter(|e| e.exploratory).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("no steps to replay")]
    NoSteps,
    #[error("invalid step list: {0}")]
    InvalidSteps(#[from] StepError),
}

/// Swipe endpoints for a scroll: 60% of the screen dimension, centered.
pub fn scroll_swipe(direction: Direction, (width, height): (i32, i32)) -> ((i32, i32), (i32, i32)) {
    let (cx, cy) = (width / 2, height / 2);
    let half_v = height * 6 / 10 / 2;
    let half_h = width * 6 / 10 / 2;
    match direction {
        Direction::Up => ((cx, cy + half_v), (cx, cy - half_v)),
        Direction::Down => ((cx, cy - half_v), (cx, cy + half_v)),
        Direction::Left => ((cx + half_h, cy), (cx - half_h, cy)),
        Direction::Right => ((cx - half_h, cy), (cx + half_h, cy)),
    }
}

/// Device events that carry out `step` on `node`.
pub fn step_events(step: &Step, node: Option<&ViewNode>, screen: (i32, i32)) -> Result<Vec<DeviceEvent>, DeviceError> {
    if step.action.needs_component() != node.is_some() {
        return Err(DeviceError::Unsupported(format!(
            "{} {} a target element",
            step.action,
            if node.is_some() { "takes no" } else { "needs" }
        )));
    }
    let center = node.map(|n| n.bounds.center()).unwrap_or_default();
    let (x, y) = center;
    Ok(match step.action {
        ActionType::Tap => vec![DeviceEvent::Tap { x, y }],
        ActionType::DoubleTap => vec![DeviceEvent::DoubleTap { x, y }],
        ActionType::LongTap => vec![DeviceEvent::LongTap { x, y }],
        ActionType::Input => vec![
            DeviceEvent::Tap { x, y },
            DeviceEvent::Text(step.value.clone().unwrap_or_else(|| DEFAULT_INPUT_VALUE.to_string())),
        ],
        ActionType::Scroll => {
            let direction = step
                .direction
                .ok_or_else(|| DeviceError::Unsupported("scroll without a direction".into()))?;
            let (from, to) = scroll_swipe(direction, screen);
            vec![DeviceEvent::Swipe { from, to }]
        }
    })
}

/// Performs one step on the device.
pub fn execute_step(device: &mut dyn Device, step: &Step, node: Option<&ViewNode>) -> Result<(), DeviceError> {
    for event in step_events(step, node, device.screen_size())? {
        device.inject(&event)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ReexecuteError {
    #[error("screen before event {index} differs from the recorded one")]
    Diverged { index: usize },
    #[error("event {index} names element {id}, which is not on screen")]
    MissingElement { index: usize, id: usize },
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// Re-executes recorded events from the current screen, checking each
/// screen digest first.
pub fn reexecute(device: &mut dyn Device, events: &[ReplayEvent]) -> Result<(), ReexecuteError> {
    for (index, event) in events.iter().enumerate() {
        let root = device.dump_hierarchy()?;
        let gui = encode_gui(&root);
        if gui.digest() != event.screen_digest {
            return Err(ReexecuteError::Diverged { index });
        }
        let node = match event.resolved_id {
            Some(id) => Some(
                gui.nodes()
                    .get(id)
                    .ok_or(ReexecuteError::MissingElement { index, id })?,
            ),
            None => None,
        };
        execute_step(device, &event.step, node)?;
    }
    Ok(())
}

/// A decision point that can be returned to.
#[derive(Debug, Clone)]
struct Frame {
    cursor: usize,
    missing_depth: usize,
    /// Ids already tried on this screen for this step, the chosen one included.
    excluded: BTreeSet<usize>,
    digest: String,
    /// None for scrolls, which are not decisions.
    choice: Option<usize>,
    /// Path length before this frame's event.
    path_len: usize,
}

enum Decision {
    Act { node: ViewNode, id: usize },
    Explore { node: ViewNode, id: usize },
    DeadEnd(String),
}

struct Session<'a> {
    steps: &'a [Step],
    device: &'a mut dyn Device,
    llm: &'a dyn LlmClient,
    corpus: &'a ExemplarCorpus,
    config: &'a ReplayConfig,
    started: Instant,
    cursor: usize,
    missing_depth: usize,
    excluded: BTreeSet<usize>,
    history: Vec<Frame>,
    path: Vec<ReplayEvent>,
    abandoned: Vec<ReplayEvent>,
    actions: usize,
    backtracks: usize,
    llm_calls: usize,
    restarts: usize,
}

type Flow<T> = Result<T, Outcome>;

impl Session<'_> {
    fn budgets(&self) -> &Budgets {
        &self.config.budgets
    }

    fn spend_action(&mut self) -> Flow<()> {
        if self.actions >= self.budgets().max_actions {
            return Err(Outcome::BudgetExhausted {
                budget: Budget::Actions,
            });
        }
        self.actions += 1;
        Ok(())
    }

    fn check_clock(&self) -> Flow<()> {
        if self.started.elapsed() > self.budgets().wall_clock {
            return Err(Outcome::BudgetExhausted {
                budget: Budget::WallClock,
            });
        }
        Ok(())
    }

    fn act(&mut self, step: &Step, node: Option<&ViewNode>) -> Flow<()> {
        self.spend_action()?;
        execute_step(self.device, step, node).map_err(Outcome::error)?;
        if self.device.crashed().map_err(Outcome::error)? {
            return Err(Outcome::BugTriggered);
        }
        Ok(())
    }

    fn run(&mut self) -> Outcome {
        match self.drive() {
            Ok(()) => Outcome::StepsExhaustedNoBug,
            Err(outcome) => outcome,
        }
    }

    fn drive(&mut self) -> Flow<()> {
        while self.cursor < self.steps.len() {
            self.check_clock()?;
            let root = self.device.dump_hierarchy().map_err(Outcome::error)?;
            let digest = encode_gui(&root).digest();
            let step = self.steps[self.cursor].clone();

            if step.action == ActionType::Scroll {
                self.record(&step, None, false, digest);
                self.act(&step, None)?;
                self.advance();
                continue;
            }

            match self.decide(&step, &root)? {
                Decision::Act { node, id } => {
                    log::debug!("step {}: element {id}", step.index);
                    self.record(&step, Some(id), false, digest);
                    self.act(&step, Some(&node))?;
                    self.advance();
                }
                Decision::Explore { node, id } => {
                    log::debug!("step {}: exploring element {id}", step.index);
                    let hop = Step::tap(step.index, node.label());
                    self.record(&hop, Some(id), true, digest);
                    self.act(&hop, Some(&node))?;
                    self.missing_depth += 1;
                    self.excluded.clear();
                }
                Decision::DeadEnd(reason) => {
                    log::debug!("step {}: dead end ({reason}), backtracking", step.index);
                    self.backtrack()?;
                }
            }
        }
        Ok(())
    }

    fn decide(&mut self, step: &Step, root: &ViewNode) -> Flow<Decision> {
        let limit = self.budgets().prompt_tokens.min(self.llm.max_prompt_tokens());
        let gp = build_guidance_prompt(step, root, self.corpus, limit, &self.excluded, &self.config.guidance)
            .map_err(Outcome::error)?;
        self.llm_calls += 1;
        let response = self.llm.complete(&gp.prompt).map_err(Outcome::error)?;
        let answer = match parse_guidance_response(&response) {
            Ok(answer) => answer,
            Err(e) => return Ok(Decision::DeadEnd(e.to_string())),
        };
        let Some(shown) = answer.component_id else {
            return Ok(Decision::DeadEnd("missing step without a hop target".into()));
        };
        let node = match gp.gui.resolve(shown as i64) {
            Ok(node) => node.clone(),
            Err(e) => return Ok(Decision::DeadEnd(e.to_string())),
        };
        let id = gp.gui.canonical_id(shown).expect("resolved ids are indexed");
        if self.excluded.contains(&id) {
            return Ok(Decision::DeadEnd(format!("element {shown} was already tried")));
        }
        if !answer.missing {
            return Ok(Decision::Act { node, id });
        }
        if self.missing_depth + 1 > self.budgets().max_missing_depth {
            return Ok(Decision::DeadEnd("too many exploratory hops".into()));
        }
        Ok(Decision::Explore { node, id })
    }

    /// Pushes the decision frame and the event, before the action runs.
    fn record(&mut self, step: &Step, id: Option<usize>, exploratory: bool, digest: String) {
        let mut excluded = std::mem::take(&mut self.excluded);
        excluded.extend(id);
        self.history.push(Frame {
            cursor: self.cursor,
            missing_depth: self.missing_depth,
            excluded,
            digest: digest.clone(),
            choice: id,
            path_len: self.path.len(),
        });
        self.path.push(ReplayEvent {
            step_index: self.steps[self.cursor].index,
            step_text: step.to_string(),
            step: step.clone(),
            resolved_id: id,
            exploratory,
            screen_digest: digest,
            llm_call: id.map(|_| self.llm_calls),
        });
    }

    fn advance(&mut self) {
        self.cursor += 1;
        self.missing_depth = 0;
        self.excluded.clear();
    }

    fn backtrack(&mut self) -> Flow<()> {
        if self.backtracks >= self.budgets().max_backtracks {
            return Err(Outcome::BudgetExhausted {
                budget: Budget::Backtracks,
            });
        }
        self.backtracks += 1;

        let mut target = None;
        while let Some(frame) = self.history.pop() {
            let decision = frame.choice.is_some();
            target = Some(frame);
            if decision {
                break;
            }
        }
        // nothing recorded yet: ask again on the same screen
        let Some(frame) = target else {
            return Ok(());
        };

        let undone = self.path.split_off(frame.path_len);
        self.abandoned.extend(undone.iter().cloned());
        self.restore(&frame, undone.len())?;
        self.cursor = frame.cursor;
        self.missing_depth = frame.missing_depth;
        self.excluded = frame.excluded;
        Ok(())
    }

    fn current_digest(&mut self) -> Flow<String> {
        let root = self.device.dump_hierarchy().map_err(Outcome::error)?;
        Ok(encode_gui(&root).digest())
    }

    fn restore(&mut self, frame: &Frame, undone: usize) -> Flow<()> {
        if self.current_digest()? == frame.digest {
            return Ok(());
        }
        if undone == 1 {
            self.spend_action()?;
            self.device.press_back().map_err(Outcome::error)?;
            if self.current_digest()? == frame.digest {
                return Ok(());
            }
        }
        self.device.restart().map_err(Outcome::error)?;
        self.restarts += 1;
        for i in 0..self.path.len() {
            self.check_clock()?;
            self.spend_action()?;
            reexecute(self.device, std::slice::from_ref(&self.path[i])).map_err(Outcome::error)?;
        }
        if self.current_digest()? != frame.digest {
            return Err(Outcome::error("could not restore the screen to backtrack to"));
        }
        Ok(())
    }
}

/// Replays `steps` on `device` and reports what happened.
///
/// Device, model and prompt failures end the run with [`Outcome::Error`];
/// only an unusable step list is returned as `Err`.
pub fn replay(
    report_id: &str,
    steps: &[Step],
    device: &mut dyn Device,
    llm: &dyn LlmClient,
    corpus: &ExemplarCorpus,
    config: &ReplayConfig,
) -> Result<ReplayTrace, ReplayError> {
    if steps.is_empty() {
        return Err(ReplayError::NoSteps);
    }
    validate_steps(steps)?;
    let mut session = Session {
        steps,
        device,
        llm,
        corpus,
        config,
        started: Instant::now(),
        cursor: 0,
        missing_depth: 0,
        excluded: BTreeSet::new(),
        history: Vec::new(),
        path: Vec::new(),
        abandoned: Vec::new(),
        actions: 0,
        backtracks: 0,
        llm_calls: 0,
        restarts: 0,
    };
    let outcome = session.run();
    log::info!(
        "replay of {report_id}: {outcome:?} after {} actions, {} backtracks",
        session.actions,
        session.backtracks
    );
    Ok(ReplayTrace {
        report_id: report_id.to_string(),
        steps: steps.to_vec(),
        wall_time_ms: session.started.elapsed().as_millis() as u64,
        events: session.path,
        abandoned: session.abandoned,
        outcome,
        actions: session.actions,
        backtracks: session.backtracks,
        llm_calls: session.llm_calls,
        restarts: session.restarts,
    })
}
