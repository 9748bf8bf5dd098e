//! In-memory apps described as a state graph.
//!
//! A spec file is JSON:
//!
//! ```json
//! {
//!   "screen": [1080, 1920],
//!   "initial": "home",
//!   "crash_states": ["crash"],
//!   "states": {
//!     "home": {"tree": {"class": "android.widget.Button", "text": "Go", "bounds": [0, 0, 1080, 200]}},
//!     "crash": {"hierarchy_xml": "<hierarchy>...</hierarchy>"}
//!   },
//!   "transitions": [
//!     {"from": "home", "component": 0, "action": "tap", "to": "crash"}
//!   ]
//! }
//! ```
//!
//! `component` is a preorder id in the source state's tree. It is required
//! for `tap`, `double_tap`, `long_tap` and `input`, and must be absent for
//! `back` and the `scroll_*` actions. Events that match no transition leave
//! the state unchanged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Device, DeviceError, DeviceEvent};
use crate::entity::Direction;
use crate::gui::{parse_dump, Bounds, ViewNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimAction {
    Tap,
    DoubleTap,
    LongTap,
    Input,
    Back,
    ScrollUp,
    ScrollDown,
    ScrollLeft,
    ScrollRight,
}

impl SimAction {
    pub fn scroll(direction: Direction) -> Self {
        match direction {
            Direction::Up => SimAction::ScrollUp,
            Direction::Down => SimAction::ScrollDown,
            Direction::Left => SimAction::ScrollLeft,
            Direction::Right => SimAction::ScrollRight,
        }
    }

    fn needs_component(self) -> bool {
        matches!(
            self,
            SimAction::Tap | SimAction::DoubleTap | SimAction::LongTap | SimAction::Input
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<ViewNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy_xml: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub from: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub action: SimAction,
    pub to: String,
}

fn default_screen() -> (i32, i32) {
    (1080, 1920)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimAppSpec {
    #[serde(default = "default_screen")]
    pub screen: (i32, i32),
    pub initial: String,
    #[serde(default)]
    pub crash_states: BTreeSet<String>,
    pub states: BTreeMap<String, StateSpec>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot read app spec: {0}")]
    Io(String),
    #[error("app spec is not valid JSON: {0}")]
    Syntax(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("state {state:?}: {reason}")]
    BadState { state: String, reason: String },
    #[error("transition {index}: {reason}")]
    BadTransition { index: usize, reason: String },
}

struct State {
    tree: ViewNode,
    /// Bounds per preorder id.
    bounds: Vec<Bounds>,
}

/// A validated state graph.
pub struct SimulatedApp {
    spec: SimAppSpec,
    states: HashMap<String, State>,
    transitions: HashMap<(String, Option<usize>, SimAction), String>,
}

impl std::fmt::Debug for SimulatedApp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimulatedApp")
            .field("initial", &self.spec.initial)
            .field("states", &self.spec.states.len())
            .field("transitions", &self.spec.transitions.len())
            .finish()
    }
}

impl SimulatedApp {
    pub fn new(spec: SimAppSpec) -> Result<Self, SimError> {
        let mut states = HashMap::new();
        for (name, state) in &spec.states {
            let bad = |reason: String| SimError::BadState {
                state: name.clone(),
                reason,
            };
            let tree = match (&state.tree, &state.hierarchy_xml) {
                (Some(tree), None) => tree.clone(),
                (None, Some(xml)) => parse_dump(xml).map_err(|e| bad(e.to_string()))?,
                _ => return Err(bad("give exactly one of `tree` or `hierarchy_xml`".into())),
            };
            tree.validate().map_err(|e| bad(e.to_string()))?;
            let bounds = tree.preorder().map(|n| n.bounds).collect();
            states.insert(name.clone(), State { tree, bounds });
        }
        if !states.contains_key(&spec.initial) {
            return Err(SimError::UnknownState(spec.initial.clone()));
        }
        if let Some(missing) = spec.crash_states.iter().find(|s| !states.contains_key(*s)) {
            return Err(SimError::UnknownState(missing.clone()));
        }

        let mut transitions = HashMap::new();
        for (index, t) in spec.transitions.iter().enumerate() {
            let bad = |reason: String| SimError::BadTransition { index, reason };
            let from = states
                .get(&t.from)
                .ok_or_else(|| bad(format!("unknown source state {:?}", t.from)))?;
            if !states.contains_key(&t.to) {
                return Err(bad(format!("unknown target state {:?}", t.to)));
            }
            match (t.action.needs_component(), t.component) {
                (true, None) => return Err(bad(format!("{:?} needs a component", t.action))),
                (false, Some(_)) => return Err(bad(format!("{:?} takes no component", t.action))),
                (true, Some(id)) if id >= from.bounds.len() => {
                    return Err(bad(format!(
                        "component {id} is not in state {:?} ({} nodes)",
                        t.from,
                        from.bounds.len()
                    )))
                }
                _ => {}
            }
            if transitions
                .insert((t.from.clone(), t.component, t.action), t.to.clone())
                .is_some()
            {
                return Err(bad("duplicate (from, component, action)".into()));
            }
        }
        Ok(SimulatedApp {
            spec,
            states,
            transitions,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let spec: SimAppSpec = serde_json::from_str(text).map_err(|e| SimError::Syntax(e.to_string()))?;
        Self::new(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> &SimAppSpec {
        &self.spec
    }

    pub fn initial(&self) -> &str {
        &self.spec.initial
    }

    pub fn screen(&self) -> (i32, i32) {
        self.spec.screen
    }

    pub fn is_crash(&self, state: &str) -> bool {
        self.spec.crash_states.contains(state)
    }

    pub fn tree(&self, state: &str) -> Option<&ViewNode> {
        self.states.get(state).map(|s| &s.tree)
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.spec.states.keys().map(String::as_str)
    }

    /// Target of an exact transition key.
    pub fn target(&self, from: &str, component: Option<usize>, action: SimAction) -> Option<&str> {
        self.transitions
            .get(&(from.to_string(), component, action))
            .map(String::as_str)
    }

    /// All outgoing transitions of a state.
    pub fn outgoing<'a>(&'a self, from: &'a str) -> impl Iterator<Item = &'a TransitionSpec> + 'a {
        self.spec.transitions.iter().filter(move |t| t.from == from)
    }

    /// Preorder ids under a point, topmost (deepest, latest drawn) first.
    fn hits(&self, state: &str, x: i32, y: i32) -> Vec<usize> {
        self.states
            .get(state)
            .map(|s| {
                (0..s.bounds.len())
                    .rev()
                    .filter(|&id| s.bounds[id].contains(x, y))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// A running session of a [`SimulatedApp`].
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    app: Arc<SimulatedApp>,
    current: String,
    focused: Option<usize>,
    events: Vec<DeviceEvent>,
    restarts: usize,
}

impl SimulatedDevice {
    pub fn new(app: Arc<SimulatedApp>) -> Self {
        let current = app.initial().to_string();
        SimulatedDevice {
            app,
            current,
            focused: None,
            events: Vec::new(),
            restarts: 0,
        }
    }

    pub fn app(&self) -> &SimulatedApp {
        &self.app
    }

    pub fn current_state(&self) -> &str {
        &self.current
    }

    /// Every event injected so far, restarts included.
    pub fn events(&self) -> &[DeviceEvent] {
        &self.events
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    fn go(&mut self, to: &str) {
        if to != self.current {
            self.focused = None;
        }
        self.current = to.to_string();
    }

    fn point_event(&mut self, x: i32, y: i32, action: SimAction) {
        let hits = self.app.hits(&self.current, x, y);
        if action == SimAction::Tap {
            self.focused = hits
                .iter()
                .copied()
                .find(|&id| self.app.target(&self.current, Some(id), SimAction::Input).is_some())
                .or_else(|| hits.first().copied());
        }
        let target = hits
            .iter()
            .find_map(|&id| self.app.target(&self.current, Some(id), action))
            .map(str::to_string);
        if let Some(to) = target {
            self.go(&to);
        }
    }
}

fn swipe_direction((x1, y1): (i32, i32), (x2, y2): (i32, i32)) -> Option<Direction> {
    let (dx, dy) = (x2 - x1, y2 - y1);
    if dx == 0 && dy == 0 {
        return None;
    }
    Some(if dy.abs() >= dx.abs() {
        if dy < 0 {
            Direction::Up
        } else {
            Direction::Down
        }
    } else if dx < 0 {
        Direction::Left
    } else {
        Direction::Right
    })
}

impl Device for SimulatedDevice {
    fn dump_hierarchy(&mut self) -> Result<ViewNode, DeviceError> {
        self.app
            .tree(&self.current)
            .cloned()
            .ok_or_else(|| SimError::UnknownState(self.current.clone()).into())
    }

    fn inject(&mut self, event: &DeviceEvent) -> Result<(), DeviceError> {
        event.check_on_screen(self.app.screen())?;
        self.events.push(event.clone());
        match event {
            DeviceEvent::Tap { x, y } => self.point_event(*x, *y, SimAction::Tap),
            DeviceEvent::DoubleTap { x, y } => self.point_event(*x, *y, SimAction::DoubleTap),
            DeviceEvent::LongTap { x, y } => self.point_event(*x, *y, SimAction::LongTap),
            DeviceEvent::Text(_) => {
                let target = self
                    .focused
                    .and_then(|id| self.app.target(&self.current, Some(id), SimAction::Input))
                    .map(str::to_string);
                if let Some(to) = target {
                    self.go(&to);
                }
            }
            DeviceEvent::Swipe { from, to } => {
                let target = swipe_direction(*from, *to)
                    .and_then(|d| self.app.target(&self.current, None, SimAction::scroll(d)))
                    .map(str::to_string);
                if let Some(to) = target {
                    self.go(&to);
                }
            }
            DeviceEvent::Back => {
                if let Some(to) = self
                    .app
                    .target(&self.current, None, SimAction::Back)
                    .map(str::to_string)
                {
                    self.go(&to);
                }
            }
        }
        Ok(())
    }

    fn crashed(&mut self) -> Result<bool, DeviceError> {
        Ok(self.app.is_crash(&self.current))
    }

    fn restart(&mut self) -> Result<(), DeviceError> {
        self.current = self.app.initial().to_string();
        self.focused = None;
        self.restarts += 1;
        Ok(())
    }

    fn screen_size(&self) -> (i32, i32) {
        self.app.screen()
    }
}
