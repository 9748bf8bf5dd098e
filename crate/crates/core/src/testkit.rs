//! Fixtures shared by tests and benches: hand-built scenario apps with their
//! golden steps, scripted oracle transcripts, an exhaustive crash-path
//! search, and seeded random generators.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::device::{SimAction, SimAppSpec, SimulatedApp, SimulatedDevice, StateSpec, TransitionSpec};
use crate::entity::{ActionType, Direction, Step};
use crate::gui::{Bounds, ViewNode};
use crate::llm::Transcript;

const W: i32 = 1080;
const H: i32 = 1920;
const TOOLBAR: i32 = 160;
const ROW: i32 = 200;

/// One screen of a scenario: a title and list rows `(class, text)`.
struct Screen {
    title: &'static str,
    rows: &'static [(&'static str, &'static str)],
    /// Row acted on by the golden step.
    target: usize,
}

/// A linear app whose golden steps end in a crash.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub app: Arc<SimulatedApp>,
    pub golden: Vec<Step>,
    /// Preorder id of each golden step's target on its screen.
    pub golden_ids: Vec<usize>,
    /// Id on the first screen that leads to a dead-end screen.
    pub decoy_id: usize,
}

fn row_id(row: usize) -> usize {
    // root, toolbar, up button, title, list, rows...
    5 + row
}

fn screen_tree(screen: &Screen) -> ViewNode {
    let rows = screen
        .rows
        .iter()
        .enumerate()
        .map(|(i, (class, text))| {
            let top = TOOLBAR + i as i32 * ROW;
            ViewNode::new(format!("android.widget.{class}"), Bounds::new(0, top, W, top + ROW))
                .with_text(*text)
                .with_resource_id(format!("org.example:id/row_{i}"))
        })
        .collect();
    ViewNode::new("android.widget.FrameLayout", Bounds::new(0, 0, W, H))
        .with_resource_id("android:id/content")
        .with_children(vec![
            ViewNode::new("android.widget.LinearLayout", Bounds::new(0, 0, W, TOOLBAR)).with_children(vec![
                ViewNode::new("android.widget.ImageButton", Bounds::new(0, 0, TOOLBAR, TOOLBAR))
                    .with_content_desc("Navigate up"),
                ViewNode::new("android.widget.TextView", Bounds::new(TOOLBAR, 0, W, TOOLBAR)).with_text(screen.title),
            ]),
            ViewNode::new("android.widget.LinearLayout", Bounds::new(0, TOOLBAR, W, H))
                .with_resource_id("org.example:id/list")
                .with_children(rows),
        ])
}

fn message_tree(text: &str) -> ViewNode {
    ViewNode::new("android.widget.FrameLayout", Bounds::new(0, 0, W, H)).with_children(vec![
        ViewNode::new("android.widget.TextView", Bounds::new(0, 800, W, 1000)).with_text(text),
        ViewNode::new("android.widget.Button", Bounds::new(0, 1000, W, 1200)).with_text("OK"),
    ])
}

fn build(name: &'static str, screens: &[Screen], last: ActionType, decoy_row: usize) -> Scenario {
    let mut states = std::collections::BTreeMap::new();
    let mut transitions = Vec::new();
    let mut golden = Vec::new();
    let mut golden_ids = Vec::new();
    for (i, screen) in screens.iter().enumerate() {
        let from = format!("s{i}");
        states.insert(
            from.clone(),
            StateSpec {
                tree: Some(screen_tree(screen)),
                hierarchy_xml: None,
            },
        );
        let is_last = i + 1 == screens.len();
        let action = if is_last { last } else { ActionType::Tap };
        let to = if is_last {
            "crash".to_string()
        } else {
            format!("s{}", i + 1)
        };
        let id = row_id(screen.target);
        let label = screen.rows[screen.target].1;
        let (sim, step) = match action {
            ActionType::Tap => (SimAction::Tap, Step::tap(i + 1, label)),
            ActionType::DoubleTap => (SimAction::DoubleTap, Step::double_tap(i + 1, label)),
            ActionType::LongTap => (SimAction::LongTap, Step::long_tap(i + 1, label)),
            ActionType::Input => (SimAction::Input, Step::input(i + 1, label, "test")),
            ActionType::Scroll => unreachable!("scenarios end on an element action"),
        };
        transitions.push(TransitionSpec {
            from,
            component: Some(id),
            action: sim,
            to,
        });
        golden.push(step);
        golden_ids.push(id);
    }
    assert_ne!(decoy_row, screens[0].target, "decoy must differ from the golden target");
    let decoy_id = row_id(decoy_row);
    states.insert(
        "decoy".into(),
        StateSpec {
            tree: Some(message_tree("Nothing here yet")),
            hierarchy_xml: None,
        },
    );
    transitions.push(TransitionSpec {
        from: "s0".into(),
        component: Some(decoy_id),
        action: SimAction::Tap,
        to: "decoy".into(),
    });
    states.insert(
        "crash".into(),
        StateSpec {
            tree: Some(message_tree(&format!("Unfortunately, {name} has stopped."))),
            hierarchy_xml: None,
        },
    );
    let spec = SimAppSpec {
        screen: (W, H),
        initial: "s0".into(),
        crash_states: BTreeSet::from(["crash".to_string()]),
        states,
        transitions,
    };
    Scenario {
        name,
        app: Arc::new(SimulatedApp::new(spec).expect("scenario spec is valid")),
        golden,
        golden_ids,
        decoy_id,
    }
}

/// The scenario suite, ten apps of three to five steps.
pub fn scenarios() -> Vec<Scenario> {
    use ActionType::*;
    vec![
        build(
            "Notes",
            &[
                Screen {
                    title: "All notes",
                    rows: &[
                        ("TextView", "Groceries"),
                        ("Button", "New note"),
                        ("TextView", "Trip plan"),
                    ],
                    target: 1,
                },
                Screen {
                    title: "New note",
                    rows: &[("EditText", "Title"), ("Button", "Attach"), ("Button", "Save")],
                    target: 1,
                },
                Screen {
                    title: "Attach",
                    rows: &[
                        ("Button", "Camera"),
                        ("Button", "Gallery"),
                        ("Button", "Audio recording"),
                    ],
                    target: 2,
                },
            ],
            Tap,
            2,
        ),
        build(
            "Settings",
            &[
                Screen {
                    title: "Settings",
                    rows: &[
                        ("TextView", "Network"),
                        ("TextView", "Display"),
                        ("TextView", "Storage"),
                    ],
                    target: 1,
                },
                Screen {
                    title: "Display",
                    rows: &[
                        ("Switch", "Dark mode"),
                        ("TextView", "Font size"),
                        ("TextView", "Screen timeout"),
                    ],
                    target: 1,
                },
                Screen {
                    title: "Font size",
                    rows: &[
                        ("RadioButton", "Small"),
                        ("RadioButton", "Default"),
                        ("RadioButton", "Huge"),
                    ],
                    target: 2,
                },
            ],
            Tap,
            0,
        ),
        build(
            "Shop",
            &[
                Screen {
                    title: "Catalog",
                    rows: &[("Button", "Sale"), ("TextView", "Blue mug"), ("Button", "Cart")],
                    target: 1,
                },
                Screen {
                    title: "Blue mug",
                    rows: &[("Button", "Add to cart"), ("TextView", "Reviews"), ("Button", "Share")],
                    target: 0,
                },
                Screen {
                    title: "Added",
                    rows: &[("Button", "Keep shopping"), ("Button", "Checkout")],
                    target: 1,
                },
                Screen {
                    title: "Checkout",
                    rows: &[("EditText", "Coupon code"), ("Button", "Pay")],
                    target: 0,
                },
            ],
            Input,
            0,
        ),
        build(
            "Music",
            &[
                Screen {
                    title: "Library",
                    rows: &[
                        ("TextView", "Playlists"),
                        ("TextView", "Albums"),
                        ("TextView", "Artists"),
                    ],
                    target: 0,
                },
                Screen {
                    title: "Playlists",
                    rows: &[
                        ("TextView", "Road trip"),
                        ("TextView", "Focus"),
                        ("Button", "New playlist"),
                    ],
                    target: 0,
                },
                Screen {
                    title: "Road trip",
                    rows: &[
                        ("TextView", "Track 1"),
                        ("TextView", "Track 2"),
                        ("TextView", "Track 3"),
                    ],
                    target: 2,
                },
            ],
            LongTap,
            2,
        ),
        build(
            "Gallery",
            &[
                Screen {
                    title: "Photos",
                    rows: &[
                        ("ImageButton", "Albums"),
                        ("TextView", "Recent"),
                        ("TextView", "Favorites"),
                    ],
                    target: 1,
                },
                Screen {
                    title: "Recent",
                    rows: &[
                        ("TextView", "IMG_001"),
                        ("TextView", "IMG_002"),
                        ("TextView", "IMG_003"),
                    ],
                    target: 0,
                },
                Screen {
                    title: "IMG_001",
                    rows: &[("Button", "Edit"), ("Button", "Share"), ("Button", "Delete")],
                    target: 0,
                },
                Screen {
                    title: "Edit",
                    rows: &[("Button", "Crop"), ("Button", "Rotate"), ("Button", "Filters")],
                    target: 1,
                },
            ],
            DoubleTap,
            2,
        ),
        build(
            "Login",
            &[
                Screen {
                    title: "Welcome",
                    rows: &[("Button", "Sign in"), ("Button", "Create account")],
                    target: 0,
                },
                Screen {
                    title: "Sign in",
                    rows: &[
                        ("EditText", "Email"),
                        ("EditText", "Password"),
                        ("Button", "Forgot password"),
                    ],
                    target: 2,
                },
                Screen {
                    title: "Reset password",
                    rows: &[("EditText", "Recovery email"), ("Button", "Send link")],
                    target: 0,
                },
            ],
            Input,
            1,
        ),
        build(
            "Calendar",
            &[
                Screen {
                    title: "October",
                    rows: &[
                        ("TextView", "Today"),
                        ("Button", "Add event"),
                        ("TextView", "Week view"),
                    ],
                    target: 1,
                },
                Screen {
                    title: "New event",
                    rows: &[
                        ("EditText", "Event name"),
                        ("CheckBox", "All day"),
                        ("Button", "Repeat"),
                    ],
                    target: 2,
                },
                Screen {
                    title: "Repeat",
                    rows: &[
                        ("RadioButton", "Never"),
                        ("RadioButton", "Weekly"),
                        ("RadioButton", "Custom"),
                    ],
                    target: 2,
                },
                Screen {
                    title: "Custom repeat",
                    rows: &[("TextView", "Every 2 weeks"), ("Button", "Done")],
                    target: 1,
                },
            ],
            Tap,
            0,
        ),
        build(
            "Mail",
            &[
                Screen {
                    title: "Inbox",
                    rows: &[
                        ("TextView", "Meeting notes"),
                        ("TextView", "Invoice"),
                        ("Button", "Compose"),
                    ],
                    target: 0,
                },
                Screen {
                    title: "Meeting notes",
                    rows: &[("Button", "Reply"), ("Button", "Forward"), ("Button", "Archive")],
                    target: 1,
                },
                Screen {
                    title: "Forward",
                    rows: &[("EditText", "To"), ("Button", "Attach file"), ("Button", "Send")],
                    target: 2,
                },
            ],
            LongTap,
            2,
        ),
        build(
            "Maps",
            &[
                Screen {
                    title: "Map",
                    rows: &[
                        ("EditText", "Search here"),
                        ("Button", "Directions"),
                        ("Button", "Saved"),
                    ],
                    target: 2,
                },
                Screen {
                    title: "Saved",
                    rows: &[("TextView", "Home"), ("TextView", "Work"), ("TextView", "Gym")],
                    target: 1,
                },
                Screen {
                    title: "Work",
                    rows: &[
                        ("Button", "Start"),
                        ("Button", "Share location"),
                        ("Button", "Offline map"),
                    ],
                    target: 2,
                },
            ],
            DoubleTap,
            1,
        ),
        build(
            "Recipes",
            &[
                Screen {
                    title: "Recipes",
                    rows: &[("TextView", "Pancakes"), ("TextView", "Soup"), ("Button", "Filter")],
                    target: 1,
                },
                Screen {
                    title: "Soup",
                    rows: &[("Button", "Ingredients"), ("Button", "Steps"), ("Button", "Timer")],
                    target: 2,
                },
                Screen {
                    title: "Timer",
                    rows: &[("EditText", "Minutes"), ("Button", "Start timer")],
                    target: 1,
                },
            ],
            Tap,
            2,
        ),
    ]
}

impl Scenario {
    pub fn device(&self) -> SimulatedDevice {
        SimulatedDevice::new(Arc::clone(&self.app))
    }

    /// Strict transcript answering each step with its golden id, and each
    /// omitted step (positions into `golden`) with a `[MISSING]` bridge.
    pub fn oracle_transcript(&self, omitted: &[usize]) -> Transcript {
        let mut responses = Vec::new();
        for (pos, &id) in self.golden_ids.iter().enumerate() {
            if omitted.contains(&pos) {
                responses.push(format!("The step is not on this screen. [MISSING] [id={id}]"));
            } else {
                responses.push(format!("[id={id}]"));
            }
        }
        Transcript::strict(responses)
    }

    /// Like the complete oracle but first answers step 1 with the decoy,
    /// then finds nothing for step 2 on the dead-end screen.
    pub fn wrong_id_transcript(&self) -> Transcript {
        let mut responses = vec![
            format!("[id={}]", self.decoy_id),
            "I cannot find any relevant component.".to_string(),
        ];
        responses.extend(self.golden_ids.iter().map(|id| format!("[id={id}]")));
        Transcript::strict(responses)
    }
}

/// One transition taken: source state, component, action.
pub type Move = (String, Option<usize>, SimAction);

/// Every cycle-free path from the initial state to a crash state, found by
/// exhaustive search over the transition table.
pub fn crash_paths(app: &SimulatedApp) -> Vec<Vec<Move>> {
    let mut found = Vec::new();
    let mut queue: VecDeque<(String, Vec<Move>, BTreeSet<String>)> = VecDeque::new();
    queue.push_back((
        app.initial().to_string(),
        Vec::new(),
        BTreeSet::from([app.initial().to_string()]),
    ));
    while let Some((state, path, seen)) = queue.pop_front() {
        if app.is_crash(&state) {
            found.push(path);
            continue;
        }
        for t in app.outgoing(&state) {
            if seen.contains(&t.to) {
                continue;
            }
            let mut next_path = path.clone();
            next_path.push((state.clone(), t.component, t.action));
            let mut next_seen = seen.clone();
            next_seen.insert(t.to.clone());
            queue.push_back((t.to.clone(), next_path, next_seen));
        }
    }
    found
}

const CLASSES: &[&str] = &[
    "android.widget.FrameLayout",
    "android.widget.LinearLayout",
    "android.widget.TextView",
    "android.widget.Button",
    "android.widget.ImageButton",
    "android.widget.ImageView",
    "android.widget.EditText",
    "android.widget.CheckBox",
    "android.widget.Switch",
    "android.widget.RadioButton",
    "android.view.View",
    "androidx.recyclerview.widget.RecyclerView",
];

const TEXTS: &[&str] = &[
    "Save",
    "Sign in",
    "a < b",
    "Tom & Jerry",
    "say \"hi\"",
    "  spaced   out  ",
    "日本語テキスト",
    "line\nbreak",
    "tab\there",
    "</p>",
    "x=\"1\"",
    "",
];

fn pick<'a>(rng: &mut impl Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

fn maybe(rng: &mut impl Rng, pool: &[&str]) -> Option<String> {
    // dumps write absent attributes as empty strings, so never produce Some("")
    rng.random_bool(0.5)
        .then(|| pick(rng, pool).to_string())
        .filter(|s| !s.is_empty())
}

fn sub_bounds(rng: &mut impl Rng, parent: Bounds) -> Bounds {
    let mut span = |lo: i32, hi: i32| {
        let a = rng.random_range(lo..=hi);
        let b = rng.random_range(lo..=hi);
        (a.min(b), a.max(b))
    };
    let (left, right) = span(parent.left, parent.right);
    let (top, bottom) = span(parent.top, parent.bottom);
    Bounds::new(left, top, right, bottom)
}

/// A random tree of 1 to `max_nodes` nodes with valid nested bounds.
pub fn random_tree(seed: u64, max_nodes: usize) -> ViewNode {
    let mut rng = StdRng::seed_from_u64(seed);
    let count = rng.random_range(1..=max_nodes.max(1));
    let mut nodes: Vec<ViewNode> = Vec::with_capacity(count);
    let mut parents = Vec::with_capacity(count);
    for i in 0..count {
        let (parent, bounds) = if i == 0 {
            (usize::MAX, Bounds::new(0, 0, W, H))
        } else {
            // bias toward recent nodes for some depth
            let lo = i.saturating_sub(8);
            let p = if rng.random_bool(0.7) {
                rng.random_range(lo..i)
            } else {
                rng.random_range(0..i)
            };
            let b = sub_bounds(&mut rng, nodes[p].bounds);
            (p, b)
        };
        let mut node = ViewNode::new(pick(&mut rng, CLASSES), bounds);
        node.text = maybe(&mut rng, TEXTS);
        node.content_desc = maybe(&mut rng, TEXTS);
        node.resource_id = rng.random_bool(0.4).then(|| {
            format!(
                "org.example:id/{}",
                pick(&mut rng, &["title", "ok_btn", "list", "q\"uote", "a&b"])
            )
        });
        nodes.push(node);
        parents.push(parent);
    }
    // children have larger indices than their parents, so fold from the back
    for i in (1..count).rev() {
        let child = std::mem::take(&mut nodes[i]);
        nodes[parents[i]].children.push(child);
    }
    reverse_children(&mut nodes[0]);
    nodes.swap_remove(0)
}

/// Children were pushed in reverse creation order; flip every level back.
fn reverse_children(root: &mut ViewNode) {
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        node.children.reverse();
        stack.extend(node.children.iter_mut());
    }
}

const STEP_TEXT_CHARS: &[char] = &[
    'a', 'b', 'z', 'A', 'Q', '0', '7', ' ', ' ', '"', '\'', '[', ']', '.', ',', '-', '_', '/', '\u{201c}', '\u{201d}',
    'é', '日', '(', ')', '&', '<',
];

/// A random valid step.
pub fn random_step(rng: &mut impl Rng, index: usize) -> Step {
    loop {
        let action = ActionType::ALL[rng.random_range(0..ActionType::ALL.len())];
        let mut text = || -> String {
            let len = rng.random_range(1..12);
            (0..len)
                .map(|_| STEP_TEXT_CHARS[rng.random_range(0..STEP_TEXT_CHARS.len())])
                .collect()
        };
        let step = match action {
            ActionType::Tap => Step::tap(index, text()),
            ActionType::DoubleTap => Step::double_tap(index, text()),
            ActionType::LongTap => Step::long_tap(index, text()),
            ActionType::Input => {
                let component = text();
                Step::input(index, component, text())
            }
            ActionType::Scroll => Step::scroll(index, Direction::ALL[rng.random_range(0..4)]),
        };
        if step.validate().is_ok() {
            return step;
        }
    }
}

/// A random valid step list of 1 to `max_len` steps.
pub fn random_steps(rng: &mut impl Rng, max_len: usize) -> Vec<Step> {
    let len = rng.random_range(1..=max_len.max(1));
    (1..=len).map(|i| random_step(rng, i)).collect()
}

const GARBAGE_PIECES: &[&str] = &[
    "1.",
    "2)",
    "10.",
    " ",
    "\n",
    "[",
    "]",
    "\"",
    "'",
    "“",
    "”",
    "``",
    "''",
    "Tap",
    "tap",
    "Scroll",
    "Input",
    "Double-tap",
    "Long tap",
    "Down",
    "sideways",
    "x",
    "[]",
    "[\"\"]",
    "1. [Tap]",
    "[Input] [\"a\"]",
    "#",
    "*",
];

/// Random text built from fragments of the step grammar.
pub fn garbage_text(rng: &mut impl Rng) -> String {
    let pieces = rng.random_range(0..30);
    (0..pieces).map(|_| pick(rng, GARBAGE_PIECES)).collect()
}
