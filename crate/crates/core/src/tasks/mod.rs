//! Seeded task generators, their interaction tables and success predicates.
//!
//! Every task page uses the `body > div#wrap > div#area` scaffold; oracle
//! selectors are resolved inside `div#area` so markup injected around the
//! page never captures them.

mod click;
mod email;
mod forms;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::dom::{assign_default_refs, DomNode, DomTree, Ref};
use crate::rng::{episode_rng, SplitMix64};

pub use click::{ClickButton, ClickCheckboxes, ClickDialog, ClickLink, ClickOption, ClickTest};
pub use email::{Email, EmailInboxForwardNl};
pub use forms::{EnterPassword, EnterText, LoginUser};

/// Names of the builtin tasks, in registration order.
pub const BUILTIN_TASKS: [&str; 10] = [
    "click-test",
    "click-button",
    "click-link",
    "click-dialog",
    "click-checkboxes",
    "click-option",
    "enter-text",
    "enter-password",
    "login-user",
    "email-inbox-forward-nl",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("a composite needs 2 or 3 parts, got {0}")]
    Arity(usize),
}

/// Hidden ground truth behind an instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Goal {
    ClickTest,
    ClickButton { label: String },
    ClickLink { label: String },
    ClickDialog,
    ClickCheckboxes { targets: Vec<String> },
    ClickOption { label: String },
    EnterText { text: String },
    EnterPassword { password: String },
    LoginUser { username: String, password: String },
    EmailForward { sender: String, receiver: String, inbox: Vec<Email> },
    Composite { parts: Vec<CompositePart> },
}

/// One stage of a composite goal; `seed` regenerates the stage's page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositePart {
    pub task: String,
    pub seed: u64,
    pub goal: Goal,
}

/// Output of a generator: initial page (refs assigned), instruction, goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub tree: DomTree,
    pub instruction: String,
    pub goal: Goal,
}

/// The semantic page state a task reads and edits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskState {
    pub tree: DomTree,
    /// Screen within a multi-screen task.
    pub screen: usize,
    /// Active stage of a composite task.
    pub part: usize,
    /// Per-task bookkeeping (e.g. which email is open).
    pub notes: BTreeMap<String, String>,
    /// Names of composite stages completed so far, in order.
    pub milestones: Vec<String>,
}

impl TaskState {
    pub fn new(tree: DomTree) -> Self {
        Self {
            tree,
            screen: 0,
            part: 0,
            notes: BTreeMap::new(),
            milestones: Vec::new(),
        }
    }

    /// Replaces the page (a screen transition) and renumbers it.
    pub fn show(&mut self, tree: DomTree, screen: usize) {
        self.tree = assign_default_refs(&tree);
        self.screen = screen;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Click,
    Type(String),
}

/// An action after ref resolution: what happened to which semantic node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    /// Snapshot of the target in the semantic page (after generic effects).
    pub node: DomNode,
}

impl Event {
    pub fn is_click_on(&self, id: &str) -> bool {
        self.kind == EventKind::Click && self.node.id() == Some(id)
    }
}

/// A task's answer to a click on one of its interactive elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reaction {
    /// The page stays live.
    Continue,
    /// A terminal element was clicked; the episode ends either way.
    Terminal,
    /// No interaction entry: the click is an invalid action.
    Unhandled,
}

/// Semantic address of an element, resolved against the current page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Id(String),
    /// Element with this tag whose own text equals `text`.
    Text { tag: String, text: String },
    /// Checkbox inside the `<label>` whose text reads `label`.
    Checkbox { label: String },
    /// Element with this tag that has a descendant of `class` reading `text`.
    ChildText { tag: String, class: String, text: String },
}

impl Selector {
    pub fn id(id: &str) -> Self {
        Selector::Id(id.to_string())
    }

    pub fn text(tag: &str, text: &str) -> Self {
        Selector::Text { tag: tag.to_string(), text: text.to_string() }
    }

    fn matches(&self, node: &DomNode) -> bool {
        match self {
            Selector::Id(id) => node.id() == Some(id.as_str()),
            Selector::Text { tag, text } => node.tag() == tag && node.text() == Some(text.as_str()),
            Selector::Checkbox { label } => {
                node.tag() == "label"
                    && node
                        .children()
                        .iter()
                        .any(|c| c.tag() == "t" && c.text() == Some(label.as_str()))
                    && node.children().iter().any(is_checkbox)
            }
            Selector::ChildText { tag, class, text } => {
                node.tag() == tag && {
                    let mut hit = false;
                    node.walk(&mut |n| hit |= n.has_class(class) && n.text() == Some(text.as_str()));
                    hit
                }
            }
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Id(id) => write!(f, "#{id}"),
            Selector::Text { tag, text } => write!(f, "{tag}[text={text:?}]"),
            Selector::Checkbox { label } => write!(f, "checkbox[label={label:?}]"),
            Selector::ChildText { tag, class, text } => write!(f, "{tag}:has(.{class}[text={text:?}])"),
        }
    }
}

pub(crate) fn is_checkbox(node: &DomNode) -> bool {
    node.tag() == "input" && node.attr("type") == Some("checkbox")
}

/// Ref of the first element inside `div#area` matching `selector`. Pages
/// without an area are searched whole.
pub fn locate(tree: &DomTree, selector: &Selector) -> Option<Ref> {
    let area = tree
        .find(|n| n.tag() == "div" && n.id() == Some("area"))
        .unwrap_or(tree.root());
    let mut found = None;
    area.walk(&mut |n| {
        if found.is_none() && selector.matches(n) {
            found = Some(match selector {
                Selector::Checkbox { .. } => n.children().iter().find(|c| is_checkbox(c)).and_then(DomNode::node_ref),
                _ => n.node_ref(),
            });
        }
    });
    found.flatten()
}

/// One step of an oracle plan: click the target, or type `text` into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedAction {
    pub target: Selector,
    pub text: Option<String>,
}

impl PlannedAction {
    pub fn click(target: Selector) -> Self {
        Self { target, text: None }
    }

    pub fn type_into(target: Selector, text: &str) -> Self {
        Self { target, text: Some(text.to_string()) }
    }
}

/// A task: generator, interaction table, success predicate and oracle.
pub trait Task: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Builds the initial page and goal. Consumes the stream in a fixed
    /// order: layout first, then goal.
    fn generate(&self, rng: &mut SplitMix64) -> Instance;

    /// Instruction text; a pure function of the goal.
    fn instruction(&self, goal: &Goal) -> String;

    /// Handles a click on a `button`, `a`, `option` or `li` of the page.
    fn react(&self, state: &mut TaskState, goal: &Goal, event: &Event) -> Reaction;

    /// `r(s, g, a)`. Reads semantic state only, never ref numerals.
    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool;

    /// Minimal action sequence solving `goal`.
    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction>;

    fn oracle_steps(&self, goal: &Goal) -> usize {
        self.oracle_plan(goal).len()
    }

    /// Step budget: twice the oracle length plus two.
    fn max_steps(&self, goal: &Goal) -> usize {
        2 * self.oracle_steps(goal) + 2
    }
}

pub type TaskSpec = Arc<dyn Task>;

/// Read-only name → task table.
#[derive(Debug, Clone, Default)]
pub struct TaskRegistry {
    tasks: Vec<TaskSpec>,
}

impl TaskRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, task: TaskSpec) {
        self.tasks.retain(|t| t.name() != task.name());
        self.tasks.push(task);
    }

    pub fn get(&self, name: &str) -> Result<TaskSpec, TaskError> {
        self.tasks
            .iter()
            .find(|t| t.name() == name)
            .cloned()
            .ok_or_else(|| TaskError::UnknownTask(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(|t| t.name())
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }
}

pub fn register_builtin_tasks() -> TaskRegistry {
    let mut registry = TaskRegistry::new();
    let tasks: [TaskSpec; 10] = [
        Arc::new(ClickTest),
        Arc::new(ClickButton),
        Arc::new(ClickLink),
        Arc::new(ClickDialog),
        Arc::new(ClickCheckboxes),
        Arc::new(ClickOption),
        Arc::new(EnterText),
        Arc::new(EnterPassword),
        Arc::new(LoginUser),
        Arc::new(EmailInboxForwardNl),
    ];
    for task in tasks {
        registry.register(task);
    }
    registry
}

/// Generates episode `episode_index` of `name` under `base_seed`.
pub fn instantiate(
    registry: &TaskRegistry,
    name: &str,
    base_seed: u64,
    episode_index: u64,
) -> Result<Instance, TaskError> {
    let task = registry.get(name)?;
    Ok(task.generate(&mut episode_rng(base_seed, name, episode_index)))
}

/// `r(s, g, a)` as 0/1.
pub fn check_success(task: &dyn Task, state: &TaskState, goal: &Goal, last: &Event) -> u8 {
    u8::from(task.success(state, goal, last))
}

// ---------------------------------------------------------------------------
// Shared page building.

pub(crate) fn el(tag: &str) -> DomNode {
    DomNode::element(tag)
}

/// `body > div#wrap > div#area > children`, refs assigned.
pub(crate) fn page(children: impl IntoIterator<Item = DomNode>) -> DomTree {
    let area = el("div").with_attr("id", "area").with_children(children);
    let root = el("body").with_child(el("div").with_attr("id", "wrap").with_child(area));
    assign_default_refs(&DomTree::new(root).expect("body root"))
}

pub(crate) fn submit_button(label: &str) -> DomNode {
    el("button")
        .with_attr("id", "subbtn")
        .with_attr("class", "secondary-action")
        .with_text(label)
}

/// `n` distinct tokens of length 2..=8.
pub(crate) fn distinct_tokens(rng: &mut SplitMix64, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let t = rng.token(2, 8);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

pub(crate) fn value_of<'a>(tree: &'a DomTree, id: &str) -> Option<&'a str> {
    tree.find_by_id(id).and_then(|n| n.attr("value"))
}
