//! Test-time HTML perturbations and sequential task composition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::dom::{assign_default_refs, mutate, DomNode, DomTree, Edit, InsertPosition, Ref};
use crate::render::LayoutBox;
use crate::rng::SplitMix64;
use crate::tasks::{
    CompositePart, Event, Goal, Instance, PlannedAction, Reaction, Task, TaskError, TaskRegistry, TaskSpec,
    TaskState,
};

/// The compositional benchmark set.
pub const BENCHMARK_COMPOSITES: [&str; 6] = [
    "click-button_click-checkboxes",
    "click-button_click-dialog",
    "click-button_click-link",
    "click-link_click-button",
    "click-link_click-button_click-dialog",
    "click-link_click-dialog",
];

/// Label texts a distractor may never show (terminal controls of builtin tasks).
const RESERVED_LABELS: [&str; 10] = [
    "submit", "send", "login", "forward", "back", "ok", "x", "close", "click me!", "dialog",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationKind {
    Top,
    Bottom,
    Coordinates,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] = [Self::Top, Self::Bottom, Self::Coordinates];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Top => "top",
            Self::Bottom => "bottom",
            Self::Coordinates => "coordinates",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown perturbation {0:?} (expected top, bottom or coordinates)")]
pub struct UnknownPerturbation(pub String);

impl FromStr for PerturbationKind {
    type Err = UnknownPerturbation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(Self::Top),
            "bottom" => Ok(Self::Bottom),
            "coordinates" => Ok(Self::Coordinates),
            other => Err(UnknownPerturbation(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    /// Injected subtree for `Top`/`Bottom`; unused for `Coordinates`.
    pub distractor: Option<DomNode>,
    pub seed: u64,
}

impl Perturbation {
    /// A perturbation of `kind` using [`default_distractor`] where one is needed.
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        let distractor = (kind != PerturbationKind::Coordinates).then(|| default_distractor(seed));
        Self { kind, distractor, seed }
    }

    pub fn with_distractor(kind: PerturbationKind, distractor: DomNode) -> Self {
        Self { kind, distractor: Some(distractor), seed: 0 }
    }
}

fn reserved(label: &str) -> bool {
    RESERVED_LABELS.iter().any(|r| r.eq_ignore_ascii_case(label))
}

/// A `div#nav.nav-bar` holding 2–4 links or buttons with random labels.
pub fn default_distractor(seed: u64) -> DomNode {
    let mut rng = SplitMix64::new(seed);
    let n = rng.range_inclusive(2, 4);
    let mut nav = DomNode::element("div").with_attr("id", "nav").with_attr("class", "nav-bar");
    for _ in 0..n {
        let label = loop {
            let t = rng.token(2, 8);
            if !reserved(&t) {
                break t;
            }
        };
        let item = if rng.below(2) == 0 {
            DomNode::element("a").with_attr("href", "#")
        } else {
            DomNode::element("button")
        };
        nav = nav.with_child(item.with_text(label));
    }
    nav
}

/// Applies `p` to `tree`. `boxes` must be the pre-order layout of `tree`
/// itself; it is only read for `Coordinates`.
pub fn perturb(tree: &DomTree, p: &Perturbation, boxes: &[LayoutBox]) -> DomTree {
    match p.kind {
        PerturbationKind::Top | PerturbationKind::Bottom => {
            let Some(distractor) = &p.distractor else { return tree.clone() };
            let position = if p.kind == PerturbationKind::Top {
                InsertPosition::FirstChildOfBody
            } else {
                InsertPosition::LastChildOfBody
            };
            let edit = Edit::InsertSubtree { position, subtree: distractor.clone() };
            assign_default_refs(&mutate(tree, edit).expect("insertion has no target"))
        }
        PerturbationKind::Coordinates => {
            let mut root = tree.root().clone();
            let mut next = boxes.iter();
            root.walk_mut(&mut |node| {
                if let Some(b) = next.next() {
                    for (name, value) in [("left", b.left), ("right", b.right), ("top", b.top), ("bottom", b.bottom)] {
                        node.set_attr(name, value.to_string()).expect("not a ref");
                    }
                }
            });
            DomTree::new(root).expect("refs unchanged")
        }
    }
}

/// Maps every ref in the observed (perturbed) tree to the semantic ref it
/// stands for, or `None` for nodes of the injected distractor.
pub fn view_ref_map(semantic: &DomTree, observed: &DomTree, kind: Option<PerturbationKind>) -> BTreeMap<Ref, Option<Ref>> {
    let skip = match kind {
        Some(PerturbationKind::Top) if observed.root().children().len() > semantic.root().children().len() => Some(0),
        Some(PerturbationKind::Bottom) if observed.root().children().len() > semantic.root().children().len() => {
            Some(observed.root().children().len() - 1)
        }
        _ => None,
    };
    let mut map = BTreeMap::new();
    let mut semantic_refs = Vec::new();
    semantic.root().walk(&mut |n| semantic_refs.push(n.node_ref()));
    let mut semantic_refs = semantic_refs.into_iter();

    let mut pair = |n: &DomNode, map: &mut BTreeMap<Ref, Option<Ref>>| {
        let sem = semantic_refs.next().flatten();
        if let Some(r) = n.node_ref() {
            map.insert(r, sem);
        }
    };
    pair(observed.root(), &mut map);
    for (i, child) in observed.root().children().iter().enumerate() {
        if Some(i) == skip {
            child.walk(&mut |n| {
                if let Some(r) = n.node_ref() {
                    map.insert(r, None);
                }
            });
        } else {
            child.walk(&mut |n| pair(n, &mut map));
        }
    }
    map
}

/// Sequential stitch of 2 or 3 tasks, solved in name order.
#[derive(Debug, Clone)]
pub struct CompositeTask {
    name: String,
    parts: Vec<TaskSpec>,
}

impl CompositeTask {
    pub fn parts(&self) -> &[TaskSpec] {
        &self.parts
    }

    fn part_goals(goal: &Goal) -> &[CompositePart] {
        match goal {
            Goal::Composite { parts } => parts,
            _ => &[],
        }
    }
}

/// Builds the composite of `names`, in order.
pub fn compose(registry: &TaskRegistry, names: &[&str]) -> Result<CompositeTask, TaskError> {
    if !(2..=3).contains(&names.len()) {
        return Err(TaskError::Arity(names.len()));
    }
    let parts = names.iter().map(|n| registry.get(n)).collect::<Result<Vec<_>, _>>()?;
    Ok(CompositeTask { name: names.join("_"), parts })
}

/// [`compose`] from a joined name such as `click-link_click-dialog`.
pub fn compose_named(registry: &TaskRegistry, joined: &str) -> Result<CompositeTask, TaskError> {
    let names: Vec<&str> = joined.split('_').collect();
    compose(registry, &names)
}

impl Task for CompositeTask {
    fn name(&self) -> &str {
        &self.name
    }

    /// Each part draws its page from its own sub-seed, taken from `rng` in
    /// part order.
    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let mut first_tree = None;
        let mut parts = Vec::with_capacity(self.parts.len());
        for task in &self.parts {
            let seed = rng.next_u64();
            let inst = task.generate(&mut SplitMix64::new(seed));
            first_tree.get_or_insert(inst.tree);
            parts.push(CompositePart { task: task.name().to_string(), seed, goal: inst.goal });
        }
        let goal = Goal::Composite { parts };
        Instance { tree: first_tree.expect("at least two parts"), instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        self.parts
            .iter()
            .zip(Self::part_goals(goal))
            .map(|(task, part)| task.instruction(&part.goal))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn react(&self, state: &mut TaskState, goal: &Goal, event: &Event) -> Reaction {
        let goals = Self::part_goals(goal);
        let i = state.part;
        let (Some(task), Some(part)) = (self.parts.get(i), goals.get(i)) else { return Reaction::Unhandled };
        match task.react(state, &part.goal, event) {
            Reaction::Terminal if task.success(state, &part.goal, event) => {
                state.milestones.push(part.task.clone());
                match (self.parts.get(i + 1), goals.get(i + 1)) {
                    (Some(next), Some(next_part)) => {
                        let inst = next.generate(&mut SplitMix64::new(next_part.seed));
                        state.part = i + 1;
                        state.notes.clear();
                        state.show(inst.tree, 0);
                        Reaction::Continue
                    }
                    _ => Reaction::Terminal,
                }
            }
            other => other,
        }
    }

    fn success(&self, state: &TaskState, goal: &Goal, _last: &Event) -> bool {
        let goals = Self::part_goals(goal);
        !goals.is_empty()
            && state.milestones.len() == goals.len()
            && state.milestones.iter().zip(goals).all(|(m, g)| *m == g.task)
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        self.parts
            .iter()
            .zip(Self::part_goals(goal))
            .flat_map(|(task, part)| task.oracle_plan(&part.goal))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{default_non_referable, parse_html, serialize};
    use crate::render::layout;
    use crate::tasks::register_builtin_tasks;

    #[test]
    fn coordinates_come_from_layout() {
        let tree = assign_default_refs(&parse_html("<body><button>OK</button></body>").unwrap());
        let p = Perturbation::new(PerturbationKind::Coordinates, 0);
        let out = perturb(&tree, &p, &layout(&tree).boxes);
        assert_eq!(
            serialize(&out),
            "<body left=\"0\" right=\"160\" top=\"0\" bottom=\"160\" ref=\"1\">\
             <button left=\"2\" right=\"18\" top=\"2\" bottom=\"14\" ref=\"2\">OK</button></body>"
        );
    }

    #[test]
    fn top_injection_shifts_by_distractor_size() {
        let tree = assign_default_refs(
            &parse_html("<body><div id=\"wrap\"><div id=\"area\"><button>a</button></div></div></body>").unwrap(),
        );
        let nav = DomNode::element("div")
            .with_child(DomNode::element("a").with_text("p"))
            .with_child(DomNode::element("a").with_text("q"));
        let out = perturb(&tree, &Perturbation::with_distractor(PerturbationKind::Top, nav), &[]);
        assert_eq!(out.find_by_id("wrap").unwrap().node_ref(), Some(5));
        let map = view_ref_map(&tree, &out, Some(PerturbationKind::Top));
        assert_eq!(map[&1], Some(1));
        assert_eq!(map[&2], None);
        assert_eq!(map[&4], None);
        assert_eq!(map[&5], Some(2));
        assert_eq!(map[&7], Some(4));
    }

    #[test]
    fn distractor_labels_avoid_terminal_texts() {
        for seed in 0..10_000 {
            let nav = default_distractor(seed);
            assert!((2..=4).contains(&nav.children().len()));
            for child in nav.children() {
                let label = child.text().unwrap();
                assert!(!reserved(label), "seed {seed}: {label}");
                assert_ne!(label, "Submit");
            }
        }
        let nav = assign_default_refs(&DomTree::new(DomNode::element("body").with_child(default_distractor(1))).unwrap());
        assert_eq!(parse_html(&serialize(&nav)).unwrap(), nav);
        assert_eq!(default_distractor(1), default_distractor(1));
        assert!(default_distractor(1).count_referable(&default_non_referable()) >= 3);
    }

    #[test]
    fn compose_validates_names_and_arity() {
        let registry = register_builtin_tasks();
        assert_eq!(compose(&registry, &["click-test"]).unwrap_err(), TaskError::Arity(1));
        assert_eq!(compose(&registry, &["a", "b", "c", "d"]).unwrap_err(), TaskError::Arity(4));
        assert_eq!(
            compose(&registry, &["click-test", "book-flight"]).unwrap_err(),
            TaskError::UnknownTask("book-flight".into())
        );
        for name in BENCHMARK_COMPOSITES {
            let task = compose_named(&registry, name).unwrap();
            assert_eq!(task.name(), name);
        }
    }

    #[test]
    fn composite_instruction_joins_parts_in_order() {
        let registry = register_builtin_tasks();
        let task = compose_named(&registry, "click-link_click-dialog").unwrap();
        let inst = task.generate(&mut SplitMix64::new(5));
        let Goal::Composite { parts } = &inst.goal else { panic!() };
        let link = registry.get("click-link").unwrap().instruction(&parts[0].goal);
        assert_eq!(inst.instruction, format!("{link} Close the dialog box by clicking the \"x\"."));
        assert_eq!(task.oracle_steps(&inst.goal), 2);
    }
}
