use crate::dom::{mutate, DomNode, Edit};
use crate::rng::SplitMix64;

use super::{
    distinct_tokens, el, is_checkbox, page, submit_button, Event, EventKind, Goal, Instance, PlannedAction,
    Reaction, Selector, Task, TaskState,
};

fn clicked_text<'a>(event: &'a Event, tag: &str) -> Option<&'a str> {
    (event.kind == EventKind::Click && event.node.tag() == tag)
        .then(|| event.node.text())
        .flatten()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickTest;

impl Task for ClickTest {
    fn name(&self) -> &str {
        "click-test"
    }

    fn generate(&self, _rng: &mut SplitMix64) -> Instance {
        let tree = page([el("button").with_attr("id", "subbtn").with_text("Click Me!")]);
        let goal = Goal::ClickTest;
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, _goal: &Goal) -> String {
        "Click the button.".to_string()
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        if event.is_click_on("subbtn") {
            Reaction::Terminal
        } else {
            Reaction::Unhandled
        }
    }

    fn success(&self, _state: &TaskState, _goal: &Goal, last: &Event) -> bool {
        last.is_click_on("subbtn")
    }

    fn oracle_plan(&self, _goal: &Goal) -> Vec<PlannedAction> {
        vec![PlannedAction::click(Selector::id("subbtn"))]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickButton;

impl Task for ClickButton {
    fn name(&self) -> &str {
        "click-button"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let n = rng.range_inclusive(3, 6);
        let labels = distinct_tokens(rng, n);
        let pick = rng.index(n);
        let tree = page([el("div")
            .with_attr("id", "buttons")
            .with_children(labels.iter().map(|l| el("button").with_text(l)))]);
        let goal = Goal::ClickButton { label: labels[pick].clone() };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::ClickButton { label } = goal else { unreachable!("click-button goal") };
        format!("Click on the \"{label}\" button.")
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        if clicked_text(event, "button").is_some() {
            Reaction::Terminal
        } else {
            Reaction::Unhandled
        }
    }

    fn success(&self, _state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::ClickButton { label } = goal else { return false };
        clicked_text(last, "button") == Some(label.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::ClickButton { label } = goal else { return Vec::new() };
        vec![PlannedAction::click(Selector::text("button", label))]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickLink;

impl Task for ClickLink {
    fn name(&self) -> &str {
        "click-link"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let n = rng.range_inclusive(3, 6);
        let labels = distinct_tokens(rng, n);
        let mut para = el("p");
        for label in &labels {
            let filler = rng.token(2, 8);
            para = para
                .with_child(el("span").with_text(filler))
                .with_child(el("a").with_attr("href", "#").with_text(label));
        }
        let pick = rng.index(n);
        let goal = Goal::ClickLink { label: labels[pick].clone() };
        Instance { tree: page([para]), instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::ClickLink { label } = goal else { unreachable!("click-link goal") };
        format!("Click on the link \"{label}\".")
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        if clicked_text(event, "a").is_some() {
            Reaction::Terminal
        } else {
            Reaction::Unhandled
        }
    }

    fn success(&self, _state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::ClickLink { label } = goal else { return false };
        clicked_text(last, "a") == Some(label.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::ClickLink { label } = goal else { return Vec::new() };
        vec![PlannedAction::click(Selector::text("a", label))]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickDialog;

impl Task for ClickDialog {
    fn name(&self) -> &str {
        "click-dialog"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let words: Vec<String> = (0..rng.range_inclusive(3, 6)).map(|_| rng.token(2, 8)).collect();
        let dialog = el("div")
            .with_attr("id", "dialog")
            .with_child(
                el("div")
                    .with_attr("class", "titlebar")
                    .with_child(el("span").with_text("Dialog"))
                    .with_child(el("button").with_attr("id", "dialog-close").with_text("x")),
            )
            .with_child(el("p").with_text(words.join(" ")));
        let goal = Goal::ClickDialog;
        Instance { tree: page([dialog]), instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, _goal: &Goal) -> String {
        "Close the dialog box by clicking the \"x\".".to_string()
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        if event.is_click_on("dialog-close") {
            Reaction::Terminal
        } else {
            Reaction::Unhandled
        }
    }

    fn success(&self, _state: &TaskState, _goal: &Goal, last: &Event) -> bool {
        last.is_click_on("dialog-close")
    }

    fn oracle_plan(&self, _goal: &Goal) -> Vec<PlannedAction> {
        vec![PlannedAction::click(Selector::id("dialog-close"))]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickCheckboxes;

impl ClickCheckboxes {
    fn checkbox(index: usize, label: &str) -> DomNode {
        el("label")
            .with_child(
                el("input")
                    .with_attr("type", "checkbox")
                    .with_attr("id", format!("ch{index}"))
                    .with_attr("value", "False"),
            )
            .with_child(el("t").with_attr("class", "TEXT_CLASS").with_text(label))
    }
}

impl Task for ClickCheckboxes {
    fn name(&self) -> &str {
        "click-checkboxes"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let n = rng.range_inclusive(6, 12);
        let labels = distinct_tokens(rng, n);
        let left = n.div_ceil(2);
        let column = |id: &str, range: std::ops::Range<usize>| {
            el("div")
                .with_attr("id", id)
                .with_children(range.map(|i| Self::checkbox(i, &labels[i])))
        };
        let tree = page([
            column("boxes-left", 0..left),
            column("boxes-right", left..n),
            submit_button("Submit"),
        ]);
        let k = rng.range_inclusive(1, n.min(8));
        let mut picked = rng.reservoir(n, k);
        picked.sort_unstable();
        let goal = Goal::ClickCheckboxes { targets: picked.iter().map(|&i| labels[i].clone()).collect() };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::ClickCheckboxes { targets } = goal else { unreachable!("click-checkboxes goal") };
        format!("Select {} and click Submit.", targets.join(", "))
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        if event.is_click_on("subbtn") {
            Reaction::Terminal
        } else {
            Reaction::Unhandled
        }
    }

    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::ClickCheckboxes { targets } = goal else { return false };
        if !last.is_click_on("subbtn") {
            return false;
        }
        let mut ok = true;
        state.tree.root().walk(&mut |n| {
            if n.tag() == "label" {
                if let (Some(input), Some(text)) = (
                    n.children().iter().find(|c| is_checkbox(c)),
                    n.children().iter().find(|c| c.tag() == "t").and_then(|t| t.text()),
                ) {
                    let checked = input.attr("value") == Some("True");
                    ok &= checked == targets.iter().any(|t| t == text);
                }
            }
        });
        ok
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::ClickCheckboxes { targets } = goal else { return Vec::new() };
        targets
            .iter()
            .map(|label| PlannedAction::click(Selector::Checkbox { label: label.clone() }))
            .chain([PlannedAction::click(Selector::id("subbtn"))])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickOption;

impl Task for ClickOption {
    fn name(&self) -> &str {
        "click-option"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let n = rng.range_inclusive(2, 6);
        let labels = distinct_tokens(rng, n);
        let select = el("select")
            .with_attr("id", "options")
            .with_children(labels.iter().map(|l| el("option").with_attr("selected", "False").with_text(l)));
        let tree = page([select, submit_button("Submit")]);
        let pick = rng.index(n);
        let goal = Goal::ClickOption { label: labels[pick].clone() };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::ClickOption { label } = goal else { unreachable!("click-option goal") };
        format!("Select {label} and click Submit.")
    }

    fn react(&self, state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        if event.is_click_on("subbtn") {
            return Reaction::Terminal;
        }
        let Some(target) = event.node.node_ref().filter(|_| event.node.tag() == "option") else {
            return Reaction::Unhandled;
        };
        let mut options = Vec::new();
        state.tree.root().walk(&mut |n| {
            if n.tag() == "option" {
                options.extend(n.node_ref());
            }
        });
        for r in options {
            let value = if r == target { "True" } else { "False" };
            let edit = Edit::SetAttribute { target: r, name: "selected".into(), value: value.into() };
            state.tree = mutate(&state.tree, edit).expect("option ref exists");
        }
        Reaction::Continue
    }

    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::ClickOption { label } = goal else { return false };
        last.is_click_on("subbtn")
            && state
                .tree
                .find(|n| n.tag() == "option" && n.attr("selected") == Some("True"))
                .and_then(DomNode::text)
                == Some(label.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::ClickOption { label } = goal else { return Vec::new() };
        vec![
            PlannedAction::click(Selector::text("option", label)),
            PlannedAction::click(Selector::id("subbtn")),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{find_by_ref, serialize};
    use crate::rng::episode_rng;
    use crate::tasks::locate;

    fn click(state: &TaskState, selector: &Selector) -> Event {
        let r = locate(&state.tree, selector).expect("selector resolves");
        Event { kind: EventKind::Click, node: find_by_ref(&state.tree, r).unwrap().clone() }
    }

    #[test]
    fn click_test_page_is_minimal() {
        let inst = ClickTest.generate(&mut SplitMix64::new(7));
        assert_eq!(
            serialize(&inst.tree),
            "<body ref=\"1\"><div id=\"wrap\" ref=\"2\"><div id=\"area\" ref=\"3\">\
             <button id=\"subbtn\" ref=\"4\">Click Me!</button></div></div></body>"
        );
    }

    #[test]
    fn checkbox_bounds_and_instruction_shape() {
        let mut seen_eight = false;
        for seed in 0..500 {
            let inst = ClickCheckboxes.generate(&mut episode_rng(0, "click-checkboxes", seed));
            let Goal::ClickCheckboxes { targets } = &inst.goal else { panic!() };
            let mut boxes = 0;
            inst.tree.root().walk(&mut |n| boxes += usize::from(is_checkbox(n)));
            assert!((6..=12).contains(&boxes));
            assert!((1..=8).contains(&targets.len()) && targets.len() <= boxes);
            seen_eight |= targets.len() == 8;
            assert!(inst.instruction.starts_with("Select ") && inst.instruction.ends_with(" and click Submit."));
            for t in targets {
                assert!(locate(&inst.tree, &Selector::Checkbox { label: t.clone() }).is_some());
            }
        }
        assert!(seen_eight);
    }

    #[test]
    fn extra_checked_box_fails_submit() {
        let inst = ClickCheckboxes.generate(&mut SplitMix64::new(3));
        let Goal::ClickCheckboxes { targets } = &inst.goal else { panic!() };
        let mut state = TaskState::new(inst.tree.clone());
        let check = |state: &mut TaskState, r| {
            state.tree = mutate(&state.tree, Edit::SetValue { target: r, value: "True".into() }).unwrap();
        };
        for t in targets {
            let r = locate(&state.tree, &Selector::Checkbox { label: t.clone() }).unwrap();
            check(&mut state, r);
        }
        let submit = click(&state, &Selector::id("subbtn"));
        assert!(ClickCheckboxes.success(&state, &inst.goal, &submit));

        // One more box checked than asked for.
        let mut extra = None;
        state.tree.root().walk(&mut |n| {
            if is_checkbox(n) && n.attr("value") == Some("False") && extra.is_none() {
                extra = n.node_ref();
            }
        });
        if let Some(r) = extra {
            check(&mut state, r);
            assert!(!ClickCheckboxes.success(&state, &inst.goal, &submit));
        }
    }

    #[test]
    fn wrong_button_is_a_terminal_failure() {
        let inst = ClickButton.generate(&mut SplitMix64::new(1));
        let Goal::ClickButton { label } = &inst.goal else { panic!() };
        let state = TaskState::new(inst.tree.clone());
        let mut other = None;
        state.tree.root().walk(&mut |n| {
            if n.tag() == "button" && n.text() != Some(label) {
                other = Some(n.clone());
            }
        });
        let event = Event { kind: EventKind::Click, node: other.unwrap() };
        assert_eq!(ClickButton.react(&mut state.clone(), &inst.goal, &event), Reaction::Terminal);
        assert!(!ClickButton.success(&state, &inst.goal, &event));
    }

    #[test]
    fn option_click_selects_exactly_one() {
        let inst = ClickOption.generate(&mut SplitMix64::new(5));
        let Goal::ClickOption { label } = &inst.goal else { panic!() };
        let mut state = TaskState::new(inst.tree.clone());
        let event = click(&state, &Selector::text("option", label));
        assert_eq!(ClickOption.react(&mut state, &inst.goal, &event), Reaction::Continue);
        let mut selected = Vec::new();
        state.tree.root().walk(&mut |n| {
            if n.attr("selected") == Some("True") {
                selected.push(n.text().unwrap().to_string());
            }
        });
        assert_eq!(selected, vec![label.clone()]);
        let submit = click(&state, &Selector::id("subbtn"));
        assert!(ClickOption.success(&state, &inst.goal, &submit));
        assert!(!ClickOption.success(&TaskState::new(inst.tree), &inst.goal, &submit));
    }
}
