use crate::dom::DomNode;
use crate::rng::SplitMix64;

use super::{el, page, submit_button, value_of, Event, Goal, Instance, PlannedAction, Reaction, Selector, Task, TaskState};

fn text_input(id: &str, kind: &str) -> DomNode {
    el("input").with_attr("type", kind).with_attr("id", id).with_attr("value", "")
}

fn submit_only(event: &Event) -> Reaction {
    if event.is_click_on("subbtn") {
        Reaction::Terminal
    } else {
        Reaction::Unhandled
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EnterText;

impl Task for EnterText {
    fn name(&self) -> &str {
        "enter-text"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let tree = page([
            el("div").with_attr("id", "form").with_child(text_input("tt", "text")),
            submit_button("Submit"),
        ]);
        let goal = Goal::EnterText { text: rng.token(2, 8) };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::EnterText { text } = goal else { unreachable!("enter-text goal") };
        format!("Enter \"{text}\" into the text field and press Submit.")
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        submit_only(event)
    }

    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::EnterText { text } = goal else { return false };
        last.is_click_on("subbtn") && value_of(&state.tree, "tt") == Some(text.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::EnterText { text } = goal else { return Vec::new() };
        vec![
            PlannedAction::type_into(Selector::id("tt"), text),
            PlannedAction::click(Selector::id("subbtn")),
        ]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EnterPassword;

impl Task for EnterPassword {
    fn name(&self) -> &str {
        "enter-password"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let field = |label: &str, id: &str| {
            el("div")
                .with_child(el("label").with_attr("for", id).with_text(label))
                .with_child(text_input(id, "password"))
        };
        let tree = page([
            field("Password", "password"),
            field("Verify password", "verify"),
            submit_button("Submit"),
        ]);
        let goal = Goal::EnterPassword { password: rng.token(2, 8) };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::EnterPassword { password } = goal else { unreachable!("enter-password goal") };
        format!("Enter the password \"{password}\" into both text fields and press submit.")
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        submit_only(event)
    }

    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::EnterPassword { password } = goal else { return false };
        last.is_click_on("subbtn")
            && value_of(&state.tree, "password") == Some(password.as_str())
            && value_of(&state.tree, "verify") == Some(password.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::EnterPassword { password } = goal else { return Vec::new() };
        vec![
            PlannedAction::type_into(Selector::id("password"), password),
            PlannedAction::type_into(Selector::id("verify"), password),
            PlannedAction::click(Selector::id("subbtn")),
        ]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoginUser;

impl Task for LoginUser {
    fn name(&self) -> &str {
        "login-user"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let field = |label: &str, id: &str, kind: &str| {
            el("p")
                .with_child(el("label").with_attr("for", id).with_text(label))
                .with_child(text_input(id, kind))
        };
        let tree = page([
            field("Username", "username", "text"),
            field("Password", "password", "password"),
            el("button").with_attr("id", "subbtn").with_text("Login"),
        ]);
        let username = rng.token(2, 8);
        let password = rng.token(2, 8);
        let goal = Goal::LoginUser { username, password };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::LoginUser { username, password } = goal else { unreachable!("login-user goal") };
        format!(
            "Enter the username \"{username}\" and the password \"{password}\" into the text fields and press login."
        )
    }

    fn react(&self, _state: &mut TaskState, _goal: &Goal, event: &Event) -> Reaction {
        submit_only(event)
    }

    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::LoginUser { username, password } = goal else { return false };
        last.is_click_on("subbtn")
            && value_of(&state.tree, "username") == Some(username.as_str())
            && value_of(&state.tree, "password") == Some(password.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::LoginUser { username, password } = goal else { return Vec::new() };
        vec![
            PlannedAction::type_into(Selector::id("username"), username),
            PlannedAction::type_into(Selector::id("password"), password),
            PlannedAction::click(Selector::id("subbtn")),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{mutate, Edit};
    use crate::tasks::{locate, EventKind};

    fn fill(state: &mut TaskState, id: &str, value: &str) {
        let r = locate(&state.tree, &Selector::id(id)).unwrap();
        state.tree = mutate(&state.tree, Edit::SetValue { target: r, value: value.into() }).unwrap();
    }

    fn submit(state: &TaskState) -> Event {
        Event { kind: EventKind::Click, node: state.tree.find_by_id("subbtn").unwrap().clone() }
    }

    #[test]
    fn login_form_has_both_inputs_and_a_login_button() {
        let inst = LoginUser.generate(&mut SplitMix64::new(42));
        let tree = &inst.tree;
        assert_eq!(tree.find_by_id("username").unwrap().attr("type"), Some("text"));
        assert_eq!(tree.find_by_id("password").unwrap().attr("type"), Some("password"));
        assert_eq!(tree.find_by_id("subbtn").unwrap().text(), Some("Login"));
    }

    #[test]
    fn login_requires_both_fields() {
        let inst = LoginUser.generate(&mut SplitMix64::new(9));
        let Goal::LoginUser { username, password } = &inst.goal else { panic!() };
        let mut state = TaskState::new(inst.tree.clone());
        fill(&mut state, "username", username);
        assert!(!LoginUser.success(&state, &inst.goal, &submit(&state)));
        fill(&mut state, "password", password);
        assert!(LoginUser.success(&state, &inst.goal, &submit(&state)));
    }

    #[test]
    fn enter_text_instruction_has_one_hole() {
        let inst = EnterText.generate(&mut SplitMix64::new(0));
        let Goal::EnterText { text } = &inst.goal else { panic!() };
        assert_eq!(inst.instruction, format!("Enter \"{text}\" into the text field and press Submit."));
        let mut state = TaskState::new(inst.tree.clone());
        fill(&mut state, "tt", &format!("{text}x"));
        assert!(!EnterText.success(&state, &inst.goal, &submit(&state)));
        fill(&mut state, "tt", text);
        assert!(EnterText.success(&state, &inst.goal, &submit(&state)));
    }

    #[test]
    fn password_fields_must_agree() {
        let inst = EnterPassword.generate(&mut SplitMix64::new(4));
        let Goal::EnterPassword { password } = &inst.goal else { panic!() };
        let mut state = TaskState::new(inst.tree.clone());
        fill(&mut state, "password", password);
        fill(&mut state, "verify", "nope");
        assert!(!EnterPassword.success(&state, &inst.goal, &submit(&state)));
        fill(&mut state, "verify", password);
        assert!(EnterPassword.success(&state, &inst.goal, &submit(&state)));
    }
}
