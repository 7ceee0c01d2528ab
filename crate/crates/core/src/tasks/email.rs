use crate::dom::{DomNode, DomTree};
use crate::rng::SplitMix64;

use super::{el, page, value_of, Event, EventKind, Goal, Instance, PlannedAction, Reaction, Selector, Task, TaskState};

const INBOX: usize = 0;
const OPENED: usize = 1;
const FORWARD: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Email {
    pub sender: String,
    pub subject: String,
    pub body: String,
}

/// Three screens: inbox, one opened email, and the forward form.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmailInboxForwardNl;

fn inbox_page(inbox: &[Email]) -> DomTree {
    page([el("ul").with_attr("id", "inbox").with_children(inbox.iter().map(|e| {
        el("li")
            .with_attr("class", "email-thumbnail")
            .with_child(el("span").with_attr("class", "email-sender").with_text(&e.sender))
            .with_child(el("span").with_attr("class", "email-subject").with_text(&e.subject))
    }))])
}

fn email_header(email: &Email) -> [DomNode; 3] {
    [
        el("h3").with_attr("class", "email-subject").with_text(&email.subject),
        el("p").with_attr("class", "email-sender").with_text(&email.sender),
        el("p").with_attr("class", "email-body").with_text(&email.body),
    ]
}

fn opened_page(email: &Email) -> DomTree {
    let [subject, sender, body] = email_header(email);
    page([
        subject,
        sender,
        body,
        el("div")
            .with_attr("class", "email-actions")
            .with_child(el("button").with_attr("id", "back").with_text("Back"))
            .with_child(el("button").with_attr("id", "forward").with_text("Forward")),
    ])
}

fn forward_page(email: &Email) -> DomTree {
    let [subject, _, body] = email_header(email);
    page([
        el("div")
            .with_attr("class", "forward-to")
            .with_child(el("label").with_attr("for", "forward-to").with_text("To:"))
            .with_child(el("input").with_attr("type", "text").with_attr("id", "forward-to").with_attr("value", "")),
        subject,
        body,
        el("button").with_attr("id", "send").with_text("Send"),
    ])
}

fn sender_of(node: &DomNode) -> Option<String> {
    let mut found = None;
    node.walk(&mut |n| {
        if found.is_none() && n.has_class("email-sender") {
            found = n.text().map(str::to_string);
        }
    });
    found
}

impl Task for EmailInboxForwardNl {
    fn name(&self) -> &str {
        "email-inbox-forward-nl"
    }

    fn generate(&self, rng: &mut SplitMix64) -> Instance {
        let n = rng.range_inclusive(3, 6);
        let mut inbox: Vec<Email> = Vec::with_capacity(n);
        while inbox.len() < n {
            let sender = rng.name(3, 8);
            if inbox.iter().any(|e| e.sender == sender) {
                continue;
            }
            let subject = rng.token(2, 8);
            let body: Vec<String> = (0..rng.range_inclusive(2, 5)).map(|_| rng.token(2, 8)).collect();
            inbox.push(Email { sender, subject, body: body.join(" ") });
        }
        let tree = inbox_page(&inbox);
        let sender = inbox[rng.index(n)].sender.clone();
        let receiver = loop {
            let name = rng.name(3, 8);
            if inbox.iter().all(|e| e.sender != name) {
                break name;
            }
        };
        let goal = Goal::EmailForward { sender, receiver, inbox };
        Instance { tree, instruction: self.instruction(&goal), goal }
    }

    fn instruction(&self, goal: &Goal) -> String {
        let Goal::EmailForward { sender, receiver, .. } = goal else { unreachable!("email goal") };
        format!("Find {sender}'s email and forward it to {receiver}, please.")
    }

    fn react(&self, state: &mut TaskState, goal: &Goal, event: &Event) -> Reaction {
        let Goal::EmailForward { inbox, .. } = goal else { return Reaction::Unhandled };
        if event.kind != EventKind::Click {
            return Reaction::Unhandled;
        }
        let opened = || {
            let name = state.notes.get("opened")?;
            inbox.iter().find(|e| &e.sender == name).cloned()
        };
        match (state.screen, event.node.tag(), event.node.id()) {
            (INBOX, "li", _) => {
                let Some(email) = sender_of(&event.node).and_then(|s| inbox.iter().find(|e| e.sender == s)) else {
                    return Reaction::Unhandled;
                };
                state.notes.insert("opened".into(), email.sender.clone());
                state.show(opened_page(email), OPENED);
                Reaction::Continue
            }
            (OPENED, "button", Some("back")) => {
                state.notes.remove("opened");
                state.show(inbox_page(inbox), INBOX);
                Reaction::Continue
            }
            (OPENED, "button", Some("forward")) => {
                let Some(email) = opened() else { return Reaction::Unhandled };
                state.show(forward_page(&email), FORWARD);
                Reaction::Continue
            }
            (FORWARD, "button", Some("send")) => Reaction::Terminal,
            _ => Reaction::Unhandled,
        }
    }

    fn success(&self, state: &TaskState, goal: &Goal, last: &Event) -> bool {
        let Goal::EmailForward { sender, receiver, .. } = goal else { return false };
        state.screen == FORWARD
            && last.is_click_on("send")
            && state.notes.get("opened") == Some(sender)
            && value_of(&state.tree, "forward-to") == Some(receiver.as_str())
    }

    fn oracle_plan(&self, goal: &Goal) -> Vec<PlannedAction> {
        let Goal::EmailForward { sender, receiver, .. } = goal else { return Vec::new() };
        vec![
            PlannedAction::click(Selector::ChildText {
                tag: "li".into(),
                class: "email-sender".into(),
                text: sender.clone(),
            }),
            PlannedAction::click(Selector::id("forward")),
            PlannedAction::type_into(Selector::id("forward-to"), receiver),
            PlannedAction::click(Selector::id("send")),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{find_by_ref, mutate, Edit};
    use crate::tasks::locate;

    fn click(state: &mut TaskState, goal: &Goal, selector: Selector) -> (Reaction, Event) {
        let r = locate(&state.tree, &selector).unwrap();
        let event = Event { kind: EventKind::Click, node: find_by_ref(&state.tree, r).unwrap().clone() };
        (EmailInboxForwardNl.react(state, goal, &event), event)
    }

    #[test]
    fn receiver_is_never_a_sender() {
        for seed in 0..300 {
            let inst = EmailInboxForwardNl.generate(&mut SplitMix64::new(seed));
            let Goal::EmailForward { sender, receiver, inbox } = &inst.goal else { panic!() };
            assert!(inbox.iter().any(|e| &e.sender == sender));
            assert!(inbox.iter().all(|e| &e.sender != receiver));
            assert!((3..=6).contains(&inbox.len()));
        }
    }

    #[test]
    fn hand_walked_forward_episode() {
        let inst = EmailInboxForwardNl.generate(&mut SplitMix64::new(11));
        let Goal::EmailForward { sender, receiver, .. } = inst.goal.clone() else { panic!() };
        assert_eq!(inst.instruction, format!("Find {sender}'s email and forward it to {receiver}, please."));
        let goal = inst.goal;
        let mut state = TaskState::new(inst.tree);
        let plan = EmailInboxForwardNl.oracle_plan(&goal);

        let (reaction, _) = click(&mut state, &goal, plan[0].target.clone());
        assert_eq!((reaction, state.screen), (Reaction::Continue, OPENED));
        // Going back and reopening lands on the same screen.
        click(&mut state, &goal, Selector::id("back"));
        assert_eq!(state.screen, INBOX);
        click(&mut state, &goal, plan[0].target.clone());

        let (reaction, _) = click(&mut state, &goal, Selector::id("forward"));
        assert_eq!((reaction, state.screen), (Reaction::Continue, FORWARD));

        let r = locate(&state.tree, &Selector::id("forward-to")).unwrap();
        state.tree = mutate(&state.tree, Edit::SetValue { target: r, value: receiver.clone() }).unwrap();
        let (reaction, send) = click(&mut state, &goal, Selector::id("send"));
        assert_eq!(reaction, Reaction::Terminal);
        assert!(EmailInboxForwardNl.success(&state, &goal, &send));
    }

    #[test]
    fn forwarding_the_wrong_email_fails() {
        let inst = EmailInboxForwardNl.generate(&mut SplitMix64::new(2));
        let Goal::EmailForward { sender, receiver, inbox } = inst.goal.clone() else { panic!() };
        let goal = inst.goal;
        let other = inbox.iter().find(|e| e.sender != sender).unwrap().sender.clone();
        let mut state = TaskState::new(inst.tree);
        click(
            &mut state,
            &goal,
            Selector::ChildText { tag: "li".into(), class: "email-sender".into(), text: other },
        );
        click(&mut state, &goal, Selector::id("forward"));
        let r = locate(&state.tree, &Selector::id("forward-to")).unwrap();
        state.tree = mutate(&state.tree, Edit::SetValue { target: r, value: receiver }).unwrap();
        let (_, send) = click(&mut state, &goal, Selector::id("send"));
        assert!(!EmailInboxForwardNl.success(&state, &goal, &send));
    }
}
