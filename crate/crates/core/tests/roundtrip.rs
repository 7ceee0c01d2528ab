use proptest::prelude::*;
use webnav_core::actions::{format_action, parse_action, Action, ActionStyle};
use webnav_core::dom::{assign_default_refs, parse_html, serialize, DomNode, DomTree};
use webnav_core::tasks::{instantiate, register_builtin_tasks, BUILTIN_TASKS};

fn action(text: impl Strategy<Value = String>) -> impl Strategy<Value = Action> {
    prop_oneof![
        (1u32..100_000).prop_map(Action::click),
        (1u32..100_000, text).prop_map(|(r, t)| Action::type_text(r, t)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn record_actions_round_trip(a in action("\\PC{1,24}")) {
        let text = format_action(&a, ActionStyle::Record).unwrap();
        prop_assert_eq!(parse_action(&text).unwrap(), a);
    }

    #[test]
    fn functional_actions_round_trip(a in action("[^\"]{1,24}")) {
        let text = format_action(&a, ActionStyle::Functional).unwrap();
        prop_assert_eq!(parse_action(&text).unwrap(), a);
    }
}

fn refs_of(nodes: &[DomNode]) -> Vec<Option<u32>> {
    let mut out = Vec::new();
    for n in nodes {
        n.walk(&mut |m| out.push(m.node_ref()));
    }
    out
}

const TAGS: [&str; 12] = ["div", "span", "label", "button", "a", "ul", "li", "t", "select", "option", "h3", "p"];

fn node() -> impl Strategy<Value = DomNode> {
    let attr = ("[a-z]{1,6}", "\\PC{0,8}");
    let leaf = (0..TAGS.len() + 2, prop::collection::vec(attr, 0..3), prop::option::of("\\PC{1,10}")).prop_map(
        |(tag, attrs, text)| {
            let tag = ["input", "img"].get(tag.wrapping_sub(TAGS.len())).copied().unwrap_or_else(|| TAGS[tag]);
            let mut n = DomNode::element(tag);
            for (k, v) in attrs {
                if k != "ref" {
                    n = n.with_attr(&k, v);
                }
            }
            match text {
                Some(t) if tag != "input" && tag != "img" => n.with_text(t),
                _ => n,
            }
        },
    );
    leaf.prop_recursive(4, 40, 4, move |inner| {
        (0..TAGS.len(), prop::collection::vec(attr, 0..3), prop::collection::vec(inner, 1..4)).prop_map(
            |(tag, attrs, children)| {
                let mut n = DomNode::element(TAGS[tag]);
                for (k, v) in attrs {
                    if k != "ref" {
                        n = n.with_attr(&k, v);
                    }
                }
                n.with_children(children)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn arbitrary_trees_round_trip(children in prop::collection::vec(node(), 0..4), numbered in any::<bool>()) {
        let tree = DomTree::new(DomNode::element("body").with_children(children)).unwrap();
        let tree = if numbered { assign_default_refs(&tree) } else { tree };
        let text = serialize(&tree);
        let back = parse_html(&text).unwrap();
        prop_assert_eq!(&back, &tree);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn refs_are_preorder_and_unique(children in prop::collection::vec(node(), 0..4)) {
        let tree = assign_default_refs(&DomTree::new(DomNode::element("body").with_children(children)).unwrap());
        let refs = tree.preorder_refs();
        prop_assert!(refs.iter().copied().eq(1..=refs.len() as u32));
        let mut t_nodes = 0;
        tree.root().walk(&mut |n| if n.tag() == "t" { t_nodes += 1; assert!(n.node_ref().is_none()); });
        let mut all = 0;
        tree.root().walk(&mut |_| all += 1);
        prop_assert_eq!(refs.len(), all - t_nodes);
    }
}

#[test]
fn ten_thousand_task_trees_round_trip() {
    let registry = register_builtin_tasks();
    for name in BUILTIN_TASKS {
        for seed in 0..1_000 {
            let tree = instantiate(&registry, name, 0, seed).unwrap().tree;
            let text = serialize(&tree);
            assert_eq!(parse_html(&text).unwrap(), tree, "{name}/{seed}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn top_insertion_shifts_every_ref_by_k(children in prop::collection::vec(node(), 0..4), extra in node()) {
        use webnav_core::dom::{default_non_referable, mutate, Edit, InsertPosition};
        let tree = assign_default_refs(&DomTree::new(DomNode::element("body").with_children(children)).unwrap());
        let k = extra.count_referable(&default_non_referable()) as u32;
        let insert = |position, subtree| {
            assign_default_refs(&mutate(&tree, Edit::InsertSubtree { position, subtree }).unwrap())
        };
        let top = insert(InsertPosition::FirstChildOfBody, extra.clone());
        let bottom = insert(InsertPosition::LastChildOfBody, extra);
        let before = refs_of(tree.root().children());
        let shifted = refs_of(&top.root().children()[1..]);
        let kept = refs_of(&bottom.root().children()[..tree.root().children().len()]);
        prop_assert_eq!(top.root().node_ref(), Some(1));
        prop_assert_eq!(shifted, before.iter().map(|r| r.map(|r| r + k)).collect::<Vec<_>>());
        prop_assert_eq!(kept, before);
    }
}
