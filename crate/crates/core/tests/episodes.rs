use std::sync::Arc;

use proptest::prelude::*;
use webnav_core::actions::parse_action;
use webnav_core::datagen::{OraclePolicy, Policy, RandomPolicy, ReplayPolicy};
use webnav_core::dom::{assign_default_refs, mutate, DomNode, Edit, InsertPosition};
use webnav_core::env::{run_episode, EnvConfig, Episode, Status};
use webnav_core::robustness::{compose_named, PerturbationKind, BENCHMARK_COMPOSITES};
use webnav_core::tasks::{check_success, locate, register_builtin_tasks, Event, EventKind, TaskSpec, TaskState};

fn tasks() -> Vec<TaskSpec> {
    register_builtin_tasks().tasks().to_vec()
}

#[test]
fn oracle_is_perfect_and_shortest_over_a_thousand_seeds() {
    let mut oracle = OraclePolicy::new();
    for task in tasks() {
        for index in 0..1_000 {
            let run = run_episode(&task, 0, index, EnvConfig::default(), &mut oracle);
            let t = &run.trajectory;
            assert_eq!(t.status, Status::Success, "{} #{index}: {:?}", task.name(), t.diagnostic);
            assert_eq!(t.steps.len(), task.oracle_steps(&run.goal), "{} #{index}", task.name());
            let unique: std::collections::BTreeSet<_> = t.steps.iter().map(|s| (&s.html, &s.action)).collect();
            assert_eq!(unique.len(), t.steps.len(), "repeated action in {} #{index}", task.name());
        }
    }
}

#[test]
fn oracle_survives_every_perturbation() {
    let mut oracle = OraclePolicy::new();
    for kind in PerturbationKind::ALL {
        let config = EnvConfig { perturbation: Some(kind), ..EnvConfig::default() };
        for task in tasks() {
            for index in 0..100 {
                let plain = run_episode(&task, 0, index, EnvConfig::default(), &mut oracle);
                let run = run_episode(&task, 0, index, config, &mut oracle);
                assert_eq!(run.trajectory.status, Status::Success, "{kind} {} #{index}", task.name());
                if kind == PerturbationKind::Coordinates {
                    let a: Vec<_> = plain.trajectory.steps.iter().map(|s| &s.action).collect();
                    let b: Vec<_> = run.trajectory.steps.iter().map(|s| &s.action).collect();
                    assert_eq!(a, b);
                    assert!(run.trajectory.steps[0].html.len() > plain.trajectory.steps[0].html.len());
                }
            }
        }
    }
}

#[test]
fn episodes_are_deterministic_and_bounded() {
    for task in tasks() {
        for index in 0..30 {
            let mut a = RandomPolicy::new(5);
            let mut b = RandomPolicy::new(5);
            let x = run_episode(&task, 0, index, EnvConfig::default(), &mut a);
            let y = run_episode(&task, 0, index, EnvConfig::default(), &mut b);
            assert_eq!(serde_json::to_string(&x.trajectory).unwrap(), serde_json::to_string(&y.trajectory).unwrap());
            assert!(x.trajectory.steps.len() <= task.max_steps(&x.goal));
            assert!(!x.trajectory.steps.is_empty());
            assert_eq!(x.trajectory.reward == 1, x.trajectory.status == Status::Success);
            assert!(x.frames.iter().all(|f| f.is_padded()));
            for step in &x.trajectory.steps {
                assert!(parse_action(&step.action).is_ok());
            }
        }
    }
}

#[test]
fn every_observation_keeps_its_invariants() {
    let mut oracle = OraclePolicy::new();
    for task in tasks() {
        let (mut episode, mut obs) = Episode::reset(task.clone(), 0, 9, EnvConfig::default());
        oracle.begin_episode(&webnav_core::datagen::EpisodeInfo {
            task_name: task.name(),
            episode_index: 9,
            base_seed: 0,
            privileged: Some((task.as_ref(), episode.goal())),
        });
        loop {
            assert_eq!(obs.frames.len(), 2);
            assert_eq!(obs.action_history.len(), obs.step_index);
            assert!(obs.frames.iter().all(|f| f.is_padded()));
            if episode.status() != Status::Running {
                break;
            }
            let text = oracle.act(&obs).unwrap();
            obs = episode.step_text(&text).unwrap().observation;
        }
        assert_eq!(episode.reward(), 1);
    }
}

#[test]
fn success_is_invariant_under_renumbering() {
    let nav = DomNode::element("div")
        .with_child(DomNode::element("button").with_text("q"))
        .with_child(DomNode::element("a").with_text("r"));
    let mut oracle = OraclePolicy::new();
    for task in tasks() {
        for index in 0..50 {
            let run = run_episode(&task, 0, index, EnvConfig::default(), &mut oracle);
            // Replay the oracle on the semantic state, then renumber the final state.
            let (mut episode, _) = Episode::reset(task.clone(), 0, index, EnvConfig::default());
            let mut last = None;
            for step in &run.trajectory.steps {
                let action = parse_action(&step.action).unwrap();
                let before = episode.state().tree.clone();
                episode.step(&action).unwrap();
                last = Some((action, before));
            }
            let (action, before) = last.unwrap();
            let node = webnav_core::dom::find_by_ref(&before, action.target()).unwrap().clone();
            let event = Event { kind: EventKind::Click, node };
            let state = episode.state().clone();
            let value = check_success(task.as_ref(), &state, episode.goal(), &event);
            for position in [InsertPosition::FirstChildOfBody, InsertPosition::LastChildOfBody] {
                let edit = Edit::InsertSubtree { position, subtree: nav.clone() };
                let moved = assign_default_refs(&mutate(&state.tree, edit).unwrap());
                let shifted = TaskState { tree: moved, ..state.clone() };
                assert_eq!(check_success(task.as_ref(), &shifted, episode.goal(), &event), value);
            }
            assert_eq!(value, 1);
        }
    }
}

#[test]
fn composites_chain_in_order() {
    let registry = register_builtin_tasks();
    let mut oracle = OraclePolicy::new();
    for name in BENCHMARK_COMPOSITES {
        let task: TaskSpec = Arc::new(compose_named(&registry, name).unwrap());
        for index in 0..100 {
            let run = run_episode(&task, 0, index, EnvConfig::default(), &mut oracle);
            assert_eq!(run.trajectory.status, Status::Success, "{name} #{index}: {:?}", run.trajectory.diagnostic);
            assert_eq!(run.trajectory.steps.len(), task.oracle_steps(&run.goal));
        }
    }
}

#[test]
fn replay_breaks_when_refs_shift() {
    let mut oracle = OraclePolicy::new();
    let config = EnvConfig { perturbation: Some(PerturbationKind::Top), ..EnvConfig::default() };
    for task in tasks() {
        let recorded: Vec<_> = (0..20).map(|i| run_episode(&task, 0, i, EnvConfig::default(), &mut oracle).trajectory).collect();
        let mut replay = ReplayPolicy::from_trajectories(&recorded);
        for index in 0..20 {
            let run = run_episode(&task, 0, index, config, &mut replay);
            assert_eq!(run.trajectory.status, Status::Failure, "{} #{index}", task.name());
        }
    }
}

#[test]
fn oracle_targets_resolve_inside_the_area_only() {
    let registry = register_builtin_tasks();
    let task = registry.get("click-button").unwrap();
    let (episode, _) = Episode::reset(task.clone(), 0, 0, EnvConfig { perturbation: Some(PerturbationKind::Top), ..EnvConfig::default() });
    let plan = task.oracle_plan(episode.goal());
    let r = locate(episode.view(), &plan[0].target).unwrap();
    let nav_refs = episode.view().root().children()[0].count_referable(&webnav_core::dom::default_non_referable());
    assert!(r as usize > nav_refs + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_policy_is_reproducible(seed in any::<u64>(), index in 0u64..1000) {
        let task = register_builtin_tasks().get("login-user").unwrap();
        let x = run_episode(&task, 0, index, EnvConfig::default(), &mut RandomPolicy::new(seed));
        let y = run_episode(&task, 0, index, EnvConfig::default(), &mut RandomPolicy::new(seed));
        prop_assert_eq!(x.trajectory, y.trajectory);
    }
}
