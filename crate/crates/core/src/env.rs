//! Episode state machine: reset, step, reward and termination.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{parse_action, Action};
use crate::datagen::{EpisodeInfo, Policy, Step, Trajectory};
use crate::dom::{find_by_ref, mutate, serialize, DomTree, Edit, Ref};
use crate::render::{layout, rasterize, Frame, DEFAULT_HISTORY};
use crate::robustness::{perturb, view_ref_map, Perturbation, PerturbationKind};
use crate::rng::{episode_seed, SplitMix64};
use crate::tasks::{is_checkbox, Event, EventKind, Goal, Reaction, TaskSpec, TaskState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Success,
    Failure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Success => "success",
            Status::Failure => "failure",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureReason {
    InvalidAction(String),
    WrongTerminal,
    StepLimit,
    Policy(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::InvalidAction(detail) => write!(f, "invalid action: {detail}"),
            FailureReason::WrongTerminal => f.write_str("wrong terminal state"),
            FailureReason::StepLimit => f.write_str("step limit reached"),
            FailureReason::Policy(msg) => write!(f, "policy error: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("episode already finished")]
    EpisodeFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    /// Frames per observation.
    pub history: usize,
    /// Applied to every observation; predicates still read the unperturbed state.
    pub perturbation: Option<PerturbationKind>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { history: DEFAULT_HISTORY, perturbation: None }
    }
}

/// What a policy sees at step `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub instruction: String,
    pub html: String,
    /// The last `history` frames, oldest first, white-padded at episode start.
    pub frames: Vec<Arc<Frame>>,
    pub action_history: Vec<String>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: u8,
    pub status: Status,
}

/// One live episode.
#[derive(Debug, Clone)]
pub struct Episode {
    task: TaskSpec,
    seed: u64,
    goal: Goal,
    instruction: String,
    state: TaskState,
    status: Status,
    reward: u8,
    failure: Option<FailureReason>,
    step_index: usize,
    max_steps: usize,
    history: Vec<String>,
    config: EnvConfig,
    perturbation: Option<Perturbation>,
    view: DomTree,
    view_refs: BTreeMap<Ref, Option<Ref>>,
    frames: VecDeque<Arc<Frame>>,
}

impl Episode {
    /// Starts episode `episode_index` of `task` under `base_seed`.
    pub fn reset(task: TaskSpec, base_seed: u64, episode_index: u64, config: EnvConfig) -> (Self, Observation) {
        let seed = episode_seed(base_seed, task.name(), episode_index);
        Self::from_seed(task, seed, config)
    }

    /// Starts an episode directly from its stream seed.
    pub fn from_seed(task: TaskSpec, seed: u64, config: EnvConfig) -> (Self, Observation) {
        let inst = task.generate(&mut SplitMix64::new(seed));
        let max_steps = task.max_steps(&inst.goal);
        let history = config.history.max(1);
        let mut frames = VecDeque::with_capacity(history);
        for _ in 0..history {
            frames.push_back(Frame::shared_white());
        }
        let mut episode = Self {
            perturbation: config.perturbation.map(|kind| Perturbation::new(kind, seed)),
            view: inst.tree.clone(),
            view_refs: BTreeMap::new(),
            state: TaskState::new(inst.tree),
            task,
            seed,
            goal: inst.goal,
            instruction: inst.instruction,
            status: Status::Running,
            reward: 0,
            failure: None,
            step_index: 0,
            max_steps,
            history: Vec::new(),
            config: EnvConfig { history, ..config },
            frames,
        };
        episode.refresh_view();
        let obs = episode.observation();
        (episode, obs)
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    /// Unperturbed semantic state.
    pub fn state(&self) -> &TaskState {
        &self.state
    }

    /// The tree the policy observes.
    pub fn view(&self) -> &DomTree {
        &self.view
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn reward(&self) -> u8 {
        self.reward
    }

    pub fn failure(&self) -> Option<&FailureReason> {
        self.failure.as_ref()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    /// Newest frame.
    pub fn frame(&self) -> &Arc<Frame> {
        self.frames.back().expect("history is at least one")
    }

    pub fn observation(&self) -> Observation {
        Observation {
            instruction: self.instruction.clone(),
            html: serialize(&self.view),
            frames: self.frames.iter().cloned().collect(),
            action_history: self.history.clone(),
            step_index: self.step_index,
        }
    }

    /// Parses and applies a textual action; unparseable text fails the episode.
    pub fn step_text(&mut self, text: &str) -> Result<StepOutcome, EnvError> {
        match parse_action(text) {
            Ok(action) => self.step(&action),
            Err(err) => {
                self.ensure_running()?;
                self.history.push(text.to_string());
                self.step_index += 1;
                self.finish(Status::Failure, Some(FailureReason::InvalidAction(err.to_string())));
                Ok(self.outcome())
            }
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        self.ensure_running()?;
        self.history.push(action.to_record());
        self.step_index += 1;
        match self.apply(action) {
            Err(detail) => self.finish(Status::Failure, Some(FailureReason::InvalidAction(detail))),
            Ok((reaction, event)) => {
                if self.task.success(&self.state, &self.goal, &event) {
                    self.finish(Status::Success, None);
                } else if reaction == Reaction::Terminal {
                    self.finish(Status::Failure, Some(FailureReason::WrongTerminal));
                } else if self.step_index >= self.max_steps {
                    self.finish(Status::Failure, Some(FailureReason::StepLimit));
                } else {
                    self.refresh_view();
                }
            }
        }
        Ok(self.outcome())
    }

    /// Ends a running episode as a failure without taking a step.
    pub fn abort(&mut self, reason: FailureReason) {
        if self.status == Status::Running {
            self.status = Status::Failure;
            self.failure = Some(reason);
        }
    }

    fn ensure_running(&self) -> Result<(), EnvError> {
        if self.status == Status::Running {
            Ok(())
        } else {
            Err(EnvError::EpisodeFinished)
        }
    }

    fn finish(&mut self, status: Status, failure: Option<FailureReason>) {
        self.status = status;
        self.reward = u8::from(status == Status::Success);
        self.failure = failure;
        self.refresh_view();
    }

    fn outcome(&self) -> StepOutcome {
        StepOutcome { observation: self.observation(), reward: self.reward, status: self.status }
    }

    fn apply(&mut self, action: &Action) -> Result<(Reaction, Event), String> {
        let observed = action.target();
        let target = match self.view_refs.get(&observed) {
            None => return Err(format!("ref {observed} not found")),
            Some(None) => return Err(format!("ref {observed} is not part of the task")),
            Some(Some(r)) => *r,
        };
        let node = find_by_ref(&self.state.tree, target).map_err(|e| e.to_string())?;
        match action {
            Action::Click { .. } if is_checkbox(node) => {
                let value = if node.attr("value") == Some("True") { "False" } else { "True" };
                self.set_value(target, value);
                Ok((Reaction::Continue, self.event(EventKind::Click, target)))
            }
            Action::Click { .. } if matches!(node.tag(), "button" | "a" | "option" | "li") => {
                let tag = node.tag().to_string();
                let event = self.event(EventKind::Click, target);
                match self.task.react(&mut self.state, &self.goal, &event) {
                    Reaction::Unhandled => Err(format!("<{tag}> ref {observed} has no effect here")),
                    reaction => Ok((reaction, event)),
                }
            }
            Action::Click { .. } => Err(format!("<{}> ref {observed} is not clickable", node.tag())),
            Action::Type { text, .. } if node.tag() == "input" && !is_checkbox(node) => {
                self.set_value(target, text);
                Ok((Reaction::Continue, self.event(EventKind::Type(text.clone()), target)))
            }
            Action::Type { .. } => Err(format!("<{}> ref {observed} does not accept text", node.tag())),
        }
    }

    fn set_value(&mut self, target: Ref, value: &str) {
        let edit = Edit::SetValue { target, value: value.to_string() };
        self.state.tree = mutate(&self.state.tree, edit).expect("target resolved");
    }

    fn event(&self, kind: EventKind, target: Ref) -> Event {
        let node = find_by_ref(&self.state.tree, target).expect("target resolved").clone();
        Event { kind, node }
    }

    fn refresh_view(&mut self) {
        let view = match &self.perturbation {
            None => self.state.tree.clone(),
            Some(p) => {
                let boxes = if p.kind == PerturbationKind::Coordinates {
                    layout(&self.state.tree).boxes
                } else {
                    Vec::new()
                };
                perturb(&self.state.tree, p, &boxes)
            }
        };
        self.view_refs = view_ref_map(&self.state.tree, &view, self.config.perturbation);
        let frame = Arc::new(rasterize(&view));
        self.view = view;
        self.frames.pop_front();
        self.frames.push_back(frame);
    }
}

/// A finished run: the transcript plus the frame of every recorded state.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub trajectory: Trajectory,
    /// `frames[t]` is the frame of the state observed before action `t`.
    pub frames: Vec<Arc<Frame>>,
    pub goal: Goal,
}

/// Frame file path of state `step` in an episode.
pub fn frame_path(task: &str, episode_index: u64, step: usize) -> String {
    format!("{task}/{episode_index}/{step}.ppm")
}

/// Drives `policy` through one episode until it terminates.
pub fn run_episode(
    task: &TaskSpec,
    base_seed: u64,
    episode_index: u64,
    config: EnvConfig,
    policy: &mut dyn Policy,
) -> EpisodeRun {
    let (mut episode, mut obs) = Episode::reset(task.clone(), base_seed, episode_index, config);
    let info = EpisodeInfo {
        task_name: task.name(),
        episode_index,
        base_seed,
        privileged: Some((task.as_ref(), episode.goal())),
    };
    policy.begin_episode(&info);
    let history = episode.config().history;
    let mut steps = Vec::new();
    let mut frames = Vec::new();
    let mut diagnostic = None;
    let window = |t: usize| -> Vec<Option<String>> {
        (0..history)
            .map(|i| {
                let back = history - 1 - i;
                (t >= back).then(|| frame_path(task.name(), episode_index, t - back))
            })
            .collect()
    };
    while episode.status() == Status::Running {
        let t = obs.step_index;
        frames.push(episode.frame().clone());
        let html = obs.html.clone();
        match policy.act(&obs) {
            Ok(text) => {
                let outcome = episode.step_text(&text).expect("episode is running");
                steps.push(Step { html, frames: window(t), action: text });
                obs = outcome.observation;
            }
            Err(err) => {
                let reason = FailureReason::Policy(err.to_string());
                diagnostic = Some(reason.to_string());
                episode.abort(reason);
                if steps.is_empty() {
                    steps.push(Step { html, frames: window(t), action: String::new() });
                } else {
                    frames.pop();
                }
            }
        }
    }
    if diagnostic.is_none() {
        diagnostic = episode.failure().map(ToString::to_string);
    }
    policy.end_episode(episode.reward(), episode.status());
    let trajectory = Trajectory {
        task: task.name().to_string(),
        episode_seed: episode_index,
        instruction: episode.instruction().to_string(),
        steps,
        reward: episode.reward(),
        status: episode.status(),
        diagnostic,
    };
    EpisodeRun { trajectory, frames, goal: episode.goal().clone() }
}
