//! Policies, demonstration collection and the on-disk dataset format.
//!
//! A dataset directory holds one `<task>.jsonl` file per task (one episode
//! per line), frames as `<task>/<episode>/<step>.ppm`, and `manifest.jsonl`
//! with a header line, one row per task and a totals row.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{format_action, Action, ActionStyle};
use crate::dom::{parse_html, DomTree};
use crate::env::{run_episode, EnvConfig, Observation, Status};
use crate::rng::{episode_rng, SplitMix64};
use crate::tasks::{is_checkbox, locate, Goal, PlannedAction, Task, TaskSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// What a policy learns when an episode starts.
pub struct EpisodeInfo<'a> {
    pub task_name: &'a str,
    pub episode_index: u64,
    pub base_seed: u64,
    /// Task and hidden goal; only privileged policies should read them.
    pub privileged: Option<(&'a dyn Task, &'a Goal)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("no plan step can be resolved: {0}")]
    Unresolved(String),
    #[error("plan exhausted after {0} actions")]
    Exhausted(usize),
    #[error("no recorded actions for {task} episode {episode}")]
    NoRecording { task: String, episode: u64 },
    #[error("{0}")]
    Remote(String),
}

/// `π`: maps each observation to action text.
pub trait Policy {
    fn name(&self) -> &str;

    fn begin_episode(&mut self, info: &EpisodeInfo<'_>);

    fn act(&mut self, obs: &Observation) -> Result<String, PolicyError>;

    fn end_episode(&mut self, _reward: u8, _status: Status) {}
}

/// Scripted expert that resolves each planned step against the observed page.
#[derive(Debug, Default)]
pub struct OraclePolicy {
    plan: Vec<PlannedAction>,
    cursor: usize,
}

impl OraclePolicy {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn begin_episode(&mut self, info: &EpisodeInfo<'_>) {
        self.plan = info.privileged.map(|(task, goal)| task.oracle_plan(goal)).unwrap_or_default();
        self.cursor = 0;
    }

    fn act(&mut self, obs: &Observation) -> Result<String, PolicyError> {
        let step = self.plan.get(self.cursor).ok_or(PolicyError::Exhausted(self.cursor))?;
        let tree = parse_html(&obs.html).map_err(|e| PolicyError::Unresolved(e.to_string()))?;
        let target = locate(&tree, &step.target).ok_or_else(|| PolicyError::Unresolved(step.target.to_string()))?;
        self.cursor += 1;
        let action = match &step.text {
            Some(text) => Action::type_text(target, text.clone()),
            None => Action::click(target),
        };
        Ok(action.to_record())
    }
}

/// Uniform choice over the referable elements of the observed page.
#[derive(Debug)]
pub struct RandomPolicy {
    seed: u64,
    rng: SplitMix64,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: SplitMix64::new(seed) }
    }

    pub fn start(&mut self, task_name: &str, episode_index: u64) {
        self.rng = episode_rng(self.seed, task_name, episode_index);
    }

    /// Picks an action for `html`; pages without refs get a click on ref 1.
    pub fn choose(&mut self, html: &str) -> Action {
        let Ok(tree) = parse_html(html) else { return Action::click(1) };
        let refs = tree.preorder_refs();
        if refs.is_empty() {
            return Action::click(1);
        }
        let r = refs[self.rng.index(refs.len())];
        let node = tree.path_of(r).and_then(|p| tree.node_at(p)).expect("indexed ref");
        if node.tag() == "input" && !is_checkbox(node) {
            Action::type_text(r, self.rng.token_of_len(4))
        } else {
            Action::click(r)
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn begin_episode(&mut self, info: &EpisodeInfo<'_>) {
        self.start(info.task_name, info.episode_index);
    }

    fn act(&mut self, obs: &Observation) -> Result<String, PolicyError> {
        let action = self.choose(&obs.html);
        Ok(format_action(&action, ActionStyle::Record).expect("record style is total"))
    }
}

/// Replays recorded action texts verbatim, ref numerals included.
#[derive(Debug, Default)]
pub struct ReplayPolicy {
    recordings: BTreeMap<(String, u64), Vec<String>>,
    current: Vec<String>,
    cursor: usize,
    missing: Option<(String, u64)>,
}

impl ReplayPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_trajectories<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut policy = Self::new();
        for t in trajectories {
            policy.record(&t.task, t.episode_seed, t.steps.iter().map(|s| s.action.clone()).collect());
        }
        policy
    }

    pub fn record(&mut self, task: &str, episode: u64, actions: Vec<String>) {
        self.recordings.insert((task.to_string(), episode), actions);
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        "replay"
    }

    fn begin_episode(&mut self, info: &EpisodeInfo<'_>) {
        let key = (info.task_name.to_string(), info.episode_index);
        self.cursor = 0;
        match self.recordings.get(&key) {
            Some(actions) => {
                self.current = actions.clone();
                self.missing = None;
            }
            None => {
                self.current.clear();
                self.missing = Some(key);
            }
        }
    }

    fn act(&mut self, _obs: &Observation) -> Result<String, PolicyError> {
        if let Some((task, episode)) = &self.missing {
            return Err(PolicyError::NoRecording { task: task.clone(), episode: *episode });
        }
        let text = self.current.get(self.cursor).cloned().ok_or(PolicyError::Exhausted(self.cursor))?;
        self.cursor += 1;
        Ok(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub html: String,
    /// Frame files of the observation window, oldest first; `None` marks padding.
    pub frames: Vec<Option<String>>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: String,
    pub episode_seed: u64,
    pub instruction: String,
    pub steps: Vec<Step>,
    pub reward: u8,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Trajectory {
    /// Numeric score on a 0–100 scale.
    pub fn score(&self) -> f64 {
        100.0 * f64::from(self.reward)
    }
}

/// Keeps the items whose score is at least `threshold`, in order.
pub fn filter_by_score<T>(items: impl IntoIterator<Item = (T, f64)>, threshold: f64) -> Vec<(T, f64)> {
    items.into_iter().filter(|(_, score)| *score >= threshold).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub policy: String,
    pub episodes_per_task: u64,
    pub keep_only_success: bool,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub task: String,
    pub episodes: u64,
    pub steps: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTotal {
    pub episodes: u64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub rows: Vec<ManifestRow>,
    pub total: ManifestTotal,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ManifestLine {
    Header(ManifestHeader),
    Task(ManifestRow),
    Total(ManifestTotal),
}

impl Manifest {
    /// Builds rows and totals from per-task `(episodes, steps)` counts.
    pub fn from_counts(header: ManifestHeader, counts: &[(String, u64, u64)]) -> Self {
        let total_episodes: u64 = counts.iter().map(|c| c.1).sum();
        let rows = counts
            .iter()
            .map(|(task, episodes, steps)| ManifestRow {
                task: task.clone(),
                episodes: *episodes,
                steps: *steps,
                ratio: if total_episodes == 0 { 0.0 } else { *episodes as f64 / total_episodes as f64 },
            })
            .collect();
        let total = ManifestTotal { episodes: total_episodes, steps: counts.iter().map(|c| c.2).sum() };
        Self { header, rows, total }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = std::iter::once(ManifestLine::Header(self.header.clone()))
            .chain(self.rows.iter().cloned().map(ManifestLine::Task))
            .chain([ManifestLine::Total(self.total.clone())]);
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("manifest serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, file: &Path) -> Result<Self, DatasetError> {
        let mut header = None;
        let mut rows = Vec::new();
        let mut total = None;
        for (i, line) in text.lines().enumerate() {
            let corrupt = |detail: String| DatasetError::CorruptRecord { file: file.to_path_buf(), line: i + 1, detail };
            match serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))? {
                ManifestLine::Header(h) if header.is_none() => header = Some(h),
                ManifestLine::Task(r) => rows.push(r),
                ManifestLine::Total(t) if total.is_none() => total = Some(t),
                _ => return Err(corrupt("repeated header or total".into())),
            }
        }
        let missing = |what: &str| DatasetError::CorruptRecord {
            file: file.to_path_buf(),
            line: text.lines().count(),
            detail: format!("missing {what} line"),
        };
        Ok(Self { header: header.ok_or_else(|| missing("header"))?, rows, total: total.ok_or_else(|| missing("total"))? })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}:{line}: corrupt record: {detail}")]
    CorruptRecord { file: PathBuf, line: usize, detail: String },
    #[error("missing frame {0}")]
    MissingFrame(PathBuf),
    #[error("manifest disagrees with records: stored {stored:?}, recomputed {recomputed:?}")]
    ManifestMismatch { stored: Box<Manifest>, recomputed: Box<Manifest> },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectOptions {
    pub episodes_per_task: u64,
    pub keep_only_success: bool,
    pub base_seed: u64,
    pub env: EnvConfig,
}

/// Rolls `policy` out over episodes `0..episodes_per_task` of every task and
/// writes the kept trajectories, their frames and the manifest to `out`.
pub fn collect(
    policy: &mut dyn Policy,
    tasks: &[TaskSpec],
    options: &CollectOptions,
    out: &Path,
) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut counts = Vec::with_capacity(tasks.len());
    for task in tasks {
        let file_path = out.join(format!("{}.jsonl", task.name()));
        let mut file = io::BufWriter::new(fs::File::create(&file_path).map_err(io_err(&file_path))?);
        let (mut episodes, mut steps) = (0u64, 0u64);
        for index in 0..options.episodes_per_task {
            let run = run_episode(task, options.base_seed, index, options.env, policy);
            if options.keep_only_success && run.trajectory.status != Status::Success {
                continue;
            }
            for (t, frame) in run.frames.iter().enumerate() {
                let path = out.join(crate::env::frame_path(task.name(), index, t));
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir).map_err(io_err(dir))?;
                }
                fs::write(&path, frame.to_ppm()).map_err(io_err(&path))?;
            }
            let line = serde_json::to_string(&run.trajectory).expect("trajectory serializes");
            writeln!(file, "{line}").map_err(io_err(&file_path))?;
            episodes += 1;
            steps += run.trajectory.steps.len() as u64;
        }
        file.flush().map_err(io_err(&file_path))?;
        log::info!("{}: kept {episodes} episodes, {steps} steps", task.name());
        counts.push((task.name().to_string(), episodes, steps));
    }
    let header = ManifestHeader {
        format_version: FORMAT_VERSION,
        policy: policy.name().to_string(),
        episodes_per_task: options.episodes_per_task,
        keep_only_success: options.keep_only_success,
        base_seed: options.base_seed,
    };
    let manifest = Manifest::from_counts(header, &counts);
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_jsonl()).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Manifest::from_jsonl(&text, &path)
}

/// Reads every trajectory of `task`, checking that referenced frames exist.
pub fn read_task(dir: &Path, task: &str) -> Result<Vec<Trajectory>, DatasetError> {
    let path = dir.join(format!("{task}.jsonl"));
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        let trajectory: Trajectory = serde_json::from_str(&line).map_err(|e| DatasetError::CorruptRecord {
            file: path.clone(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        for frame in trajectory.steps.iter().flat_map(|s| s.frames.iter().flatten()) {
            let frame_path = dir.join(frame);
            if !frame_path.is_file() {
                return Err(DatasetError::MissingFrame(frame_path));
            }
        }
        out.push(trajectory);
    }
    Ok(out)
}

/// Stored manifest plus all trajectories, in manifest row order.
pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Trajectory>), DatasetError> {
    let manifest = read_manifest(dir)?;
    let mut all = Vec::new();
    for row in &manifest.rows {
        all.extend(read_task(dir, &row.task)?);
    }
    Ok((manifest, all))
}

/// Recomputes the manifest from the records on disk. Task files without a
/// stored row are appended in name order.
pub fn dataset_stats(dir: &Path) -> Result<Manifest, DatasetError> {
    let stored = read_manifest(dir)?;
    let mut tasks: Vec<String> = stored.rows.iter().map(|r| r.task.clone()).collect();
    let mut extra = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let name = entry.map_err(io_err(dir))?.file_name().to_string_lossy().into_owned();
        if let Some(task) = name.strip_suffix(".jsonl") {
            if name != MANIFEST_FILE && !tasks.iter().any(|t| t == task) {
                extra.push(task.to_string());
            }
        }
    }
    extra.sort();
    tasks.extend(extra);
    let mut counts = Vec::with_capacity(tasks.len());
    for task in tasks {
        let trajectories = read_task(dir, &task)?;
        let steps = trajectories.iter().map(|t| t.steps.len() as u64).sum();
        counts.push((task, trajectories.len() as u64, steps));
    }
    Ok(Manifest::from_counts(stored.header, &counts))
}

/// Fails unless the stored manifest equals [`dataset_stats`].
pub fn verify_dataset(dir: &Path) -> Result<Manifest, DatasetError> {
    let stored = read_manifest(dir)?;
    let recomputed = dataset_stats(dir)?;
    if stored == recomputed {
        Ok(stored)
    } else {
        Err(DatasetError::ManifestMismatch { stored: Box::new(stored), recomputed: Box::new(recomputed) })
    }
}

/// Parses a recorded step's observed HTML.
pub fn step_tree(step: &Step) -> Option<DomTree> {
    parse_html(&step.html).ok()
}
