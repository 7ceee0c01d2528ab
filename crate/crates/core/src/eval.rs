//! Evaluation sweeps and success-rate reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{Policy, Trajectory};
use crate::env::{run_episode, EnvConfig};
use crate::tasks::TaskSpec;

pub const REPORT_JSONL: &str = "report.jsonl";
pub const REPORT_TABLE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: String,
    pub episodes: u64,
    pub successes: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub episodes_per_task: u64,
    pub base_seed: u64,
    pub perturbation: Option<String>,
    pub composition: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<TaskRow>,
    /// Unweighted mean of the per-task rates.
    pub average: f64,
    pub config: ConfigEcho,
}

/// Result of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeOutcome {
    pub task: String,
    pub episode: u64,
    pub reward: u8,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ReportLine<'a> {
    Config(&'a ConfigEcho),
    Task(&'a TaskRow),
    Average { average: f64, tasks: usize },
}

impl EvalReport {
    /// Reduces outcomes in any completion order. Rows follow `task_order`;
    /// a repeated `(task, episode)` keeps its last outcome.
    pub fn from_outcomes(task_order: &[String], outcomes: &[EpisodeOutcome], config: ConfigEcho) -> Self {
        let mut by_task: BTreeMap<&str, BTreeMap<u64, u8>> = BTreeMap::new();
        for o in outcomes {
            by_task.entry(&o.task).or_default().insert(o.episode, o.reward);
        }
        let rows: Vec<TaskRow> = task_order
            .iter()
            .map(|task| {
                let episodes = by_task.get(task.as_str());
                let n = episodes.map_or(0, |e| e.len() as u64);
                let successes = episodes.map_or(0, |e| e.values().filter(|&&r| r == 1).count() as u64);
                let success_rate = if n == 0 { 0.0 } else { successes as f64 / n as f64 };
                TaskRow { task: task.clone(), episodes: n, successes, success_rate }
            })
            .collect();
        let average = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.success_rate).sum::<f64>() / rows.len() as f64
        };
        Self { rows, average, config }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = std::iter::once(ReportLine::Config(&self.config))
            .chain(self.rows.iter().map(ReportLine::Task))
            .chain([ReportLine::Average { average: self.average, tasks: self.rows.len() }]);
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("report serializes"));
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.task.len()).chain(["average".len(), "task".len()]).max().unwrap_or(4);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>9}  {:>7}", "task", "episodes", "successes", "rate");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>9}  {:>7.2}",
                r.task, r.episodes, r.successes, r.success_rate
            );
        }
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>9}  {:>7.2}", "average", "", "", self.average);
        out
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(REPORT_JSONL), self.to_jsonl())?;
        fs::write(dir.join(REPORT_TABLE), self.to_table())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub episodes_per_task: u64,
    pub base_seed: u64,
    pub env: EnvConfig,
    /// Composite names being evaluated, echoed into the report.
    pub composition: Vec<String>,
}

impl EvalOptions {
    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            episodes_per_task: self.episodes_per_task,
            base_seed: self.base_seed,
            perturbation: self.env.perturbation.map(|p| p.to_string()),
            composition: self.composition.clone(),
        }
    }
}

/// Runs `policy` over episodes `0..N` of every task. Episode failures of any
/// kind are counted, never fatal.
pub fn run_eval(policy: &mut dyn Policy, tasks: &[TaskSpec], options: &EvalOptions) -> (EvalReport, Vec<Trajectory>) {
    let mut outcomes = Vec::new();
    let mut trajectories = Vec::new();
    for task in tasks {
        for index in 0..options.episodes_per_task {
            let run = run_episode(task, options.base_seed, index, options.env, policy);
            outcomes.push(EpisodeOutcome { task: task.name().to_string(), episode: index, reward: run.trajectory.reward });
            trajectories.push(run.trajectory);
        }
    }
    let order: Vec<String> = tasks.iter().map(|t| t.name().to_string()).collect();
    (EvalReport::from_outcomes(&order, &outcomes, options.echo()), trajectories)
}
