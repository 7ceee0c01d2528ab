//! The `webnav` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use webnav_bridge::{random_agent, run_agent, run_session, Client, Connection, FrameMode, Server, ServerConfig, SessionConfig};
use webnav_core::datagen::{collect, read_manifest, read_task, CollectOptions, OraclePolicy, Policy, RandomPolicy, ReplayPolicy};
use webnav_core::env::{run_episode, EnvConfig};
use webnav_core::eval::{run_eval, EvalOptions, EvalReport};
use webnav_core::robustness::{compose_named, PerturbationKind};
use webnav_core::tasks::{register_builtin_tasks, TaskRegistry, TaskSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "webnav", version, about = "Deterministic web-navigation environments and evaluation harness")]
struct Cli {
    /// Base seed for every episode stream.
    #[arg(long, global = true, env = "WEBNAV_BASE_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect the task registry.
    Tasks {
        #[command(subcommand)]
        action: TasksAction,
    },
    /// Roll out a policy and store its demonstrations.
    Collect(CollectArgs),
    /// Measure per-task success rates.
    Eval(EvalArgs),
    /// Re-run a stored episode and print its transcript.
    Replay(ReplayArgs),
    /// Serve evaluation sweeps to remote agents.
    Serve(ServeArgs),
    /// Connect to a server as a builtin agent.
    Agent(AgentArgs),
}

#[derive(Debug, Subcommand)]
enum TasksAction {
    /// Print every registered task name.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyName {
    Oracle,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Perturb {
    Top,
    Bottom,
    Coordinates,
}

impl From<Perturb> for PerturbationKind {
    fn from(p: Perturb) -> Self {
        match p {
            Perturb::Top => PerturbationKind::Top,
            Perturb::Bottom => PerturbationKind::Bottom,
            Perturb::Coordinates => PerturbationKind::Coordinates,
        }
    }
}

#[derive(Debug, Args)]
struct Selection {
    /// Comma-separated task names (default: all builtin tasks).
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    /// Composite task such as click-link_click-dialog; repeatable.
    #[arg(long)]
    compose: Vec<String>,
    /// Perturbation applied to every observation.
    #[arg(long, value_enum)]
    perturb: Option<Perturb>,
}

#[derive(Debug, Args)]
struct CollectArgs {
    #[arg(long, value_enum)]
    policy: PolicyName,
    /// Episodes per task.
    #[arg(long)]
    episodes: u64,
    /// Keep only successful episodes.
    #[arg(long)]
    filter_success: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    selection: Selection,
}

#[derive(Debug, Args)]
struct WireArgs {
    /// Seconds to wait for each action.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Shared directory for frame files referenced from observations.
    #[arg(long, conflicts_with = "inline_frames")]
    frames_dir: Option<PathBuf>,
    /// Embed frames in observations as base64 PPM.
    #[arg(long)]
    inline_frames: bool,
}

impl WireArgs {
    fn session(&self) -> SessionConfig {
        let frames = match (&self.frames_dir, self.inline_frames) {
            (Some(dir), _) => FrameMode::Shared(dir.clone()),
            (None, true) => FrameMode::Inline,
            (None, false) => FrameMode::None,
        };
        SessionConfig { act_timeout: Duration::from_secs(self.timeout), frames }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["policy", "bridge"])))]
struct EvalArgs {
    /// Builtin policy to evaluate.
    #[arg(long, value_enum)]
    policy: Option<PolicyName>,
    /// Listen on ADDR and evaluate the first agent that connects.
    #[arg(long, value_name = "ADDR")]
    bridge: Option<String>,
    #[arg(long, default_value_t = 100)]
    episodes: u64,
    /// Directory for report.jsonl and report.txt.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    selection: Selection,
    #[command(flatten)]
    wire: WireArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    task: String,
    /// Episode index within the task; defaults to the value of `--seed`.
    #[arg(long)]
    episode: Option<u64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// `host:port`, or `stdio` for standard streams.
    #[arg(long)]
    listen: String,
    #[arg(long, default_value_t = 100)]
    episodes: u64,
    /// Directory receiving one report per finished session.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    selection: Selection,
    #[command(flatten)]
    wire: WireArgs,
}

#[derive(Debug, Args)]
struct AgentArgs {
    #[arg(long, value_name = "ADDR")]
    connect: String,
    #[arg(long, value_enum, default_value = "random")]
    policy: AgentPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentPolicy {
    Random,
}

/// Argument problems found after parsing, reported like clap's own errors.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

struct Plan {
    tasks: Vec<TaskSpec>,
    composition: Vec<String>,
    env: EnvConfig,
}

fn plan(registry: &TaskRegistry, selection: &Selection) -> Result<Plan> {
    let mut tasks = Vec::new();
    for name in &selection.tasks {
        tasks.push(registry.get(name).map_err(|e| usage(format!("--tasks: {e}")))?);
    }
    for name in &selection.compose {
        let composite = compose_named(registry, name).map_err(|e| usage(format!("--compose {name}: {e}")))?;
        tasks.push(Arc::new(composite) as TaskSpec);
    }
    if tasks.is_empty() {
        tasks = registry.tasks().to_vec();
    }
    Ok(Plan {
        tasks,
        composition: selection.compose.clone(),
        env: EnvConfig { perturbation: selection.perturb.map(Into::into), ..EnvConfig::default() },
    })
}

fn builtin_policy(name: PolicyName, seed: u64) -> Box<dyn Policy> {
    match name {
        PolicyName::Oracle => Box::new(OraclePolicy::new()),
        PolicyName::Random => Box::new(RandomPolicy::new(seed)),
    }
}

fn write_report(report: &EvalReport, dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    if let Some(dir) = dir {
        report.write(dir).with_context(|| format!("writing report to {}", dir.display()))?;
    }
    out.write_all(report.to_table().as_bytes())?;
    Ok(())
}

fn cmd_collect(seed: u64, args: &CollectArgs, out: &mut dyn Write) -> Result<()> {
    let registry = register_builtin_tasks();
    let plan = plan(&registry, &args.selection)?;
    let mut policy = builtin_policy(args.policy, seed);
    let options = CollectOptions {
        episodes_per_task: args.episodes,
        keep_only_success: args.filter_success,
        base_seed: seed,
        env: plan.env,
    };
    let manifest = collect(policy.as_mut(), &plan.tasks, &options, &args.out)
        .with_context(|| format!("collecting into {}", args.out.display()))?;
    let width = manifest.rows.iter().map(|r| r.task.len()).max().unwrap_or(0).max("total".len());
    writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>7}", "task", "episodes", "steps", "ratio")?;
    for row in &manifest.rows {
        writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>7.4}", row.task, row.episodes, row.steps, row.ratio)?;
    }
    writeln!(out, "{:<width$}  {:>8}  {:>8}", "total", manifest.total.episodes, manifest.total.steps)?;
    Ok(())
}

fn cmd_eval(seed: u64, args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let registry = register_builtin_tasks();
    let plan = plan(&registry, &args.selection)?;
    let options = EvalOptions {
        episodes_per_task: args.episodes,
        base_seed: seed,
        env: plan.env,
        composition: plan.composition,
    };
    let report = match (&args.policy, &args.bridge) {
        (Some(name), _) => run_eval(builtin_policy(*name, seed).as_mut(), &plan.tasks, &options).0,
        (None, Some(addr)) => {
            let config = ServerConfig { tasks: plan.tasks, eval: options, session: args.wire.session() };
            let server = Server::bind(addr, config).with_context(|| format!("binding {addr}"))?;
            log::info!("waiting for an agent on {}", server.local_addr()?);
            server.accept_one().context("bridge session failed")?.0
        }
        (None, None) => unreachable!("clap requires a policy source"),
    };
    write_report(&report, args.report.as_deref(), out)
}

fn cmd_replay(seed: u64, args: &ReplayArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = read_manifest(&args.dataset)?;
    let registry = register_builtin_tasks();
    let task = registry.get(&args.task).map_err(|e| usage(format!("--task: {e}")))?;
    let episodes = read_task(&args.dataset, &args.task)?;
    let episode = args.episode.unwrap_or(seed);
    let stored = episodes
        .iter()
        .find(|t| t.episode_seed == episode)
        .ok_or_else(|| anyhow!("{} has no stored episode {episode}", args.task))?;
    let mut replay = ReplayPolicy::from_trajectories([stored]);
    let rerun = run_episode(&task, manifest.header.base_seed, episode, EnvConfig::default(), &mut replay);
    writeln!(out, "task: {}  episode: {episode}", stored.task)?;
    writeln!(out, "instruction: {}", stored.instruction)?;
    for (i, step) in rerun.trajectory.steps.iter().enumerate() {
        writeln!(out, "step {i}: {}", step.action)?;
    }
    let t = &rerun.trajectory;
    writeln!(out, "reward: {} ({})", t.reward, t.status)?;
    if let Some(d) = &t.diagnostic {
        writeln!(out, "diagnostic: {d}")?;
    }
    if (t.reward, t.status) != (stored.reward, stored.status) {
        bail!("replay ended with {} but the dataset recorded {}", t.status, stored.status);
    }
    Ok(())
}

fn cmd_serve(seed: u64, args: &ServeArgs, err: &mut dyn Write) -> Result<()> {
    let registry = register_builtin_tasks();
    let plan = plan(&registry, &args.selection)?;
    let options = EvalOptions {
        episodes_per_task: args.episodes,
        base_seed: seed,
        env: plan.env,
        composition: plan.composition,
    };
    let config = ServerConfig { tasks: plan.tasks, eval: options, session: args.wire.session() };
    if args.listen == "stdio" {
        let (report, _) = run_session(Connection::stdio(), &config, Default::default())?;
        return write_report(&report, args.report.as_deref(), err);
    }
    let server = Server::bind(&args.listen, config).with_context(|| format!("binding {}", args.listen))?;
    writeln!(err, "listening on {}", server.local_addr()?)?;
    let report_dir = args.report.clone();
    let sessions = std::sync::atomic::AtomicU64::new(0);
    server.serve_forever(move |outcome| match outcome {
        Ok((report, _)) => {
            let n = sessions.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            log::info!("session {n} finished: average {:.4}", report.average);
            if let Some(dir) = &report_dir {
                if let Err(e) = report.write(&dir.join(format!("session-{n}"))) {
                    log::error!("could not write report: {e}");
                }
            }
        }
        Err(e) => log::warn!("session ended: {e}"),
    })?;
    Ok(())
}

fn cmd_agent(seed: u64, args: &AgentArgs, out: &mut dyn Write) -> Result<()> {
    let mut client = Client::connect(&args.connect).with_context(|| format!("connecting to {}", args.connect))?;
    let summary = match args.policy {
        AgentPolicy::Random => run_agent(&mut client, random_agent(seed))?,
    };
    writeln!(out, "episodes: {}  successes: {}", summary.episodes, summary.successes)?;
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Tasks { action: TasksAction::List } => {
            for name in register_builtin_tasks().names() {
                writeln!(out, "{name}")?;
            }
            Ok(())
        }
        Command::Collect(args) => cmd_collect(cli.seed, args, out),
        Command::Eval(args) => cmd_eval(cli.seed, args, out),
        Command::Replay(args) => cmd_replay(cli.seed, args, out),
        Command::Serve(args) => cmd_serve(cli.seed, args, err),
        Command::Agent(args) => cmd_agent(cli.seed, args, out),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) if e.is::<UsageError>() => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
