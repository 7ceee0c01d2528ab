//! Environment side of the bridge: observations out, actions in.

use std::fs;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use thiserror::Error;
use webnav_core::datagen::{EpisodeInfo, Policy, PolicyError, Trajectory};
use webnav_core::env::{frame_path, Observation, Status};
use webnav_core::eval::{run_eval, EvalOptions, EvalReport};
use webnav_core::tasks::TaskSpec;

use crate::protocol::{decode, encode, ErrorCode, FrameBlock, Message, ObsPayload, PROTOCOL_VERSION};
use crate::transport::{Connection, Recv};

pub const DEFAULT_ACT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("version mismatch: expected {expected:?}, peer sent {found:?}")]
    VersionMismatch { expected: String, found: String },
    #[error("peer did not answer within {0:?}")]
    Timeout(Duration),
    #[error("connection closed")]
    Closed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum FrameMode {
    #[default]
    None,
    /// Writes frames under this directory and sends their relative paths.
    Shared(PathBuf),
    /// Sends each frame inline as a base64 PPM.
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    pub act_timeout: Duration,
    pub frames: FrameMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { act_timeout: DEFAULT_ACT_TIMEOUT, frames: FrameMode::None }
    }
}

/// A connected agent after a successful handshake.
pub struct Session {
    conn: Connection,
    config: SessionConfig,
    violations: Arc<AtomicU64>,
    closed: Option<String>,
}

impl Session {
    /// Waits for the agent's hello and answers it.
    pub fn accept(mut conn: Connection, config: SessionConfig, violations: Arc<AtomicU64>) -> Result<Self, BridgeError> {
        let line = match conn.recv(Some(config.act_timeout)) {
            Recv::Line(line) => line,
            Recv::Timeout => return Err(BridgeError::Timeout(config.act_timeout)),
            Recv::Closed => return Err(BridgeError::Closed),
        };
        let mut session = Self { conn, config, violations, closed: None };
        match decode(&line) {
            Ok(Message::Hello { version }) if version == PROTOCOL_VERSION => {
                session.send(&Message::hello())?;
                Ok(session)
            }
            Ok(Message::Hello { version }) => {
                let message = format!("server speaks version {PROTOCOL_VERSION}, got {version:?}");
                session.fail(ErrorCode::VersionMismatch, &message);
                Err(BridgeError::VersionMismatch { expected: PROTOCOL_VERSION.into(), found: version })
            }
            Ok(other) => Err(session.violation(format!("expected hello, got {}", other.kind()))),
            Err(e) => Err(session.violation(format!("unreadable handshake: {e}"))),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed.is_some()
    }

    fn send(&mut self, message: &Message) -> Result<(), BridgeError> {
        self.conn.send_line(&encode(message)).map_err(BridgeError::from)
    }

    fn fail(&mut self, code: ErrorCode, message: &str) {
        log::warn!("closing session: {message}");
        let _ = self.send(&Message::Error { code, message: message.to_string() });
        self.conn.close();
        self.closed = Some(message.to_string());
    }

    fn violation(&mut self, message: String) -> BridgeError {
        self.violations.fetch_add(1, Ordering::SeqCst);
        self.fail(ErrorCode::ProtocolViolation, &message);
        BridgeError::ProtocolViolation(message)
    }

    /// Sends one observation and waits for its single answer.
    pub fn exchange(&mut self, obs: ObsPayload) -> Result<String, BridgeError> {
        if let Some(reason) = &self.closed {
            return Err(BridgeError::ProtocolViolation(format!("session closed: {reason}")));
        }
        if self.conn.has_pending() {
            return Err(self.violation("message received before the observation was sent".into()));
        }
        self.send(&Message::Obs(obs))?;
        match self.conn.recv(Some(self.config.act_timeout)) {
            Recv::Line(line) => match decode(&line) {
                Ok(Message::Act { action }) => Ok(action),
                Ok(other) => Err(self.violation(format!("expected act, got {}", other.kind()))),
                Err(e) => Err(self.violation(format!("unreadable message: {e}"))),
            },
            Recv::Timeout => {
                let timeout = self.config.act_timeout;
                self.fail(ErrorCode::Timeout, &format!("no act within {timeout:?}"));
                Err(BridgeError::Timeout(timeout))
            }
            Recv::Closed => {
                self.closed = Some("peer closed the connection".into());
                Err(BridgeError::Closed)
            }
        }
    }

    pub fn report_result(&mut self, reward: u8, status: Status) {
        if self.closed.is_none() {
            let _ = self.send(&Message::Result { reward, status });
        }
    }

    pub fn close(&mut self) {
        self.conn.close();
        self.closed.get_or_insert_with(|| "finished".into());
    }
}

/// Adapts a [`Session`] into a [`Policy`] so the ordinary evaluation loop
/// can drive a remote agent.
pub struct RemotePolicy {
    session: Session,
    task: String,
    episode: u64,
}

impl RemotePolicy {
    pub fn new(session: Session) -> Self {
        Self { session, task: String::new(), episode: 0 }
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    fn frames(&self, obs: &Observation) -> io::Result<Option<FrameBlock>> {
        match &self.session.config.frames {
            FrameMode::None => Ok(None),
            FrameMode::Inline => Ok(Some(FrameBlock::PpmBase64(
                obs.frames.iter().map(|f| STANDARD.encode(f.to_ppm())).collect(),
            ))),
            FrameMode::Shared(dir) => {
                let history = obs.frames.len();
                let mut paths = Vec::with_capacity(history);
                for (i, frame) in obs.frames.iter().enumerate() {
                    let back = history - 1 - i;
                    let Some(step) = obs.step_index.checked_sub(back) else { continue };
                    let rel = frame_path(&self.task, self.episode, step);
                    let path = dir.join(&rel);
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    fs::write(&path, frame.to_ppm())?;
                    paths.push(rel);
                }
                Ok(Some(FrameBlock::Paths(paths)))
            }
        }
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> &str {
        "bridge"
    }

    fn begin_episode(&mut self, info: &EpisodeInfo<'_>) {
        self.task = info.task_name.to_string();
        self.episode = info.episode_index;
    }

    fn act(&mut self, obs: &Observation) -> Result<String, PolicyError> {
        let frames = self.frames(obs).map_err(|e| PolicyError::Remote(format!("frame export failed: {e}")))?;
        let payload = ObsPayload {
            task: self.task.clone(),
            episode: self.episode,
            instruction: obs.instruction.clone(),
            html: obs.html.clone(),
            action_history: obs.action_history.clone(),
            step_index: obs.step_index,
            frames,
        };
        self.session.exchange(payload).map_err(|e| PolicyError::Remote(e.to_string()))
    }

    fn end_episode(&mut self, reward: u8, status: Status) {
        self.session.report_result(reward, status);
    }
}

/// What gets evaluated on every connection.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub tasks: Vec<TaskSpec>,
    pub eval: EvalOptions,
    pub session: SessionConfig,
}

/// Handshakes on `conn` and runs the full sweep against the remote agent.
pub fn run_session(
    conn: Connection,
    config: &ServerConfig,
    violations: Arc<AtomicU64>,
) -> Result<(EvalReport, Vec<Trajectory>), BridgeError> {
    let session = Session::accept(conn, config.session.clone(), violations)?;
    let mut policy = RemotePolicy::new(session);
    let result = run_eval(&mut policy, &config.tasks, &config.eval);
    policy.into_session().close();
    Ok(result)
}

/// TCP front end; each accepted connection runs one sweep on its own thread.
pub struct Server {
    listener: TcpListener,
    config: Arc<ServerConfig>,
    violations: Arc<AtomicU64>,
}

impl Server {
    pub fn bind(addr: &str, config: ServerConfig) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config: Arc::new(config),
            violations: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Protocol violations seen across all sessions so far.
    pub fn protocol_violations(&self) -> u64 {
        self.violations.load(Ordering::SeqCst)
    }

    pub fn violation_counter(&self) -> Arc<AtomicU64> {
        self.violations.clone()
    }

    fn connection(&self) -> Result<Connection, BridgeError> {
        let (stream, peer) = self.listener.accept()?;
        log::info!("agent connected from {peer}");
        Ok(Connection::tcp(stream)?)
    }

    /// Serves exactly one connection on the calling thread.
    pub fn accept_one(&self) -> Result<(EvalReport, Vec<Trajectory>), BridgeError> {
        let conn = self.connection()?;
        run_session(conn, &self.config, self.violations.clone())
    }

    /// Serves connections until the listener fails, calling `done` with each
    /// session's outcome.
    pub fn serve_forever<F>(&self, done: F) -> io::Result<()>
    where
        F: Fn(Result<(EvalReport, Vec<Trajectory>), BridgeError>) + Send + Sync + 'static,
    {
        let done = Arc::new(done);
        loop {
            let (stream, peer) = self.listener.accept()?;
            log::info!("agent connected from {peer}");
            let config = self.config.clone();
            let violations = self.violations.clone();
            let done = done.clone();
            thread::spawn(move || {
                let outcome = tcp_session(stream, &config, violations);
                done(outcome);
            });
        }
    }
}

fn tcp_session(
    stream: TcpStream,
    config: &ServerConfig,
    violations: Arc<AtomicU64>,
) -> Result<(EvalReport, Vec<Trajectory>), BridgeError> {
    run_session(Connection::tcp(stream)?, config, violations)
}
