//! Agent side of the bridge, used by the `agent` command and loopback tests.

use std::net::TcpStream;
use std::time::Duration;

use webnav_core::actions::{format_action, ActionStyle};
use webnav_core::datagen::RandomPolicy;

use crate::protocol::{decode, encode, Message, ObsPayload, PROTOCOL_VERSION};
use crate::server::BridgeError;
use crate::transport::{Connection, Recv};

pub struct Client {
    conn: Connection,
}

impl Client {
    /// Connects and completes the handshake advertising `version`.
    pub fn connect_with_version(addr: &str, version: &str) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(addr)?;
        let mut client = Self { conn: Connection::tcp(stream)? };
        client.send(&Message::Hello { version: version.to_string() })?;
        match client.recv(None)? {
            Some(Message::Hello { version: theirs }) if theirs == version => Ok(client),
            Some(Message::Hello { version: theirs }) | Some(Message::Error { message: theirs, .. }) => {
                Err(BridgeError::VersionMismatch { expected: version.to_string(), found: theirs })
            }
            Some(other) => Err(BridgeError::ProtocolViolation(format!("expected hello, got {}", other.kind()))),
            None => Err(BridgeError::Closed),
        }
    }

    pub fn connect(addr: &str) -> Result<Self, BridgeError> {
        Self::connect_with_version(addr, PROTOCOL_VERSION)
    }

    pub fn send(&mut self, message: &Message) -> Result<(), BridgeError> {
        Ok(self.conn.send_line(&encode(message))?)
    }

    /// Next message, or `None` once the server has closed the connection.
    pub fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Message>, BridgeError> {
        match self.conn.recv(timeout) {
            Recv::Line(line) => decode(&line)
                .map(Some)
                .map_err(|e| BridgeError::ProtocolViolation(format!("unreadable message: {e}"))),
            Recv::Timeout => Err(BridgeError::Timeout(timeout.unwrap_or_default())),
            Recv::Closed => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentSummary {
    pub episodes: u64,
    pub successes: u64,
}

/// Answers observations until the server hangs up.
pub fn run_agent(client: &mut Client, mut act: impl FnMut(&ObsPayload) -> String) -> Result<AgentSummary, BridgeError> {
    let mut summary = AgentSummary::default();
    while let Some(message) = client.recv(None)? {
        match message {
            Message::Obs(obs) => client.send(&Message::act(act(&obs)))?,
            Message::Result { reward, .. } => {
                summary.episodes += 1;
                summary.successes += u64::from(reward);
            }
            Message::Error { code, message } => {
                return Err(BridgeError::ProtocolViolation(format!("server error {code:?}: {message}")));
            }
            other => return Err(BridgeError::ProtocolViolation(format!("unexpected {}", other.kind()))),
        }
    }
    Ok(summary)
}

/// The in-process random policy, driven remotely: reseeded at every
/// episode start from `(seed, task, episode)`.
pub fn random_agent(seed: u64) -> impl FnMut(&ObsPayload) -> String {
    let mut policy = RandomPolicy::new(seed);
    move |obs| {
        if obs.step_index == 0 {
            policy.start(&obs.task, obs.episode);
        }
        format_action(&policy.choose(&obs.html), ActionStyle::Record).expect("record style is total")
    }
}
