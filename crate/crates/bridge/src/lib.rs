//! Newline-delimited JSON bridge between webnav environments and external
//! agents, over TCP or standard streams.

pub mod client;
pub mod protocol;
pub mod server;
pub mod transport;

pub use client::{random_agent, run_agent, AgentSummary, Client};
pub use protocol::{ErrorCode, FrameBlock, Message, ObsPayload, PROTOCOL_VERSION};
pub use server::{run_session, BridgeError, FrameMode, Server, ServerConfig, Session, SessionConfig};
pub use transport::Connection;
