//! Message definitions and line codec.
//!
//! One JSON object per line, UTF-8, tagged by `type`:
//!
//! ```text
//! client: {"type":"hello","version":"1"}
//! server: {"type":"hello","version":"1"}
//! server: {"type":"obs","task":"click-test","episode":0,"instruction":"Click the button.","html":"<body ref=\"1\">…</body>","action_history":[],"step_index":0}
//! client: {"type":"act","action":"{\"action\": \"click\", \"ref\": \"4\"}"}
//! server: {"type":"result","reward":1,"status":"success"}
//! ```

use serde::{Deserialize, Serialize};
use webnav_core::env::Status;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ProtocolViolation,
    VersionMismatch,
    Timeout,
}

/// How frames travel with an observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "encoding", content = "data", rename_all = "kebab-case")]
pub enum FrameBlock {
    /// Paths relative to the server's shared frame directory, oldest first.
    Paths(Vec<String>),
    /// Base64-encoded binary PPM files, oldest first.
    PpmBase64(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsPayload {
    pub task: String,
    pub episode: u64,
    pub instruction: String,
    pub html: String,
    pub action_history: Vec<String>,
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FrameBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello { version: String },
    Obs(ObsPayload),
    Act { action: String },
    Result { reward: u8, status: Status },
    Error { code: ErrorCode, message: String },
}

impl Message {
    pub fn hello() -> Self {
        Message::Hello { version: PROTOCOL_VERSION.to_string() }
    }

    pub fn act(action: impl Into<String>) -> Self {
        Message::Act { action: action.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Obs(_) => "obs",
            Message::Act { .. } => "act",
            Message::Result { .. } => "result",
            Message::Error { .. } => "error",
        }
    }
}

/// One line without the trailing newline.
pub fn encode(message: &Message) -> String {
    serde_json::to_string(message).expect("messages serialize")
}

pub fn decode(line: &str) -> Result<Message, serde_json::Error> {
    serde_json::from_str(line.trim_end_matches(['\r', '\n']))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_shapes() {
        assert_eq!(encode(&Message::hello()), r#"{"type":"hello","version":"1"}"#);
        let act = Message::act(r#"{"action": "click", "ref": "2"}"#);
        assert_eq!(encode(&act), r#"{"type":"act","action":"{\"action\": \"click\", \"ref\": \"2\"}"}"#);
        assert_eq!(
            encode(&Message::Result { reward: 1, status: Status::Success }),
            r#"{"type":"result","reward":1,"status":"success"}"#
        );
        let err = Message::Error { code: ErrorCode::ProtocolViolation, message: "x".into() };
        assert_eq!(encode(&err), r#"{"type":"error","code":"protocol_violation","message":"x"}"#);
    }

    #[test]
    fn obs_round_trips_with_and_without_frames() {
        let mut obs = ObsPayload {
            task: "click-test".into(),
            episode: 3,
            instruction: "Click the button.".into(),
            html: "<body ref=\"1\"></body>".into(),
            action_history: vec![],
            step_index: 0,
            frames: None,
        };
        let line = encode(&Message::Obs(obs.clone()));
        assert!(!line.contains("frames"));
        assert_eq!(decode(&line).unwrap(), Message::Obs(obs.clone()));
        obs.frames = Some(FrameBlock::Paths(vec!["click-test/3/0.ppm".into()]));
        let line = encode(&Message::Obs(obs.clone()));
        assert!(line.contains(r#""frames":{"encoding":"paths","data":["click-test/3/0.ppm"]}"#));
        assert_eq!(decode(&(line + "\n")).unwrap(), Message::Obs(obs));
    }

    #[test]
    fn unknown_types_are_rejected() {
        assert!(decode(r#"{"type":"bye"}"#).is_err());
        assert!(decode("not json").is_err());
    }
}
