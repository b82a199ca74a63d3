//! Frame schema and codec.
//!
//! Every frame is one JSON object on one line, terminated by `\n`, with a
//! `kind` discriminator. Field names are camelCase.

use std::collections::BTreeMap;

use ocsis_core::engine::{DisplayModel, EngineEvent, PilotCommand};
use ocsis_core::model::{FlightPhase, ParamValue, ParameterId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

/// Frames longer than this are rejected without being buffered further.
pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Simulator,
    Ui,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    MalformedFrame,
    UnsupportedVersion,
    UnknownMessageKind,
    HashMismatch,
    HandshakeRequired,
    RoleTaken,
    NotAllowed,
    Engine,
}

/// A change to the sensed parameters. Values not mentioned keep their
/// previous value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateUpdate {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<FlightPhase>,
    #[serde(default)]
    pub assignments: BTreeMap<ParameterId, ParamValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cleared: Vec<ParameterId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", rename_all_fields = "camelCase")]
pub enum WireMessage {
    Hello {
        protocol_version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        procedure_set_hash: Option<String>,
        role: Role,
    },
    StateUpdate(StateUpdate),
    Command {
        command: PilotCommand,
    },
    Event {
        event: EngineEvent,
    },
    Display {
        display: Box<DisplayModel>,
    },
    SnapshotRequest,
    SnapshotReply {
        blob: String,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    /// Advances scenario playback by `ticks` when the pacer is paused.
    Step {
        ticks: u64,
    },
}

pub const KINDS: [&str; 9] = [
    "hello",
    "state_update",
    "command",
    "event",
    "display",
    "snapshot_request",
    "snapshot_reply",
    "error",
    "step",
];

impl WireMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "hello",
            WireMessage::StateUpdate(_) => "state_update",
            WireMessage::Command { .. } => "command",
            WireMessage::Event { .. } => "event",
            WireMessage::Display { .. } => "display",
            WireMessage::SnapshotRequest => "snapshot_request",
            WireMessage::SnapshotReply { .. } => "snapshot_reply",
            WireMessage::Error { .. } => "error",
            WireMessage::Step { .. } => "step",
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        WireMessage::Error { code, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u64),
    #[error("unknown message kind `{0}`")]
    UnknownMessageKind(String),
}

impl WireError {
    pub fn code(&self) -> ErrorCode {
        match self {
            WireError::MalformedFrame(_) => ErrorCode::MalformedFrame,
            WireError::UnsupportedVersion(_) => ErrorCode::UnsupportedVersion,
            WireError::UnknownMessageKind(_) => ErrorCode::UnknownMessageKind,
        }
    }
}

/// One frame including the trailing newline.
pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = serde_json::to_vec(msg).expect("wire messages serialize");
    out.push(b'\n');
    out
}

/// Decodes one frame. A trailing `\n` (and `\r`) is accepted.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let bytes = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let bytes = bytes.strip_suffix(b"\r").unwrap_or(bytes);
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| WireError::MalformedFrame(e.to_string()))?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| WireError::MalformedFrame("missing `kind`".into()))?;
    if !KINDS.contains(&kind) {
        return Err(WireError::UnknownMessageKind(kind.to_string()));
    }
    if kind == "hello" {
        if let Some(v) = value.get("protocolVersion").and_then(|v| v.as_u64()) {
            if v != u64::from(PROTOCOL_VERSION) {
                return Err(WireError::UnsupportedVersion(v));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| WireError::MalformedFrame(e.to_string()))
}

/// Splits a byte stream into frames. Partial input is kept until its
/// newline arrives.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    overflow: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// The next complete frame, decoded. Empty lines are skipped.
    pub fn next_frame(&mut self) -> Option<Result<WireMessage, WireError>> {
        loop {
            let Some(pos) = self.buf.iter().position(|&b| b == b'\n') else {
                if self.buf.len() > MAX_FRAME_LEN {
                    self.buf.clear();
                    self.overflow = true;
                }
                return None;
            };
            let line: Vec<u8> = self.buf.drain(..=pos).collect();
            if std::mem::take(&mut self.overflow) {
                return Some(Err(WireError::MalformedFrame("frame too long".into())));
            }
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            return Some(decode(&line));
        }
    }

    /// Bytes received after the last complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
