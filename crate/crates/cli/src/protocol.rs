//! Bridge message schema and framing. Each frame is a big-endian `u32`
//! payload length followed by one CBOR-encoded message; over the socket
//! one binary message carries exactly one frame. `docs/bridge.cddl`
//! documents the schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Frames above this size are refused unread.
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame shorter than its length prefix")]
    Short,
    #[error("frame length {0} exceeds the limit")]
    TooLarge(usize),
    #[error("{0} trailing bytes after the payload")]
    Trailing(usize),
    #[error("payload: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Teleop,
    Policy,
}

/// A TAP named by library id or by exact name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapRef {
    Id(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        schema_version: u32,
        client: String,
    },
    /// Operator motion for the next tick, before gains.
    Teleop {
        translation: [f64; 3],
        rotation: [f64; 3],
        gripper: f64,
    },
    TapTrigger {
        tap: TapRef,
    },
    TextCommand {
        text: String,
    },
    GainChange {
        translation: f64,
        rotation: f64,
    },
    ModeSwitch {
        mode: Mode,
    },
    ResetRequest {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub position: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub orientation: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMsg {
    pub id: String,
    pub kind: String,
    pub pose: PoseMsg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTapMsg {
    pub id: usize,
    pub name: String,
    /// Routine step index, for routines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapInfo {
    pub id: usize,
    pub name: String,
    pub kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Accepted,
    Discarded,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        schema_version: u32,
        task: String,
        control_period: f64,
    },
    StateSnapshot {
        tick: u64,
        mode: Mode,
        ee: PoseMsg,
        gripper: f64,
        objects: Vec<ObjectMsg>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        active_tap: Option<ActiveTapMsg>,
        locked_axes: Vec<String>,
        gain: [f64; 2],
    },
    TapAck {
        status: AckStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tap: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        /// Edit distance of the matched phrase, for text commands.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distance: Option<usize>,
    },
    EpisodeEnd {
        success: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        ticks: u64,
        /// Dataset file the demonstration was saved to, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        saved: Option<String>,
    },
    VocabularyList {
        taps: Vec<TapInfo>,
        phrases: Vec<String>,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            message: message.into(),
        }
    }

    pub fn is_snapshot(&self) -> bool {
        matches!(self, ServerMessage::StateSnapshot { .. })
    }
}

pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    let mut payload = Vec::new();
    ciborium::into_writer(msg, &mut payload).expect("message encodes");
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn decode<T: for<'de> Deserialize<'de>>(frame: &[u8]) -> Result<T, FrameError> {
    let Some(head) = frame.get(..4) else {
        return Err(FrameError::Short);
    };
    let len = u32::from_be_bytes(head.try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let body = &frame[4..];
    if body.len() < len {
        return Err(FrameError::Short);
    }
    if body.len() > len {
        return Err(FrameError::Trailing(body.len() - len));
    }
    ciborium::from_reader(body).map_err(|e| FrameError::Payload(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_matches_payload() {
        let f = encode(&ClientMessage::ResetRequest { seed: 9 });
        assert_eq!(u32::from_be_bytes(f[..4].try_into().unwrap()) as usize, f.len() - 4);
    }

    #[test]
    fn truncated_and_padded_frames_fail() {
        let mut f = encode(&ClientMessage::TextCommand {
            text: "lock x axis".into(),
        });
        assert!(matches!(
            decode::<ClientMessage>(&f[..f.len() - 1]),
            Err(FrameError::Short)
        ));
        f.push(0);
        assert!(matches!(decode::<ClientMessage>(&f), Err(FrameError::Trailing(1))));
        assert!(matches!(decode::<ClientMessage>(&[0, 0]), Err(FrameError::Short)));
    }

    #[test]
    fn wrong_shape_is_payload_error() {
        let f = encode(&ServerMessage::error("x"));
        assert!(matches!(decode::<ClientMessage>(&f), Err(FrameError::Payload(_))));
    }
}
