// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced while parsing identities or decoding wire data.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed uuid: {0}")]
    MalformedUuid(String),
    #[error("truncated frame: need {need} octets, have {have}")]
    TruncatedFrame { need: usize, have: usize },
    #[error("frame length field {declared} disagrees with buffer ({actual} octets follow)")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownMsgType(u8),
    #[error("unknown return code 0x{0:08x}")]
    UnknownReturnCode(u32),
    #[error("unknown parameter tag 0x{0:02x}")]
    UnknownParameterTag(u8),
    #[error("truncated payload while reading {0}")]
    TruncatedPayload(&'static str),
    #[error("trailing {0} octets after payload")]
    TrailingBytes(usize),
    #[error("memref length {len} exceeds declared capacity {capacity}")]
    CapacityExceeded { len: usize, capacity: usize },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("message type mismatch: expected {expected:?}, got 0x{got:02x}")]
    UnexpectedMsgType { expected: crate::frame::MsgType, got: u8 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for WireError {
    fn from(e: std::io::Error) -> Self {
        WireError::Io(e.to_string())
    }
}
